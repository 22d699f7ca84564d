"""Measurement reduction: covariance assembly, Monte Carlo resampling and mode extraction."""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError, DataError, InvalidStateError
from .state import CovarianceState, from_db
from .traces import QuadratureLevels, TraceBundle, shape_order, synthesize_trace

UNPHYSICAL_WARN_NU = 0.8


class UnphysicalStateWarning(UserWarning):
    pass


def pair_covariance(s, v_i, v_j, p_i, p_j, sign: float = 1.0):
    """Cross term <x_i x_j> from the noise ``s`` of the combined LO shape.

    The combined shape adds band j with relative sign ``sign`` (use -1 for a
    pi-shifted band). All inputs broadcast.
    """
    tot = p_i + p_j
    return sign * (s - p_i / tot * v_i - p_j / tot * v_j) * tot / (2 * np.sqrt(p_i * p_j))


def pair_noise(c_ij, v_i, v_j, p_i, p_j, sign: float = 1.0):
    """Inverse of :func:`pair_covariance`: noise seen by the combined LO shape."""
    tot = p_i + p_j
    return (p_i * v_i + p_j * v_j + 2 * sign * np.sqrt(p_i * p_j) * c_ij) / tot


def assemble_blocks(levels: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """Covariance block(s) from a (..., n, n) array of shape noise levels."""
    levels = np.asarray(levels, dtype=float)
    v = np.diagonal(levels, axis1=-2, axis2=-1)
    p = np.asarray(powers, dtype=float)
    c = pair_covariance(levels, v[..., :, None], v[..., None, :], p[:, None], p[None, :])
    n = len(p)
    idx = np.arange(n)
    c[..., idx, idx] = v
    return c


def assemble_from_levels(x_levels, p_levels, powers) -> CovarianceState:
    return CovarianceState(assemble_blocks(x_levels, powers), assemble_blocks(p_levels, powers))


def _warn_if_unphysical(state: CovarianceState) -> CovarianceState:
    try:
        nu = float(state.symplectic_eigenvalues().min())
    except InvalidStateError:
        nu = float("nan")
    if not nu >= UNPHYSICAL_WARN_NU:
        warnings.warn(
            f"assembled covariance is strongly unphysical (min symplectic eigenvalue {nu:.4g}); "
            f"diagonal Cx={np.diag(state.cx).round(4).tolist()} Cp={np.diag(state.cp).round(4).tolist()}",
            UnphysicalStateWarning,
            stacklevel=3,
        )
    return state.with_meta(min_symplectic=nu)


def assemble_covariance(bundle: TraceBundle, **level_kwargs) -> CovarianceState:
    """Covariance of the mean trace levels, x from valleys and p from peaks after alignment."""
    lv = bundle.levels(**level_kwargs)
    state = assemble_from_levels(lv.x_mean, lv.p_mean, lv.powers)
    return _warn_if_unphysical(state)


def two_band_state(
    excess_db: float = 3.4,
    sum_x_db: float = -3.2,
    diff_p_db: float = -3.3,
    powers=(1.0, 1.0),
) -> CovarianceState:
    """Two-band state from single-band, x-sum and pi-shifted p-difference noise levels."""
    v = from_db(excess_db)
    p1, p2 = powers
    cx12 = pair_covariance(from_db(sum_x_db), v, v, p1, p2)
    cp12 = pair_covariance(from_db(diff_p_db), v, v, p1, p2, sign=-1.0)
    return CovarianceState(np.array([[v, cx12], [cx12, v]]), np.array([[v, cp12], [cp12, v]]))


def ideal_levels(state: CovarianceState, powers) -> tuple[np.ndarray, np.ndarray]:
    """Noise levels every LO shape would show for ``state`` (inverse of assembly)."""
    p = np.asarray(powers, dtype=float)
    out = []
    for c in (state.cx, state.cp):
        v = np.diag(c)
        s = pair_noise(c, v[:, None], v[None, :], p[:, None], p[None, :])
        np.fill_diagonal(s, v)
        out.append(s)
    return out[0], out[1]


def synthesize_bundle(
    state: CovarianceState,
    powers,
    n_periods: int = 4,
    samples_per_period: int = 100,
    x_spread=None,
    p_spread=None,
    rng: np.random.Generator | None = None,
) -> TraceBundle:
    """Noise traces a homodyne scan of ``state`` would record.

    ``x_spread``/``p_spread`` (linear, same layout as the levels) add
    Gaussian jitter to the individual extrema heights; ``rng`` drives it.
    """
    lx, lp = ideal_levels(state, powers)
    n = state.n_bands
    traces = {}
    for shape in shape_order(n):
        xs = np.full(n_periods, lx[shape])
        ps = np.full(n_periods, lp[shape])
        if x_spread is not None:
            xs = xs + rng.normal(0.0, x_spread[shape], n_periods)
        if p_spread is not None:
            ps = ps + rng.normal(0.0, p_spread[shape], n_periods)
        traces[shape] = synthesize_trace(xs, ps, shape, samples_per_period)
    return TraceBundle(n, traces, np.asarray(powers, dtype=float))


def _draw_levels(lv: QuadratureLevels, seed: int, index: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    iu = np.triu_indices(lv.n_bands)
    out = []
    for mean, var in ((lv.x_mean, lv.x_var), (lv.p_mean, lv.p_var)):
        draw = rng.normal(mean[iu], np.sqrt(var[iu]))
        full = np.zeros_like(mean)
        full[iu] = draw
        full.T[iu] = draw
        out.append(full)
    return out[0], out[1]


def _mc_chunk(lv: QuadratureLevels, seed: int, start: int, stop: int):
    xs, ps = zip(*(_draw_levels(lv, seed, i) for i in range(start, stop)))
    return assemble_blocks(np.array(xs), lv.powers), assemble_blocks(np.array(ps), lv.powers)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SPOPO_WORKERS", "1")))
    except ValueError:
        raise ConfigurationError("SPOPO_WORKERS must be an integer") from None


def monte_carlo_blocks(levels: QuadratureLevels, n_samples: int, seed: int, workers: int | None = None):
    """Stacks (Cx, Cp) of shape (n_samples, n, n) from resampled noise levels.

    Sample i draws from its own seed substream, so the output does not depend
    on the number of workers.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    workers = default_workers() if workers is None else workers
    chunk = max(1, -(-n_samples // max(1, workers)))
    bounds = [(a, min(a + chunk, n_samples)) for a in range(0, n_samples, chunk)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_mc_chunk(levels, seed, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_mc_chunk, *zip(*[(levels, seed, a, b) for a, b in bounds])))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def monte_carlo_covariances(
    bundle: TraceBundle | QuadratureLevels, n_samples: int, seed: int, workers: int | None = None
) -> Iterator[CovarianceState]:
    """Covariance states assembled from noise levels drawn from their trace statistics."""
    levels = bundle.levels() if isinstance(bundle, TraceBundle) else bundle
    cx, cp = monte_carlo_blocks(levels, n_samples, seed, workers)
    for a, b in zip(cx, cp):
        yield CovarianceState(a, b)


def gram_schmidt(vectors: np.ndarray, passes: int = 2) -> np.ndarray:
    """Orthonormalise the columns of ``vectors`` in order (modified Gram-Schmidt).

    A second pass restores orthogonality lost to cancellation.
    """
    q = np.array(vectors, dtype=float, copy=True)
    k = q.shape[1]
    for j in range(k):
        for _ in range(passes):
            for i in range(j):
                q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
        norm = np.linalg.norm(q[:, j])
        if norm < 1e-12:
            raise DataError(f"vector {j} is linearly dependent on its predecessors")
        q[:, j] /= norm
    return q


def _stack(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 2 and isinstance(samples[0], np.ndarray):
        cx, cp = samples
    else:
        states = list(samples)
        if not states:
            raise DataError("need at least one covariance sample")
        cx = np.array([s.cx for s in states])
        cp = np.array([s.cp for s in states])
    if cx.ndim == 2:
        cx, cp = cx[None], cp[None]
    return cx, cp


def _matched_eigenvalues(stack: np.ndarray, ref_vecs: np.ndarray) -> np.ndarray:
    """Eigenvalues of every sample paired with the reference eigenvectors by maximal overlap."""
    w, u = np.linalg.eigh(stack)
    overlap = np.abs(np.einsum("ik,sil->skl", ref_vecs, u))
    out = np.empty((len(stack), ref_vecs.shape[1]))
    for s in range(len(stack)):
        rows, cols = linear_sum_assignment(-overlap[s])
        out[s, rows] = w[s, cols]
    return out


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    mag = np.abs(vec)
    lead = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
    return vec if vec[lead] >= 0 else -vec


@dataclass(frozen=True)
class ModeExtraction:
    """Orthonormal band-space modes (rows) with their sampled squeezing spectrum."""

    modes: np.ndarray = field(repr=False)
    squeezing_mean: np.ndarray
    squeezing_sigma: np.ndarray
    antisqueezing_mean: np.ndarray
    antisqueezing_sigma: np.ndarray
    quadratures: tuple
    robustness: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.squeezing_mean)

    @property
    def nonclassical_count(self) -> int:
        return count_nonclassical(self)

    def to_dict(self) -> dict:
        return {
            "modes": self.modes.tolist(),
            "squeezing": [
                {
                    "mean": float(m),
                    "sigma": float(s),
                    "quadrature": q,
                    "antisqueezing_mean": float(am),
                    "antisqueezing_sigma": float(asg),
                }
                for m, s, q, am, asg in zip(
                    self.squeezing_mean,
                    self.squeezing_sigma,
                    self.quadratures,
                    self.antisqueezing_mean,
                    self.antisqueezing_sigma,
                )
            ],
            "nonclassical_count": self.nonclassical_count,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def extract_modes(samples: Iterable[CovarianceState] | tuple, k: int = 10, redundancy_tol: float = 0.5) -> ModeExtraction:
    """Robust decorrelating mode basis and its squeezing spectrum.

    Eigenvectors of the sample-mean x and p blocks are candidates. Each is
    scored by mean |eigenvalue - 1| over the samples divided by the
    eigenvalue's standard deviation, with eigenvectors paired across samples
    by maximal overlap. Candidates are Gram-Schmidt orthogonalised in score
    order; a candidate whose residual norm falls below ``redundancy_tol`` is a
    near-copy of an accepted one (x and p eigenvectors nearly coincide) and is
    deferred to the end. Every sample is then re-expressed in the resulting
    basis; the lower of its two diagonal variances per mode is the squeezing.
    """
    cx, cp = _stack(samples)
    n = cx.shape[-1]
    if not 1 <= k <= n:
        raise ConfigurationError(f"k={k} must lie between 1 and the band count {n}")

    cands, keys = [], []
    for block, stack in enumerate((cx, cp)):
        _, ref = np.linalg.eigh(stack.mean(axis=0))
        lam = _matched_eigenvalues(stack, ref)
        dev = np.abs(lam - 1).mean(axis=0)
        sd = lam.std(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(sd > 0, dev / np.where(sd > 0, sd, 1), np.where(dev > 0, np.inf, 0.0))
        for j in range(n):
            vec = _fix_sign(ref[:, j])
            dominant = int(np.argmax(np.abs(vec) >= np.abs(vec).max() - 1e-12))
            cands.append(vec)
            # descending score, larger deviation, x before p, dominant band index
            keys.append((-score[j], -dev[j], block, dominant, float(score[j])))
    order = sorted(range(len(cands)), key=lambda i: keys[i][:4])

    def residual(v, basis):
        return v - sum(((q @ v) * q for q in basis), np.zeros(n))

    picked, chosen, deferred = [], [], []
    for i in order:
        if len(picked) == k:
            break
        r = residual(cands[i], chosen)
        if np.linalg.norm(r) < redundancy_tol:
            deferred.append(i)
            continue
        picked.append(i)
        chosen.append(r / np.linalg.norm(r))
    for i in deferred:
        if len(picked) == k:
            break
        r = residual(cands[i], chosen)
        if np.linalg.norm(r) > 1e-8:
            picked.append(i)
            chosen.append(r / np.linalg.norm(r))
    basis = gram_schmidt(np.array([cands[i] for i in picked]).T)
    basis = np.array([_fix_sign(b) for b in basis.T]).T

    dx = np.einsum("ik,sij,jk->sk", basis, cx, basis)
    dp = np.einsum("ik,sij,jk->sk", basis, cp, basis)
    mx, mp = dx.mean(axis=0), dp.mean(axis=0)
    x_sq = mx <= mp
    sq = np.where(x_sq, dx, dp)
    anti = np.where(x_sq, dp, dx)
    sq_mean, anti_mean = sq.mean(axis=0), anti.mean(axis=0)
    sq_sig = sq.std(axis=0, ddof=1) if len(sq) > 1 else np.zeros(len(picked))
    anti_sig = anti.std(axis=0, ddof=1) if len(sq) > 1 else np.zeros(len(picked))
    rank = np.argsort(sq_mean, kind="stable")
    return ModeExtraction(
        modes=basis.T[rank],
        squeezing_mean=sq_mean[rank],
        squeezing_sigma=sq_sig[rank],
        antisqueezing_mean=anti_mean[rank],
        antisqueezing_sigma=anti_sig[rank],
        quadratures=tuple("x" if x_sq[r] else "p" for r in rank),
        robustness=np.array([keys[picked[r]][4] for r in rank]),
    )


def count_nonclassical(extraction: ModeExtraction, n_sigma: float = 2.0) -> int:
    """Modes whose squeezing stays below vacuum by at least ``n_sigma`` standard deviations."""
    return int(np.sum(extraction.squeezing_mean + n_sigma * extraction.squeezing_sigma < 1))
