"""Reconstructed 10-band trace bundle matching reference aggregate statistics.

The shipped fixture is NOT raw experimental data. It is a synthetic bundle
whose mean noise levels assemble into a covariance with a prescribed
squeezing spectrum, and whose extrema scatter is chosen so that Monte Carlo
resampling reproduces the reference per-mode uncertainties of the squeezed
quadratures.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import lsq_linear

from .config import packaged_path, reference_config
from .pipeline import assemble_blocks, gram_schmidt, ideal_levels
from .simulate import run_simulation
from .state import CovarianceState
from .traces import TraceBundle, read_bundle, shape_order, synthesize_trace

# reference linear squeezing spectrum: (mean, sigma) per mode, most squeezed first
REFERENCE_SQUEEZING = np.array(
    [[0.38, 0.07], [0.48, 0.06], [0.58, 0.07], [0.74, 0.06], [0.83, 0.05],
     [0.90, 0.03], [0.93, 0.03], [0.95, 0.02], [0.97, 0.02], [0.98, 0.02]]
)
REFERENCE_ANTISQUEEZING = np.array(
    [[3.86, 0.12], [3.62, 0.07], [2.74, 0.10], [1.96, 0.06], [1.41, 0.06],
     [1.17, 0.04], [1.11, 0.03], [1.06, 0.03], [1.03, 0.03], [1.00, 0.02]]
)
REFERENCE_NONCLASSICAL = 8

FIXTURE_TRACES = "reference_fixture_traces.csv"
FIXTURE_POWERS = "reference_fixture_powers.json"
FIXTURE_NOTE = "synthetic reconstruction matching reference aggregate statistics; not measured data"


def fixture_basis(n_bands: int = 10) -> np.ndarray:
    """Orthonormal band-space modes: Gram-Schmidt of simulated supermode band projections."""
    sim = run_simulation(reference_config())
    o = sim.partition.overlaps(sim.modes.vectors[:, :n_bands])
    m = gram_schmidt(o)
    for j in range(n_bands):
        if m[np.argmax(np.abs(m[:, j])), j] < 0:
            m[:, j] *= -1
    return m


def reference_state(basis: np.ndarray) -> CovarianceState:
    """Covariance diagonal in ``basis`` with the reference spectrum, squeezed quadrature alternating x, p, ..."""
    x_sq = np.arange(basis.shape[1]) % 2 == 0
    sq, anti = REFERENCE_SQUEEZING[:, 0], REFERENCE_ANTISQUEEZING[:, 0]
    vx = np.where(x_sq, sq, anti)
    vp = np.where(x_sq, anti, sq)
    return CovarianceState(basis @ np.diag(vx) @ basis.T, basis @ np.diag(vp) @ basis.T)


def _mode_sensitivity(basis: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """d(diag of basis^T C basis) / d(shape level); columns follow upper-triangle shape order."""
    n = len(powers)
    iu = np.triu_indices(n)
    unit = np.zeros((len(iu[0]), n, n))
    unit[np.arange(len(iu[0])), iu[0], iu[1]] = 1
    unit[np.arange(len(iu[0])), iu[1], iu[0]] = 1
    c = assemble_blocks(unit, powers)
    return np.einsum("ik,lij,jk->kl", basis, c, basis)


def design_level_spread(
    basis: np.ndarray,
    powers: np.ndarray,
    separation_fraction: float = 0.15,
    squeezing_weight: float = 10.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-shape standard deviations (linear) of the x and p levels.

    Solves a bounded linear least-squares problem for the level variances so
    that the propagated per-mode spread matches the reference uncertainties,
    weighting the squeezed quadratures more heavily. Each spread is capped
    at ``separation_fraction`` of that shape's x-p level gap so that peaks and
    valleys never swap.
    """
    state = reference_state(basis)
    lx, lp = ideal_levels(state, powers)
    n = len(powers)
    iu = np.triu_indices(n)
    cap = (separation_fraction * np.abs(lx - lp)[iu]) ** 2
    a2 = _mode_sensitivity(basis, powers) ** 2
    x_sq = np.arange(n) % 2 == 0
    sig_sq, sig_anti = REFERENCE_SQUEEZING[:, 1], REFERENCE_ANTISQUEEZING[:, 1]
    out = []
    for target, squeezed in ((np.where(x_sq, sig_sq, sig_anti), x_sq), (np.where(x_sq, sig_anti, sig_sq), ~x_sq)):
        w = np.where(squeezed, squeezing_weight, 1.0) / target**2
        fit = lsq_linear(a2 * w[:, None], target**2 * w, bounds=(0, cap + 1e-30), method="bvls")
        sd = np.zeros((n, n))
        sd[iu] = np.sqrt(np.clip(fit.x, 0, None))
        out.append(sd + np.triu(sd, 1).T)
    return out[0], out[1]


def build_fixture_bundle(n_periods: int = 4, samples_per_period: int = 100) -> TraceBundle:
    """Deterministic trace bundle: extrema alternate level +/- delta so the
    sample mean and variance of every population are exact."""
    if n_periods % 2:
        raise ValueError("n_periods must be even")
    basis = fixture_basis()
    n = basis.shape[0]
    powers = np.ones(n)
    state = reference_state(basis)
    lx, lp = ideal_levels(state, powers)
    sx, sp = design_level_spread(basis, powers)
    pattern = np.tile([1.0, -1.0], n_periods // 2)
    # sample variance (ddof=1) of +/- delta over k values is k delta^2 / (k - 1)
    scale = np.sqrt((n_periods - 1) / n_periods)
    traces = {}
    for shape in shape_order(n):
        xs = lx[shape] + pattern * sx[shape] * scale
        ps = lp[shape] + pattern * sp[shape] * scale
        traces[shape] = synthesize_trace(xs, ps, shape, samples_per_period)
    return TraceBundle(n, traces, powers, note=FIXTURE_NOTE)


def load_fixture_bundle() -> TraceBundle:
    return read_bundle(packaged_path(FIXTURE_TRACES), packaged_path(FIXTURE_POWERS))
