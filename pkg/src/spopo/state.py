"""Block-diagonal quadrature covariance states and the shaped-LO homodyne model.

Conventions: vacuum variance is 1 per quadrature, there is no x-p cross
block, and dB values are 10*log10 of the linear variance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .comb import FrequencyGrid, SupermodeSet, amplitude_sigma
from .errors import (
    AboveThresholdError,
    ConfigurationError,
    DataError,
    DegenerateStateError,
    InvalidStateError,
)


def to_db(v):
    return 10.0 * np.log10(v)


def from_db(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def _symmetric(m: np.ndarray, name: str) -> np.ndarray:
    m = np.array(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > 1e-9 * scale:
        raise DataError(f"{name} is not symmetric")
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class CovarianceState:
    cx: np.ndarray = field(repr=False)
    cp: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        cx = _symmetric(self.cx, "Cx")
        cp = _symmetric(self.cp, "Cp")
        if cx.shape != cp.shape:
            raise DataError(f"Cx {cx.shape} and Cp {cp.shape} differ in shape")
        object.__setattr__(self, "cx", cx)
        object.__setattr__(self, "cp", cp)

    @classmethod
    def vacuum(cls, n: int) -> "CovarianceState":
        return cls(np.eye(n), np.eye(n))

    @property
    def n_bands(self) -> int:
        return self.cx.shape[0]

    def block(self, quadrature: str) -> np.ndarray:
        if quadrature == "x":
            return self.cx
        if quadrature == "p":
            return self.cp
        raise ValueError(f"quadrature must be 'x' or 'p', got {quadrature!r}")

    def symplectic_eigenvalues(self) -> np.ndarray:
        return symplectic_spectrum(self.cx, self.cp)

    def is_physical(self, tol: float = 1e-9) -> bool:
        try:
            return bool(self.symplectic_eigenvalues().min() >= 1.0 - tol)
        except InvalidStateError:
            return False

    def check_physical(self, tol: float = 1e-9) -> "CovarianceState":
        nu = self.symplectic_eigenvalues()
        if nu.min() < 1.0 - tol:
            raise InvalidStateError(f"unphysical state: smallest symplectic eigenvalue {nu.min():.6g} < 1")
        return self

    def with_meta(self, **meta) -> "CovarianceState":
        return CovarianceState(self.cx, self.cp, {**self.meta, **meta})

    def to_dict(self) -> dict:
        return {
            "n": self.n_bands,
            "Cx": [float(x) for x in self.cx.ravel()],
            "Cp": [float(x) for x in self.cp.ravel()],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CovarianceState":
        try:
            n = int(data["n"])
            cx = np.asarray(data["Cx"], dtype=float).reshape(n, n)
            cp = np.asarray(data["Cp"], dtype=float).reshape(n, n)
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"malformed covariance state: {exc}") from exc
        return cls(cx, cp, dict(data.get("meta", {})))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "CovarianceState":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def to_csv(self, prefix) -> tuple[Path, Path]:
        paths = []
        for q in ("x", "p"):
            path = Path(f"{prefix}_C{q}.csv")
            np.savetxt(path, self.block(q), delimiter=",", fmt="%.17g")
            paths.append(path)
        return tuple(paths)


def symplectic_spectrum(cx: np.ndarray, cp: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues sqrt(eig(Cx Cp)) of a block-diagonal covariance, ascending."""
    wx, ux = np.linalg.eigh(cx)
    if wx.min() <= 0:
        raise InvalidStateError(f"Cx is not positive definite (smallest eigenvalue {wx.min():.6g}); no symplectic spectrum, min nu undefined")
    root = (ux * np.sqrt(wx)) @ ux.T
    m = root @ cp @ root
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    if w.min() <= 0:
        raise InvalidStateError(f"Cp is not positive definite (smallest eigenvalue of Cx^1/2 Cp Cx^1/2 is {w.min():.6g}); min nu undefined")
    return np.sqrt(w)


@dataclass(frozen=True)
class SqueezingSpectrum:
    """Per-supermode variances; ``labels[k]`` names the squeezed quadrature."""

    v_minus: np.ndarray
    v_plus: np.ndarray
    labels: tuple

    def __len__(self):
        return len(self.v_minus)

    @property
    def vx(self) -> np.ndarray:
        x = np.array([lab == "x" for lab in self.labels])
        return np.where(x, self.v_minus, self.v_plus)

    @property
    def vp(self) -> np.ndarray:
        x = np.array([lab == "x" for lab in self.labels])
        return np.where(x, self.v_plus, self.v_minus)


def opo_variances(sigma):
    """Ideal below-threshold (squeezed, antisqueezed) variances at zero analysis frequency."""
    sigma = np.asarray(sigma, dtype=float)
    return ((1 - sigma) / (1 + sigma)) ** 2, ((1 + sigma) / (1 - sigma)) ** 2


def squeezing_from_eigenvalues(modes: SupermodeSet, pump_ratio: float, efficiency: float = 1.0) -> SqueezingSpectrum:
    """Map coupling eigenvalues to per-supermode variances.

    Mode k gets squeezing parameter |L_k| / |L_max| * pump_ratio, the OPO
    transfer function, then a beam-splitter loss of transmission
    ``efficiency``. Positive eigenvalues squeeze x, negative ones p.
    """
    if not 0 <= pump_ratio < 1:
        raise AboveThresholdError(f"pump_ratio must lie in [0, 1) (below threshold), got {pump_ratio}")
    if not 0 < efficiency <= 1:
        raise ConfigurationError(f"efficiency must lie in (0, 1], got {efficiency}")
    lam = np.asarray(modes.eigenvalues, dtype=float)
    lam_max = np.abs(lam).max()
    sigma = np.abs(lam) / lam_max * pump_ratio if lam_max > 0 else np.zeros_like(lam)
    v_minus, v_plus = opo_variances(sigma)
    v_minus = efficiency * v_minus + (1 - efficiency)
    v_plus = efficiency * v_plus + (1 - efficiency)
    labels = tuple("x" if l >= 0 else "p" for l in lam)
    return SqueezingSpectrum(v_minus, v_plus, labels)


def gaussian_lo(grid: FrequencyGrid, intensity_fwhm: float) -> np.ndarray:
    """Unit-norm Gaussian local-oscillator amplitude centred on the grid."""
    s = amplitude_sigma(intensity_fwhm)
    amp = np.exp(-(grid.offsets**2) / (2 * s**2))
    return amp / np.linalg.norm(amp)


@dataclass(frozen=True)
class BandPartition:
    """Disjoint spectral bands carved out of a local oscillator.

    ``edges[i]`` is the (low, high) detuning interval of band i in Hz relative
    to the grid centre. Each grid line is treated as a bundle of comb lines
    with uniform amplitude across its cell, so a band boundary may cut
    through a cell: band i then takes the covered fraction of that cell.
    Distinct bands never share comb lines and are therefore orthogonal.
    """

    grid: FrequencyGrid
    edges: np.ndarray
    lo_amplitude: np.ndarray = field(repr=False)
    gap_fraction: float = 0.0

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float).reshape(-1, 2)
        lo = np.asarray(self.lo_amplitude, dtype=float)
        if lo.shape != (self.grid.size,):
            raise ConfigurationError("LO amplitude does not match the grid")
        lo = lo / np.linalg.norm(lo)
        if np.any(edges[:, 1] <= edges[:, 0]):
            raise ConfigurationError("every band needs low < high")
        order = np.argsort(edges[:, 0])
        if np.any(edges[order[1:], 0] < edges[order[:-1], 1]):
            raise ConfigurationError("bands overlap")
        lim = (self.grid.half_width + 0.5) * self.grid.spacing
        if edges.min() < -lim - 1e-9 * lim or edges.max() > lim + 1e-9 * lim:
            raise ConfigurationError("band lies outside the mode grid")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "lo_amplitude", lo)
        if np.any(self.energies <= 0):
            bad = np.flatnonzero(self.energies <= 0).tolist()
            raise ConfigurationError(f"bands {bad} carry no LO energy")

    @property
    def n_bands(self) -> int:
        return len(self.edges)

    @property
    def fractions(self) -> np.ndarray:
        """Covered fraction of every grid cell, shape (n_bands, grid size)."""
        d = self.grid.spacing
        lo_cell = self.grid.offsets - d / 2
        hi_cell = self.grid.offsets + d / 2
        lo = np.maximum(self.edges[:, :1], lo_cell[None, :])
        hi = np.minimum(self.edges[:, 1:], hi_cell[None, :])
        return np.clip(hi - lo, 0.0, None) / d

    @property
    def weights(self) -> np.ndarray:
        """Unnormalised band amplitudes f_i(m) * LO(m)."""
        return self.fractions * self.lo_amplitude[None, :]

    @property
    def energies(self) -> np.ndarray:
        return (self.fractions * self.lo_amplitude[None, :] ** 2).sum(axis=1)

    def overlaps(self, vectors: np.ndarray) -> np.ndarray:
        """O[i, k]: projection of grid vector k onto the unit-norm LO of band i."""
        return self.weights @ vectors / np.sqrt(self.energies)[:, None]

    def merged_overlap(self, bands, vectors: np.ndarray) -> np.ndarray:
        """Projection onto the LO restricted to the union of ``bands``."""
        bands = list(bands)
        w = self.weights[bands].sum(axis=0)
        return w @ vectors / np.sqrt(self.energies[bands].sum())

    def is_reflection_symmetric(self, tol: float = 1e-9) -> bool:
        mirrored = -self.edges[::-1, ::-1]
        return bool(np.allclose(self.edges, mirrored, atol=tol * self.grid.spacing))


def equal_energy_partition(grid: FrequencyGrid, lo_amplitude: np.ndarray, n_bands: int, gap_fraction: float = 0.05) -> BandPartition:
    """Split the LO into ``n_bands`` bands of equal energy.

    Band i covers the energy quantiles [(i + g)/n, (i + 1 - g)/n] with g the
    gap fraction, so each band loses a fraction g of its share at both edges
    and all bands keep exactly equal energy.
    """
    if n_bands < 1:
        raise ConfigurationError("n_bands must be >= 1")
    if not 0 <= gap_fraction < 0.5:
        raise ConfigurationError(f"gap_fraction must lie in [0, 0.5), got {gap_fraction}")
    lo = np.asarray(lo_amplitude, dtype=float)
    energy = lo**2 / np.sum(lo**2)
    cell_edges = np.concatenate([grid.offsets - grid.spacing / 2, [grid.offsets[-1] + grid.spacing / 2]])
    cdf = np.concatenate([[0.0], np.cumsum(energy)])
    cdf[-1] = 1.0
    i = np.arange(n_bands)
    q_lo = (i + gap_fraction) / n_bands
    q_hi = (i + 1 - gap_fraction) / n_bands
    # piecewise-constant intensity makes the CDF piecewise linear, so this inverse is exact
    edges = np.column_stack([np.interp(q_lo, cdf, cell_edges), np.interp(q_hi, cdf, cell_edges)])
    # enforce exact mirror symmetry for a symmetric LO
    if np.allclose(lo, lo[::-1], rtol=0, atol=1e-15):
        edges = 0.5 * (edges - edges[::-1, ::-1])
    return BandPartition(grid, edges, lo, gap_fraction)


def mode_variances(vectors: np.ndarray, spectrum: SqueezingSpectrum, lo: np.ndarray) -> tuple[float, float]:
    """(Var x, Var p) measured with a unit-norm LO amplitude ``lo`` over the grid."""
    o = np.asarray(lo) @ vectors[:, : len(spectrum)]
    return (
        float(1 + np.sum((spectrum.vx - 1) * o**2)),
        float(1 + np.sum((spectrum.vp - 1) * o**2)),
    )


def project_to_bands(modes: SupermodeSet, spectrum: SqueezingSpectrum, partition: BandPartition) -> CovarianceState:
    """Covariance of the band quadratures measured with the band-shaped LOs.

    Supermodes outside ``spectrum`` and the part of each band orthogonal to
    all supermodes contribute vacuum.
    """
    if partition.grid != modes.grid:
        raise ConfigurationError("partition and supermodes live on different grids")
    k = len(spectrum)
    o = partition.overlaps(modes.vectors[:, :k])
    cx = np.eye(partition.n_bands) + (o * (spectrum.vx - 1)) @ o.T
    cp = np.eye(partition.n_bands) + (o * (spectrum.vp - 1)) @ o.T
    return CovarianceState(cx, cp)


def correlation_matrix(state: CovarianceState, quadrature: str = "x") -> np.ndarray:
    """Normalised correlations with the excess-noise indicator 1 - 1/V on the diagonal."""
    c = state.block(quadrature)
    d = np.diag(c)
    if np.any(d <= 0):
        raise DegenerateStateError(f"non-positive diagonal in C{quadrature}")
    corr = c / np.sqrt(np.outer(d, d))
    np.fill_diagonal(corr, 1 - 1 / d)
    return corr


def apply_loss(state: CovarianceState, eta) -> CovarianceState:
    """Per-band beam-splitter loss: C -> D^1/2 C D^1/2 + (1 - D)."""
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (state.n_bands,))
    if np.any(eta <= 0) or np.any(eta > 1):
        raise ConfigurationError(f"efficiencies must lie in (0, 1], got {eta.tolist()}")
    root = np.sqrt(eta)
    vac = np.diag(1 - eta)
    return CovarianceState(
        root[:, None] * state.cx * root[None, :] + vac,
        root[:, None] * state.cp * root[None, :] + vac,
        dict(state.meta),
    )


def correct_uniform_loss(state: CovarianceState, eta: float) -> CovarianceState:
    """Invert a spectrally flat loss of transmission ``eta``."""
    if not 0 < eta <= 1:
        raise ConfigurationError(f"efficiency must lie in (0, 1], got {eta}")
    vac = (1 - eta) * np.eye(state.n_bands)
    return CovarianceState((state.cx - vac) / eta, (state.cp - vac) / eta, dict(state.meta))


def block_commutator(state: CovarianceState) -> tuple[np.ndarray, float]:
    comm = state.cx @ state.cp - state.cp @ state.cx
    return comm, float(np.abs(comm).max())


def two_mode_squeezed(r: float) -> CovarianceState:
    """Two-mode squeezed vacuum with x anticorrelated and p correlated."""
    c, s = np.cosh(2 * r), np.sinh(2 * r)
    return CovarianceState(np.array([[c, -s], [-s, c]]), np.array([[c, s], [s, c]]))


def calibrate_unshaped(
    modes: SupermodeSet,
    lo: np.ndarray,
    squeezing_db: float = -5.9,
    antisqueezing_db: float = 7.8,
    n_modes: int | None = None,
):
    """Fit (pump_ratio, efficiency) so the unshaped LO sees the target levels.

    Returns ``(pump_ratio, efficiency, residual_db)`` where ``residual_db`` is
    the worst absolute miss of the two targets.
    """
    sub = modes if n_modes is None else modes.truncated(n_modes)

    def levels(params):
        spec = squeezing_from_eigenvalues(sub, params[0], params[1])
        vx, vp = mode_variances(sub.vectors, spec, lo)
        return np.array([to_db(min(vx, vp)), to_db(max(vx, vp))])

    target = np.array([squeezing_db, antisqueezing_db])
    fit = least_squares(lambda p: levels(p) - target, x0=[0.5, 0.8], bounds=([0.0, 1e-3], [0.999, 1.0]))
    ratio, eta = (float(v) for v in fit.x)
    return ratio, eta, float(np.abs(levels(fit.x) - target).max())
