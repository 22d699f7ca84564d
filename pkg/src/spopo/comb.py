"""Frequency-comb coupling model and its supermode decomposition.

The comb is represented on a finite grid of signal frequencies centred on the
degenerate frequency. Each grid line may stand for a bundle of physical comb
lines (the real comb has ~1e5 of them), so ``spacing`` is an effective
resolution rather than the cavity free spectral range.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.special import eval_hermite

from .errors import ConfigurationError

SPEED_OF_LIGHT = 299_792_458.0
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(math.log(2.0)))


def wavelength_to_frequency(wavelength_nm: float) -> float:
    return SPEED_OF_LIGHT / (wavelength_nm * 1e-9)


def fwhm_nm_to_hz(fwhm_nm: float, wavelength_nm: float) -> float:
    """Convert a spectral FWHM in wavelength to frequency, to first order."""
    lam = wavelength_nm * 1e-9
    return SPEED_OF_LIGHT * fwhm_nm * 1e-9 / lam**2


def amplitude_sigma(intensity_fwhm: float) -> float:
    """Width ``s`` of a Gaussian amplitude exp(-x^2 / 2s^2) with the given intensity FWHM."""
    return intensity_fwhm * _FWHM_TO_SIGMA


@dataclass(frozen=True)
class FrequencyGrid:
    center_frequency: float
    spacing: float
    half_width: int

    def __post_init__(self):
        if not self.spacing > 0:
            raise ConfigurationError(f"grid spacing must be positive, got {self.spacing}")
        if int(self.half_width) != self.half_width or self.half_width < 1:
            raise ConfigurationError(f"half_width must be an integer >= 1, got {self.half_width}")

    @classmethod
    def from_mode_count(cls, center_frequency: float, spacing: float, n_modes: int) -> "FrequencyGrid":
        if n_modes < 3 or n_modes % 2 == 0:
            raise ConfigurationError(f"n_modes must be odd and >= 3, got {n_modes}")
        return cls(center_frequency, spacing, (n_modes - 1) // 2)

    @property
    def size(self) -> int:
        return 2 * self.half_width + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.half_width, self.half_width + 1)

    @property
    def offsets(self) -> np.ndarray:
        """Detuning of every line from the centre, in Hz."""
        return self.indices * self.spacing

    @property
    def frequencies(self) -> np.ndarray:
        return self.center_frequency + self.indices * self.spacing


@dataclass(frozen=True)
class PumpSpectrum:
    """Pump amplitude spectrum, max-normalised to 1.

    ``fwhm`` is the intensity FWHM in Hz; the amplitude is a Gaussian of
    width ``fwhm / (2 sqrt(ln 2))``.
    """

    shape: str
    center: float
    fwhm: float | None = None

    def __post_init__(self):
        if self.shape not in ("single-line", "gaussian"):
            raise ConfigurationError(f"unknown pump shape {self.shape!r}")
        if self.shape == "gaussian" and not (self.fwhm and self.fwhm > 0):
            raise ConfigurationError("gaussian pump needs a positive fwhm")

    def amplitude_at_offset(self, offset) -> np.ndarray:
        offset = np.asarray(offset, dtype=float)
        if self.shape == "single-line":
            return (offset == 0.0).astype(float)
        s = amplitude_sigma(self.fwhm)
        return np.exp(-(offset**2) / (2 * s**2))

    def amplitude(self, frequency) -> np.ndarray:
        return self.amplitude_at_offset(np.asarray(frequency, dtype=float) - self.center)


@dataclass(frozen=True)
class PhaseMatching:
    """Phase-matching envelope as a function of the signal-idler detuning difference.

    ``gaussian`` is exp(-d^2 / 2w^2) and ``sinc`` is sinc(d / w) with d the
    frequency difference of the two photons and w = ``width`` in Hz.
    """

    shape: str = "flat"
    width: float | None = None

    def __post_init__(self):
        if self.shape not in ("flat", "gaussian", "sinc"):
            raise ConfigurationError(f"unknown phase-matching shape {self.shape!r}")
        if self.shape != "flat" and not (self.width and self.width > 0):
            raise ConfigurationError(f"{self.shape} phase matching needs a positive width")

    def value_at_difference(self, difference) -> np.ndarray:
        d = np.asarray(difference, dtype=float)
        if self.shape == "flat":
            return np.ones_like(d)
        if self.shape == "gaussian":
            return np.exp(-(d**2) / (2 * self.width**2))
        return np.sinc(d / self.width)

    def value(self, freq_m, freq_n) -> np.ndarray:
        return self.value_at_difference(np.asarray(freq_m, dtype=float) - np.asarray(freq_n, dtype=float))


@dataclass(frozen=True)
class CouplingMatrix:
    grid: FrequencyGrid
    entries: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SupermodeSet:
    """Eigenpairs of the coupling matrix, columns of ``vectors`` sorted by |eigenvalue|."""

    grid: FrequencyGrid
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.eigenvalues) @ self.vectors.T

    def truncated(self, k: int) -> "SupermodeSet":
        return SupermodeSet(self.grid, self.eigenvalues[:k], self.vectors[:, :k])

    def to_csv(self, path, k: int | None = None) -> None:
        k = len(self) if k is None else min(k, len(self))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frequency_hz"] + [f"mode_{i}" for i in range(k)])
            for f, row in zip(self.grid.frequencies, self.vectors[:, :k]):
                writer.writerow([repr(float(f))] + [repr(float(x)) for x in row])

    def eigenvalues_json(self, path) -> None:
        Path(path).write_text(json.dumps([float(x) for x in self.eigenvalues], indent=1) + "\n")


def build_coupling(grid: FrequencyGrid, pump: PumpSpectrum, pm: PhaseMatching) -> CouplingMatrix:
    """Coupling matrix L[m, n] = f(w_m, w_n) * p(w_m + w_n) over the grid."""
    shift = (pump.center - 2 * grid.center_frequency) / grid.spacing
    if abs(shift - round(shift)) > 1e-6:
        raise ConfigurationError(
            f"pump centre {pump.center:.6e} Hz is not twice the grid centre "
            f"{grid.center_frequency:.6e} Hz plus a whole number of line spacings"
        )
    idx = grid.indices
    # integer index sums keep the two-photon resonance exact
    sum_offset = (idx[:, None] + idx[None, :] - round(shift)) * grid.spacing
    diff = (idx[:, None] - idx[None, :]) * grid.spacing
    entries = pm.value_at_difference(diff) * pump.amplitude_at_offset(sum_offset)
    entries = 0.5 * (entries + entries.T)
    return CouplingMatrix(grid, entries)


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        mag = np.abs(col)
        lead = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
        if col[lead] < 0:
            out[:, j] = -col
    return out


def _canonical_basis(q: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis for the span of the columns of ``q``.

    Reduces q^T to echelon form on pivot columns picked by a pivoted QR, which
    yields maximally localised vectors, then orthonormalises them.
    """
    qt = q.T
    _, _, piv = scipy.linalg.qr(qt, pivoting=True, mode="economic")
    piv = np.sort(piv[: q.shape[1]])
    echelon = np.linalg.solve(qt[:, piv], qt)
    basis, _ = np.linalg.qr(echelon.T)
    basis = _fix_sign(basis)
    order = np.argsort([int(np.argmax(np.abs(b) >= np.abs(b).max() - 1e-12)) for b in basis.T], kind="stable")
    return basis[:, order]


def diagonalize(coupling: CouplingMatrix, degeneracy_tol: float = 1e-12) -> SupermodeSet:
    """Full eigendecomposition sorted by descending |eigenvalue|.

    Eigenvectors are sign-fixed so that their largest-magnitude entry is
    positive. Degenerate eigenspaces get a canonical localised basis, so e.g.
    a single-line pump yields the pair modes (e_p +/- e_-p)/sqrt(2).
    """
    L = coupling.entries
    if not np.allclose(L, L.T, atol=1e-14 * max(1.0, np.abs(L).max())):
        raise ConfigurationError("coupling matrix is not symmetric")
    w, v = np.linalg.eigh(L)
    scale = max(np.abs(w).max(), 1e-300)
    # group (numerically) equal eigenvalues and canonicalise each group
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    start = 0
    for stop in range(1, len(w) + 1):
        # measured from the group's first member so near-equal values cannot chain
        if stop == len(w) or w[stop] - w[start] > degeneracy_tol * scale:
            if stop - start > 1:
                v[:, start:stop] = _canonical_basis(v[:, start:stop])
                w[start:stop] = w[start:stop].mean()
            start = stop
    v = _fix_sign(v)
    final = np.lexsort((-w, -np.round(np.abs(w) / scale, 12)))
    return SupermodeSet(coupling.grid, w[final], v[:, final])


def hermite_gauss_reference(order: int, width: float, grid: FrequencyGrid) -> np.ndarray:
    """Unit-norm Hermite-Gauss amplitude of the given order sampled on ``grid``.

    ``width`` is the RMS spectral width (Hz) of the order-0 intensity; the
    order-k function then has RMS width sqrt(2k + 1) * width.
    """
    if order < 0 or width <= 0:
        raise ConfigurationError("order must be >= 0 and width > 0")
    sigma = width * math.sqrt(2.0)
    x = grid.offsets / sigma
    vec = eval_hermite(order, x) * np.exp(-(x**2) / 2)
    vec = vec / np.linalg.norm(vec)
    return _fix_sign(vec[:, None])[:, 0]


def rms_width(vector: np.ndarray, grid: FrequencyGrid) -> float:
    """RMS spectral width (Hz) of |vector|^2 about its centroid."""
    weight = np.asarray(vector) ** 2
    weight = weight / weight.sum()
    x = grid.offsets
    mean = np.sum(weight * x)
    return float(np.sqrt(np.sum(weight * (x - mean) ** 2)))


def parity(vector: np.ndarray, tol: float = 1e-8) -> int:
    """+1 for an even vector about the grid centre, -1 for odd, 0 otherwise."""
    flipped = vector[::-1]
    if np.allclose(vector, flipped, atol=tol):
        return 1
    if np.allclose(vector, -flipped, atol=tol):
        return -1
    return 0


def pump_from_fundamental(center_wavelength_nm: float, fwhm_nm: float) -> PumpSpectrum:
    """Second-harmonic pump derived from a Gaussian fundamental spectrum.

    The harmonic field is the autoconvolution of the fundamental field, so its
    spectral FWHM is sqrt(2) times the fundamental's, centred at twice the
    fundamental frequency.
    """
    nu0 = wavelength_to_frequency(center_wavelength_nm)
    fwhm_f = fwhm_nm_to_hz(fwhm_nm, center_wavelength_nm)
    return PumpSpectrum("gaussian", 2 * nu0, math.sqrt(2.0) * fwhm_f)
