"""End-to-end simulation: config -> coupling -> supermodes -> band covariance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .comb import (
    CouplingMatrix,
    FrequencyGrid,
    PhaseMatching,
    PumpSpectrum,
    SupermodeSet,
    build_coupling,
    diagonalize,
    fwhm_nm_to_hz,
    pump_from_fundamental,
    wavelength_to_frequency,
)
from .config import RunConfig
from .state import (
    BandPartition,
    CovarianceState,
    SqueezingSpectrum,
    calibrate_unshaped,
    equal_energy_partition,
    gaussian_lo,
    mode_variances,
    project_to_bands,
    squeezing_from_eigenvalues,
    to_db,
)


@dataclass(frozen=True)
class Simulation:
    config: RunConfig
    coupling: CouplingMatrix = field(repr=False)
    modes: SupermodeSet = field(repr=False)
    spectrum: SqueezingSpectrum = field(repr=False)
    lo: np.ndarray = field(repr=False)
    partition: BandPartition = field(repr=False)
    state: CovarianceState = field(repr=False)
    pump_ratio: float
    efficiency: float
    calibration_residual_db: float | None = None

    def unshaped_levels_db(self) -> tuple[float, float]:
        vx, vp = mode_variances(self.modes.vectors, self.spectrum, self.lo)
        return float(to_db(vx)), float(to_db(vp))


def build_grid(cfg: RunConfig) -> FrequencyGrid:
    return FrequencyGrid.from_mode_count(wavelength_to_frequency(cfg.center_wavelength_nm), cfg.fsr_hz, cfg.n_modes)


def build_pump(cfg: RunConfig, grid: FrequencyGrid) -> PumpSpectrum:
    center = 2 * grid.center_frequency + cfg.pump.offset_lines * grid.spacing
    if cfg.pump.shape == "single-line":
        return PumpSpectrum("single-line", center)
    pump = pump_from_fundamental(cfg.center_wavelength_nm, cfg.pump.fwhm_nm)
    return PumpSpectrum("gaussian", center, pump.fwhm)


def run_simulation(cfg: RunConfig) -> Simulation:
    grid = build_grid(cfg)
    coupling = build_coupling(grid, build_pump(cfg, grid), PhaseMatching(cfg.phase_matching.shape, cfg.phase_matching.width))
    modes = diagonalize(coupling)
    lo = gaussian_lo(grid, fwhm_nm_to_hz(cfg.bands.lo_fwhm_nm, cfg.center_wavelength_nm))
    residual = None
    if cfg.squeezing.calibrate_db is not None:
        ratio, eta, residual = calibrate_unshaped(modes, lo, *cfg.squeezing.calibrate_db)
    else:
        ratio, eta = cfg.squeezing.pump_ratio, cfg.squeezing.efficiency
    spectrum = squeezing_from_eigenvalues(modes, ratio, eta)
    partition = equal_energy_partition(grid, lo, cfg.bands.n_bands, cfg.bands.gap_fraction)
    state = project_to_bands(modes, spectrum, partition)
    state = state.with_meta(
        source="simulation",
        config_digest=cfg.digest(),
        pump_ratio=ratio,
        efficiency=eta,
        loss_corrected=False,
        band_gap_loss="modelled, not corrected",
    )
    return Simulation(cfg, coupling, modes, spectrum, lo, partition, state, ratio, eta, residual)
