"""Phase-scanned homodyne noise traces: peak/valley statistics and file I/O.

A trace records noise power (dB above shot noise) against LO phase in
radians. The noise has period pi in the phase; the reference phase marks
where the unshaped LO sees its lowest noise, which defines the x quadrature.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .errors import ConfigurationError, DataError, IncompleteBundleError, InsufficientDataError


def shape_order(n: int) -> list[tuple[int, int]]:
    """All single-band (i, i) and pair (i, j) shapes in scan order {1,1}, {1,2}, ..."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def shape_label(shape) -> str:
    i, j = shape
    return f"{{{i + 1},{j + 1}}}"


@dataclass(frozen=True)
class NoiseTrace:
    phase: np.ndarray = field(repr=False)
    power_db: np.ndarray = field(repr=False)
    bands: tuple[int, int]
    # which quadrature sits at the valleys; None means infer it from the phase
    quadrature_tag: str | None = None

    def __post_init__(self):
        phase = np.asarray(self.phase, dtype=float)
        power = np.asarray(self.power_db, dtype=float)
        if phase.shape != power.shape or phase.ndim != 1:
            raise DataError("phase and power must be 1-D arrays of equal length")
        if not np.all(np.isfinite(power)):
            raise DataError(f"trace {shape_label(self.bands)} has non-finite power values")
        i, j = self.bands
        object.__setattr__(self, "bands", (min(i, j), max(i, j)))
        object.__setattr__(self, "phase", phase)
        object.__setattr__(self, "power_db", power)


@dataclass(frozen=True)
class ExtremaStats:
    """Peak and valley populations of one trace, kept in dB."""

    peaks_db: np.ndarray = field(repr=False)
    valleys_db: np.ndarray = field(repr=False)
    valley_phase: float | None = None

    @property
    def mean_peak_db(self) -> float:
        return float(np.mean(self.peaks_db))

    @property
    def var_peak(self) -> float:
        return _var(self.peaks_db)

    @property
    def mean_valley_db(self) -> float:
        return float(np.mean(self.valleys_db))

    @property
    def var_valley(self) -> float:
        return _var(self.valleys_db)

    def linear(self) -> tuple[float, float, float, float]:
        """(peak mean, peak variance, valley mean, valley variance) on the linear scale."""
        pk = 10 ** (np.asarray(self.peaks_db) / 10)
        vl = 10 ** (np.asarray(self.valleys_db) / 10)
        return float(pk.mean()), _var(pk), float(vl.mean()), _var(vl)


def _var(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.var(ddof=1)) if len(values) > 1 else 0.0


def extract_extrema(
    trace: NoiseTrace,
    window_fraction: float = 0.01,
    min_prominence_db: float = 0.5,
    relative_prominence: float = 0.5,
) -> ExtremaStats:
    """Locate peaks and valleys on a moving-average smoothed copy of the trace.

    Extremum positions come from the smoothed trace; the reported levels are
    the raw samples at those positions, so smoothing never biases them. The
    prominence threshold is ``min_prominence_db`` capped at
    ``relative_prominence`` times the smoothed peak-to-valley swing, which
    keeps nearly phase-independent traces usable.
    """
    y = trace.power_db
    window = max(1, int(round(window_fraction * len(y))))
    window += 1 - window % 2
    smooth = uniform_filter1d(y, size=window, mode="nearest")
    swing = float(smooth.max() - smooth.min())
    prominence = min(min_prominence_db, relative_prominence * swing)
    if swing <= 0 or prominence <= 0:
        raise InsufficientDataError(f"trace {shape_label(trace.bands)} shows no phase dependence")
    peaks, _ = find_peaks(smooth, prominence=prominence)
    valleys, _ = find_peaks(-smooth, prominence=prominence)
    if len(peaks) < 2 or len(valleys) < 2:
        raise InsufficientDataError(
            f"trace {shape_label(trace.bands)}: found {len(peaks)} peaks and {len(valleys)} valleys, need 2 of each"
        )
    ang = 2 * trace.phase[valleys]
    valley_phase = 0.5 * math.atan2(np.sin(ang).mean(), np.cos(ang).mean())
    return ExtremaStats(y[peaks].copy(), y[valleys].copy(), valley_phase)


def valley_quadrature(stats: ExtremaStats, reference_phase: float = 0.0, tol_deg: float = 10.0) -> str:
    """Quadrature ('x' or 'p') found at the valleys of a trace.

    Valleys within ``tol_deg`` of the reference phase (mod pi) are x; valleys a
    quarter turn away are p. Anything else means the squeezing ellipse rotated
    and the trace is rejected.
    """
    d = (stats.valley_phase - reference_phase + math.pi / 2) % math.pi - math.pi / 2
    tol = math.radians(tol_deg)
    if abs(d) <= tol:
        return "x"
    if abs(abs(d) - math.pi / 2) <= tol:
        return "p"
    raise DataError(f"minimum-noise phase is {math.degrees(d):.1f} deg away from the reference")


@dataclass(frozen=True)
class QuadratureLevels:
    """Linear-scale noise levels per shape: entry [i, j] is shape (i, j), symmetric."""

    x_mean: np.ndarray
    x_var: np.ndarray
    p_mean: np.ndarray
    p_var: np.ndarray
    powers: np.ndarray

    @property
    def n_bands(self) -> int:
        return len(self.powers)


@dataclass(frozen=True)
class TraceBundle:
    n_bands: int
    traces: dict = field(repr=False)
    band_powers: np.ndarray = field(repr=False)
    reference_phase: float = 0.0
    # free-text origin, e.g. marking synthetic data
    note: str | None = None

    def __post_init__(self):
        powers = np.asarray(self.band_powers, dtype=float)
        if powers.shape != (self.n_bands,):
            raise DataError(f"expected {self.n_bands} band powers, got {powers.size}")
        if np.any(powers <= 0):
            raise DataError("band powers must be positive")
        object.__setattr__(self, "band_powers", powers)

    def missing_shapes(self) -> list[str]:
        return [shape_label(s) for s in shape_order(self.n_bands) if s not in self.traces]

    def check_complete(self) -> None:
        missing = self.missing_shapes()
        if missing:
            raise IncompleteBundleError(missing)

    def statistics(self, **extrema_kwargs) -> dict:
        self.check_complete()
        return {s: extract_extrema(self.traces[s], **extrema_kwargs) for s in shape_order(self.n_bands)}

    def levels(self, alignment_tol_deg: float = 10.0, **extrema_kwargs) -> QuadratureLevels:
        """Map every trace's peak/valley statistics to x and p noise levels."""
        n = self.n_bands
        xm, xv, pm, pv = (np.zeros((n, n)) for _ in range(4))
        for shape, stats in self.statistics(**extrema_kwargs).items():
            tag = self.traces[shape].quadrature_tag
            if tag is None:
                try:
                    tag = valley_quadrature(stats, self.reference_phase, alignment_tol_deg)
                except DataError as exc:
                    raise DataError(f"trace {shape_label(shape)} rejected: {exc}") from None
            pk_m, pk_v, vl_m, vl_v = stats.linear()
            if tag == "x":
                vals = (vl_m, vl_v, pk_m, pk_v)
            else:
                vals = (pk_m, pk_v, vl_m, vl_v)
            i, j = shape
            for arr, val in zip((xm, xv, pm, pv), vals):
                arr[i, j] = arr[j, i] = val
        return QuadratureLevels(xm, xv, pm, pv, self.band_powers.copy())


def synthesize_trace(x_levels, p_levels, bands, samples_per_period: int = 100) -> NoiseTrace:
    """Noise trace whose successive x and p extrema take the given linear levels.

    One period (pi in phase) per entry of ``x_levels``. Each level is held over
    the half-period centred on its extremum, where the other quadrature's
    weight vanishes, so the curve is continuous and every extremum lands
    exactly on a sample. The trace runs from the p extremum before the first
    x extremum to the x extremum after the last p one; those two end samples
    are never counted as extrema, so every given level is fully prominent.
    """
    x_levels = np.asarray(x_levels, dtype=float)
    p_levels = np.asarray(p_levels, dtype=float)
    if len(x_levels) != len(p_levels) or len(x_levels) < 2:
        raise ConfigurationError("need matching x/p level sequences with at least 2 periods")
    if samples_per_period % 4:
        raise ConfigurationError("samples_per_period must be a multiple of 4")
    k = len(x_levels)
    theta = -np.pi / 2 + np.arange(k * samples_per_period + samples_per_period // 2 + 1) * np.pi / samples_per_period
    ix = np.clip(np.floor((theta + np.pi / 2) / np.pi).astype(int), 0, k - 1)
    ip = np.clip(np.floor(theta / np.pi).astype(int), 0, k - 1)
    ip = np.where(theta < 0, 0, ip)
    power = x_levels[ix] * np.cos(theta) ** 2 + p_levels[ip] * np.sin(theta) ** 2
    return NoiseTrace(theta, 10 * np.log10(power), tuple(bands))


def write_bundle(bundle: TraceBundle, traces_path, powers_path) -> None:
    with open(traces_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shape_id", "band_i", "band_j", "phase", "power_db"])
        for sid, shape in enumerate(shape_order(bundle.n_bands)):
            tr = bundle.traces.get(shape)
            if tr is None:
                continue
            for ph, pw in zip(tr.phase, tr.power_db):
                writer.writerow([sid, shape[0], shape[1], f"{ph:.12g}", f"{pw:.12g}"])
    meta = {
        "n_bands": bundle.n_bands,
        "band_powers": [float(p) for p in bundle.band_powers],
        "reference_phase": bundle.reference_phase,
    }
    if bundle.note:
        meta["note"] = bundle.note
    Path(powers_path).write_text(json.dumps(meta, indent=1) + "\n")


def read_bundle(traces_path, powers_path) -> TraceBundle:
    """Load a trace CSV plus its band-power sidecar.

    Band indices in the CSV are 0-based; ``shape_id`` is informational.
    """
    try:
        meta = json.loads(Path(powers_path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{powers_path}: line {exc.lineno}: {exc.msg}") from exc
    powers = meta.get("band_powers") if isinstance(meta, dict) else meta
    if powers is None:
        raise DataError(f"{powers_path}: missing 'band_powers'")
    n = int(meta.get("n_bands", len(powers))) if isinstance(meta, dict) else len(powers)
    ref = float(meta.get("reference_phase", 0.0)) if isinstance(meta, dict) else 0.0
    note = meta.get("note") if isinstance(meta, dict) else None
    columns: dict[tuple[int, int], tuple[list, list]] = {}
    with open(traces_path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"band_i", "band_j", "phase", "power_db"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError(f"{traces_path}: header must contain {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                i, j = int(row["band_i"]), int(row["band_j"])
                ph, pw = float(row["phase"]), float(row["power_db"])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{traces_path}: line {lineno}: {exc}") from None
            if not (0 <= i < n and 0 <= j < n):
                raise DataError(f"{traces_path}: line {lineno}: band index out of range")
            key = (min(i, j), max(i, j))
            col = columns.setdefault(key, ([], []))
            col[0].append(ph)
            col[1].append(pw)
    traces = {k: NoiseTrace(np.array(v[0]), np.array(v[1]), k) for k, v in columns.items()}
    return TraceBundle(n, traces, np.asarray(powers, dtype=float), ref, note)
