"""Run configuration: JSON document -> validated dataclasses.

Unknown keys are rejected and every error names the offending key and the
line it sits on.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from dataclasses import replace as _replace
from pathlib import Path

from .errors import ConfigurationError


class _Ctx:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def line_of(self, key: str) -> int | None:
        m = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def fail(self, key: str, msg: str):
        line = self.line_of(key)
        where = f"{self.source}: line {line}" if line else self.source
        raise ConfigurationError(f"{where}: {key}: {msg}")


def _take(ctx: _Ctx, data, section: str, allowed: dict) -> dict:
    """Check keys of a section and coerce values; ``allowed`` maps key -> (type, default)."""
    if not isinstance(data, dict):
        ctx.fail(section, "expected an object")
    for key in data:
        if key not in allowed:
            ctx.fail(key, f"unknown key in '{section}' (allowed: {', '.join(sorted(allowed))})")
    out = {}
    for key, (kind, default) in allowed.items():
        if key not in data:
            if default is _REQUIRED:
                ctx.fail(section, f"missing required key '{key}'")
            out[key] = default
            continue
        value = data[key]
        if value is None:
            out[key] = None
            continue
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            value = float(value)
        elif kind is int and isinstance(value, int) and not isinstance(value, bool):
            pass
        elif kind in (str, dict, list) and isinstance(value, kind):
            pass
        else:
            ctx.fail(key, f"expected {kind.__name__}, got {type(value).__name__}")
        out[key] = value
    return out


_REQUIRED = object()


@dataclass(frozen=True)
class PumpConfig:
    shape: str = "gaussian"
    fwhm_nm: float | None = 6.0
    # pump centre displaced from twice the comb centre by this many line spacings
    offset_lines: int = 0


@dataclass(frozen=True)
class PhaseMatchingConfig:
    shape: str = "flat"
    width: float | None = None


@dataclass(frozen=True)
class SqueezingConfig:
    pump_ratio: float | None = None
    efficiency: float = 1.0
    # when set, (pump_ratio, efficiency) are fitted to these unshaped-LO dB levels
    calibrate_db: tuple[float, float] | None = None


@dataclass(frozen=True)
class BandConfig:
    n_bands: int = 10
    gap_fraction: float = 0.05
    lo_fwhm_nm: float = 6.0


@dataclass(frozen=True)
class TraceConfig:
    """Extremum detection on homodyne noise traces."""

    window_fraction: float = 0.01
    min_prominence_db: float = 0.5
    relative_prominence: float = 0.5
    alignment_tol_deg: float = 10.0

    def level_kwargs(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AnalysisConfig:
    mc_samples: int = 10_000
    seed: int = 0
    k_modes: int = 10
    n_sigma: float = 2.0
    entanglement_eps: float = 1e-9
    physical_tol: float = 1e-9
    ppt_mc_samples: int = 1000
    loss_correction: float | None = None


@dataclass(frozen=True)
class RunConfig:
    center_wavelength_nm: float = 795.0
    fsr_hz: float = 1.8e11
    n_modes: int = 201
    pump: PumpConfig = field(default_factory=PumpConfig)
    phase_matching: PhaseMatchingConfig = field(default_factory=PhaseMatchingConfig)
    squeezing: SqueezingConfig = field(default_factory=SqueezingConfig)
    bands: BandConfig = field(default_factory=BandConfig)
    traces: TraceConfig = field(default_factory=TraceConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["squeezing"]["calibrate_db"] is not None:
            d["squeezing"]["calibrate_db"] = list(d["squeezing"]["calibrate_db"])
        return d

    def digest(self) -> str:
        """Hash of every computation parameter; the output directory is excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "RunConfig":
        return _replace(self, **changes)

    def with_overrides(self, seed=None, mc_samples=None, output_dir=None) -> "RunConfig":
        """Apply command-line overrides (``None`` leaves a field alone)."""
        analysis = self.analysis
        if seed is not None:
            analysis = _replace(analysis, seed=seed)
        if mc_samples is not None:
            if mc_samples < 1:
                raise ConfigurationError("--mc-samples: must be >= 1")
            analysis = _replace(analysis, mc_samples=mc_samples)
        out = self.output_dir if output_dir is None else str(output_dir)
        return _replace(self, analysis=analysis, output_dir=out)


def parse_config(data, text: str = "", source: str = "<config>") -> RunConfig:
    ctx = _Ctx(text, source)
    top = _take(
        ctx,
        data,
        "config",
        {
            "center_wavelength_nm": (float, 795.0),
            "fsr_hz": (float, 1.8e11),
            "n_modes": (int, 201),
            "pump": (dict, {}),
            "phase_matching": (dict, {}),
            "squeezing": (dict, {}),
            "bands": (dict, {}),
            "traces": (dict, {}),
            "analysis": (dict, {}),
            "output_dir": (str, "out"),
        },
    )
    pump = PumpConfig(**_take(ctx, top["pump"], "pump", {"shape": (str, "gaussian"), "fwhm_nm": (float, 6.0), "offset_lines": (int, 0)}))
    pm = PhaseMatchingConfig(
        **_take(ctx, top["phase_matching"], "phase_matching", {"shape": (str, "flat"), "width": (float, None)})
    )
    sq_raw = _take(
        ctx,
        top["squeezing"],
        "squeezing",
        {"pump_ratio": (float, None), "efficiency": (float, 1.0), "calibrate_db": (list, None)},
    )
    cal = sq_raw["calibrate_db"]
    if cal is not None:
        if len(cal) != 2 or not all(isinstance(v, (int, float)) for v in cal):
            ctx.fail("calibrate_db", "expected [squeezing_db, antisqueezing_db]")
        sq_raw["calibrate_db"] = (float(cal[0]), float(cal[1]))
    elif sq_raw["pump_ratio"] is None:
        sq_raw["pump_ratio"] = 0.5
    squeezing = SqueezingConfig(**sq_raw)
    bands = BandConfig(
        **_take(
            ctx,
            top["bands"],
            "bands",
            {"n_bands": (int, 10), "gap_fraction": (float, 0.05), "lo_fwhm_nm": (float, 6.0)},
        )
    )
    td = TraceConfig()
    traces = TraceConfig(
        **_take(
            ctx,
            top["traces"],
            "traces",
            {
                "window_fraction": (float, td.window_fraction),
                "min_prominence_db": (float, td.min_prominence_db),
                "relative_prominence": (float, td.relative_prominence),
                "alignment_tol_deg": (float, td.alignment_tol_deg),
            },
        )
    )
    defaults = AnalysisConfig()
    analysis = AnalysisConfig(
        **_take(
            ctx,
            top["analysis"],
            "analysis",
            {
                "mc_samples": (int, defaults.mc_samples),
                "seed": (int, defaults.seed),
                "k_modes": (int, defaults.k_modes),
                "n_sigma": (float, defaults.n_sigma),
                "entanglement_eps": (float, defaults.entanglement_eps),
                "physical_tol": (float, defaults.physical_tol),
                "ppt_mc_samples": (int, defaults.ppt_mc_samples),
                "loss_correction": (float, None),
            },
        )
    )
    cfg = RunConfig(
        top["center_wavelength_nm"],
        top["fsr_hz"],
        top["n_modes"],
        pump,
        pm,
        squeezing,
        bands,
        traces,
        analysis,
        top["output_dir"],
    )
    _check_ranges(ctx, cfg)
    return cfg


def _check_ranges(ctx: _Ctx, cfg: RunConfig) -> None:
    if cfg.center_wavelength_nm <= 0:
        ctx.fail("center_wavelength_nm", "must be positive")
    if cfg.fsr_hz <= 0:
        ctx.fail("fsr_hz", "must be positive")
    if cfg.n_modes < 3 or cfg.n_modes % 2 == 0:
        ctx.fail("n_modes", "must be an odd integer >= 3")
    if cfg.pump.shape not in ("gaussian", "single-line"):
        ctx.fail("shape", f"unknown pump shape {cfg.pump.shape!r}")
    if abs(cfg.pump.offset_lines) >= cfg.n_modes:
        ctx.fail("offset_lines", "pump would miss every signal-idler pair of the grid")
    if cfg.pump.shape == "gaussian" and not (cfg.pump.fwhm_nm and cfg.pump.fwhm_nm > 0):
        ctx.fail("fwhm_nm", "gaussian pump needs a positive fwhm_nm")
    if cfg.phase_matching.shape not in ("flat", "gaussian", "sinc"):
        ctx.fail("shape", f"unknown phase-matching shape {cfg.phase_matching.shape!r}")
    if cfg.phase_matching.shape != "flat" and not (cfg.phase_matching.width and cfg.phase_matching.width > 0):
        ctx.fail("width", "needs a positive width in Hz")
    if not 0 < cfg.squeezing.efficiency <= 1:
        ctx.fail("efficiency", "must lie in (0, 1]")
    if cfg.squeezing.pump_ratio is not None and cfg.squeezing.pump_ratio < 0:
        ctx.fail("pump_ratio", "must be >= 0")
    if cfg.bands.n_bands < 2:
        ctx.fail("n_bands", "need at least 2 bands")
    if not 0 <= cfg.bands.gap_fraction < 0.5:
        ctx.fail("gap_fraction", "must lie in [0, 0.5)")
    if cfg.bands.lo_fwhm_nm <= 0:
        ctx.fail("lo_fwhm_nm", "must be positive")
    t = cfg.traces
    if not 0 < t.window_fraction < 0.5:
        ctx.fail("window_fraction", "must lie in (0, 0.5)")
    if t.min_prominence_db <= 0:
        ctx.fail("min_prominence_db", "must be positive")
    if not 0 < t.relative_prominence <= 1:
        ctx.fail("relative_prominence", "must lie in (0, 1]")
    if not 0 < t.alignment_tol_deg < 45:
        ctx.fail("alignment_tol_deg", "must lie in (0, 45)")
    a = cfg.analysis
    if a.mc_samples < 1:
        ctx.fail("mc_samples", "must be >= 1")
    if a.k_modes < 1 or a.k_modes > cfg.bands.n_bands:
        ctx.fail("k_modes", f"must lie in [1, n_bands={cfg.bands.n_bands}]")
    if a.ppt_mc_samples < 0:
        ctx.fail("ppt_mc_samples", "must be >= 0")
    if a.loss_correction is not None and not 0 < a.loss_correction <= 1:
        ctx.fail("loss_correction", "must lie in (0, 1]")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return parse_config(data, text, str(path))


def packaged_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name


def reference_config() -> RunConfig:
    return load_config(packaged_path("reference_geometry.json"))
