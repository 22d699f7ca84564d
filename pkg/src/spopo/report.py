"""Analysis reports: measured-bundle and simulated-state summaries plus plot-data files.

Reports are plain dicts serialised with sorted keys. Apart from
``generated_at`` every field is a deterministic function of the inputs, the
configuration and the seed.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import InvalidStateError
from .pipeline import (
    ModeExtraction,
    assemble_covariance,
    count_nonclassical,
    extract_modes,
    monte_carlo_blocks,
)
from .state import (
    CovarianceState,
    block_commutator,
    correct_uniform_loss,
    correlation_matrix,
    to_db,
)
from .traces import QuadratureLevels, TraceBundle, shape_label, shape_order
from .witnesses import ScanResult, canonical_bipartitions, ppt_quantiles, purity, scan_bipartitions

UNCORRECTED = "uncorrected: as measured, no loss correction applied"
SIMULATED = "simulated: modelled detection efficiency included, nothing corrected"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def min_symplectic(state: CovarianceState) -> float | None:
    try:
        return float(state.symplectic_eigenvalues().min())
    except InvalidStateError:
        return None


def state_summary(state: CovarianceState, eps: float, tol: float) -> tuple[dict, ScanResult]:
    """Witness counts, purity, physicality and block commutator for one state."""
    scan = scan_bipartitions(state, eps)
    nu = min_symplectic(state)
    return {
        "witnesses": scan.counts(),
        "purity": purity(state),
        "min_symplectic_eigenvalue": nu,
        "physical": nu is not None and nu >= 1 - tol,
        "commutator_max_abs": block_commutator(state)[1],
    }, scan


def spectrum_dict(ext: ModeExtraction, n_sigma: float) -> dict:
    d = ext.to_dict()
    d["nonclassical_count"] = count_nonclassical(ext, n_sigma)
    d["n_sigma"] = n_sigma
    d["uncertainty"] = "standard deviation over Monte Carlo samples"
    return d


def corrected_spectrum(ext: ModeExtraction, eta: float) -> dict:
    """Per-mode means mapped through the inverse of a flat loss; sigmas scale by 1/eta."""
    def inv(v):
        return ((np.asarray(v) - (1 - eta)) / eta).tolist()

    return {
        "squeezing_mean": inv(ext.squeezing_mean),
        "squeezing_sigma": (ext.squeezing_sigma / eta).tolist(),
        "antisqueezing_mean": inv(ext.antisqueezing_mean),
        "antisqueezing_sigma": (ext.antisqueezing_sigma / eta).tolist(),
        "quadratures": list(ext.quadratures),
    }


@dataclass
class BundleAnalysis:
    state: CovarianceState
    levels: QuadratureLevels
    extraction: ModeExtraction
    scan: ScanResult
    ppt_q95: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)


def analyze_bundle(bundle: TraceBundle, cfg: RunConfig, inputs: dict | None = None, workers: int | None = None) -> BundleAnalysis:
    """Extrema -> assembly -> Monte Carlo -> mode extraction -> witnesses -> purity."""
    a = cfg.analysis
    kw = cfg.traces.level_kwargs()
    levels = bundle.levels(**kw)
    state = assemble_covariance(bundle, **kw)
    cx, cp = monte_carlo_blocks(levels, a.mc_samples, a.seed, workers)
    ext = extract_modes((cx, cp), k=a.k_modes)
    summary, scan = state_summary(state, a.entanglement_eps, a.physical_tol)

    q95 = {}
    m = min(a.ppt_mc_samples, a.mc_samples)
    if m > 0 and bundle.n_bands >= 2:
        parts = canonical_bipartitions(bundle.n_bands)
        q = ppt_quantiles(cx[:m], cp[:m], parts, 0.95)
        q95 = {p.mask: float(v) for p, v in zip(parts, q)}
    summary["witnesses"]["ppt_entangled_q95"] = sum(v < 1 - a.entanglement_eps for v in q95.values())

    report = {
        "kind": "measurement",
        "provenance": _provenance(cfg, inputs),
        "labels": {
            "values": UNCORRECTED,
            "input": bundle.note or "as supplied",
            "band_gap_loss": "not corrected; light falling in band gaps is lost and not accounted for",
        },
        "uncorrected": {**summary, "squeezing_spectrum": spectrum_dict(ext, a.n_sigma)},
        "corrected": None,
    }
    eta = a.loss_correction
    if eta is not None:
        corr = correct_uniform_loss(state, eta)
        csum, _ = state_summary(corr, a.entanglement_eps, a.physical_tol)
        report["corrected"] = {
            **csum,
            "label": f"corrected for uniform detection efficiency {eta:g} (band gaps excluded)",
            "squeezing_spectrum": corrected_spectrum(ext, eta),
        }
    return BundleAnalysis(state, levels, ext, scan, q95, report)


def simulation_report(state: CovarianceState, cfg: RunConfig, inputs: dict | None = None) -> tuple[dict, ScanResult]:
    a = cfg.analysis
    summary, scan = state_summary(state, a.entanglement_eps, a.physical_tol)
    meta = {k: state.meta[k] for k in sorted(state.meta) if isinstance(state.meta[k], (str, int, float, bool))}
    report = {
        "kind": "simulation",
        "provenance": _provenance(cfg, inputs),
        "labels": {
            "values": SIMULATED,
            "band_gap_loss": str(state.meta.get("band_gap_loss", "unknown")),
        },
        "state_meta": meta,
        "uncorrected": {
            **summary,
            "band_variances_x": np.diag(state.cx).tolist(),
            "band_variances_p": np.diag(state.cp).tolist(),
        },
        "corrected": None,
    }
    return report, scan


def _provenance(cfg: RunConfig, inputs: dict | None) -> dict:
    return {
        "tool": "spopo",
        "version": __version__,
        "config_digest": cfg.digest(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "output_dir"},
        "seed": cfg.analysis.seed,
        "mc_samples": cfg.analysis.mc_samples,
        "inputs": {k: inputs[k] for k in sorted(inputs)} if inputs else {},
    }


def dump_report(report: dict, path, timestamp: str | None = None) -> None:
    stamped = dict(report)
    stamped["generated_at"] = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    Path(path).write_text(json.dumps(stamped, indent=1, sort_keys=True) + "\n")


def write_matrix(path, m: np.ndarray) -> None:
    np.savetxt(path, m, delimiter=",", fmt="%.12g")


def write_plot_data(out: Path, state: CovarianceState, levels: QuadratureLevels | None = None,
                    ext: ModeExtraction | None = None, scan: ScanResult | None = None, q95: dict | None = None) -> list[Path]:
    """Correlation matrices, mean noise levels, squeezing spectrum and witness scan as CSV."""
    out = Path(out)
    written = []
    for q in ("x", "p"):
        p = out / f"correlation_{q}.csv"
        write_matrix(p, correlation_matrix(state, q))
        written.append(p)
    if levels is not None:
        p = out / "noise_levels.csv"
        rows = ["shape,band_i,band_j,x_mean_db,x_sd_linear,p_mean_db,p_sd_linear"]
        for s in shape_order(levels.n_bands):
            rows.append(
                f"\"{shape_label(s)}\",{s[0]},{s[1]},{to_db(levels.x_mean[s]):.9g},{np.sqrt(levels.x_var[s]):.9g},"
                f"{to_db(levels.p_mean[s]):.9g},{np.sqrt(levels.p_var[s]):.9g}"
            )
        p.write_text("\n".join(rows) + "\n")
        written.append(p)
    if ext is not None:
        p = out / "spectrum.csv"
        rows = ["mode,quadrature,squeezing_mean,squeezing_sigma,antisqueezing_mean,antisqueezing_sigma,squeezing_db"]
        for k in range(len(ext)):
            rows.append(
                f"{k + 1},{ext.quadratures[k]},{ext.squeezing_mean[k]:.9g},{ext.squeezing_sigma[k]:.9g},"
                f"{ext.antisqueezing_mean[k]:.9g},{ext.antisqueezing_sigma[k]:.9g},{to_db(ext.squeezing_mean[k]):.9g}"
            )
        p.write_text("\n".join(rows) + "\n")
        written.append(p)
    if scan is not None:
        p = out / "scan_plot.csv"
        rows = ["rank,partition_mask,subset,duan,epr,ppt_nu_min,ppt_nu_q95,entangled_ppt,entangled_epr"]
        for rank, r in enumerate(scan):
            qv = q95.get(r.part.mask) if q95 else None
            rows.append(
                f"{rank},{r.part.mask},\"{' '.join(str(i + 1) for i in r.part.subset)}\",{r.duan_value:.12g},"
                f"{r.epr_product:.12g},{r.ppt_min_nu:.12g},{'' if qv is None else f'{qv:.12g}'},"
                f"{int(r.entangled_ppt)},{int(r.entangled_epr)}"
            )
        p.write_text("\n".join(rows) + "\n")
        written.append(p)
    return written
