"""Command-line front end.

    spopo simulate [--config C] [--out D] [--traces]
    spopo witness STATE [--config C] [--out D]
    spopo ingest (TRACES POWERS | --fixture) [--config C] [--seed S] [--mc-samples N] [--out D]
    spopo modes  (TRACES POWERS | --fixture) [--config C] [--seed S] [--mc-samples N] [--out D]
    spopo report [--state STATE] [--config C] [--out D]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 physicality refusal.
Set SPOPO_WORKERS to spread Monte Carlo sampling over several processes.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, packaged_path, reference_config
from .errors import ConfigurationError, DataError, SpopoError
from .fixtures import FIXTURE_POWERS, FIXTURE_TRACES
from .pipeline import UnphysicalStateWarning, extract_modes, monte_carlo_blocks, synthesize_bundle
from .report import (
    analyze_bundle,
    dump_report,
    file_digest,
    simulation_report,
    spectrum_dict,
    write_plot_data,
)
from .simulate import run_simulation
from .state import CovarianceState
from .traces import read_bundle, write_bundle
from .witnesses import scan_bipartitions


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else reference_config()
    return cfg.with_overrides(getattr(args, "seed", None), getattr(args, "mc_samples", None), args.out)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _inputs(args, cfg_path_key: str = "config", **paths) -> dict:
    out = {}
    cfg = getattr(args, cfg_path_key, None)
    out["config"] = {"name": Path(cfg).name, "sha256": file_digest(cfg)} if cfg else {"name": "packaged reference geometry"}
    for key, path in paths.items():
        out[key] = {"name": Path(path).name, "sha256": file_digest(path)}
    return out


def _bundle_paths(args) -> tuple[Path, Path]:
    if args.fixture:
        if args.traces or args.powers:
            raise ConfigurationError("give either --fixture or TRACES POWERS, not both")
        return packaged_path(FIXTURE_TRACES), packaged_path(FIXTURE_POWERS)
    if not (args.traces and args.powers):
        raise DataError("need TRACES and POWERS files (or --fixture)")
    for p in (args.traces, args.powers):
        if not Path(p).is_file():
            raise DataError(f"{p}: no such file")
    return Path(args.traces), Path(args.powers)


def _say(msg: str) -> None:
    print(msg, flush=True)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    sim = run_simulation(cfg)
    sim.modes.to_csv(out / "supermodes.csv", k=min(len(sim.modes), args.supermodes))
    sim.modes.eigenvalues_json(out / "eigenvalues.json")
    sim.state.to_json(out / "state.json")
    sim.state.to_csv(out / "state")
    if args.traces:
        bundle = synthesize_bundle(sim.state, np.ones(sim.state.n_bands))
        write_bundle(bundle, out / "traces.csv", out / "powers.json")
    _say(f"simulated {cfg.n_modes} comb lines -> {sim.state.n_bands} bands; pump ratio {sim.pump_ratio:.4g}, "
         f"efficiency {sim.efficiency:.4g}; wrote {out}")
    return 0


def cmd_witness(args) -> int:
    cfg = _config(args)
    state = CovarianceState.from_json(args.state)
    state.check_physical(cfg.analysis.physical_tol)
    out = _outdir(cfg)
    scan = scan_bipartitions(state, cfg.analysis.entanglement_eps)
    scan.to_json(out / "scan.json")
    scan.to_csv(out / "scan.csv")
    counts = scan.counts()
    (out / "counts.json").write_text(json.dumps(counts, indent=1, sort_keys=True) + "\n")
    _say(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_ingest(args) -> int:
    cfg = _config(args)
    traces, powers = _bundle_paths(args)
    bundle = read_bundle(traces, powers)
    out = _outdir(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnphysicalStateWarning)
        res = analyze_bundle(bundle, cfg, _inputs(args, traces=traces, powers=powers))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    res.state.to_json(out / "state.json")
    res.extraction.to_json(out / "modes.json")
    res.scan.to_json(out / "scan.json")
    dump_report(res.report, out / "report.json")
    write_plot_data(out, res.state, res.levels, res.extraction, res.scan, res.ppt_q95)
    u = res.report["uncorrected"]
    _say(f"purity {u['purity']:.4f}; nonclassical modes {u['squeezing_spectrum']['nonclassical_count']}; "
         f"ppt-entangled {u['witnesses']['ppt_entangled']}/{u['witnesses']['bipartitions']}; wrote {out}")
    return 0


def cmd_modes(args) -> int:
    cfg = _config(args)
    traces, powers = _bundle_paths(args)
    bundle = read_bundle(traces, powers)
    out = _outdir(cfg)
    a = cfg.analysis
    cx, cp = monte_carlo_blocks(bundle.levels(**cfg.traces.level_kwargs()), a.mc_samples, a.seed)
    ext = extract_modes((cx, cp), k=a.k_modes)
    spec = spectrum_dict(ext, a.n_sigma)
    spec["seed"], spec["mc_samples"] = a.seed, a.mc_samples
    (out / "modes.json").write_text(json.dumps(spec, indent=1, sort_keys=True) + "\n")
    for k in range(len(ext)):
        _say(f"mode {k + 1:>2} ({ext.quadratures[k]}): {ext.squeezing_mean[k]:.3f} +- {ext.squeezing_sigma[k]:.3f}"
             f"   anti {ext.antisqueezing_mean[k]:.3f} +- {ext.antisqueezing_sigma[k]:.3f}")
    _say(f"nonclassical modes: {spec['nonclassical_count']}")
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    if args.state:
        state = CovarianceState.from_json(args.state)
        inputs = _inputs(args, state=args.state)
    else:
        state = run_simulation(cfg).state
        inputs = _inputs(args)
    out = _outdir(cfg)
    report, scan = simulation_report(state, cfg, inputs)
    dump_report(report, out / "report.json")
    scan.to_json(out / "scan.json")
    write_plot_data(out, state, scan=scan)
    u = report["uncorrected"]
    _say(f"purity {u['purity']:.4g}; ppt-entangled {u['witnesses']['ppt_entangled']}/{u['witnesses']['bipartitions']}; "
         f"epr-entangled {u['witnesses']['epr_entangled']}; wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spopo", description="Multimode squeezed frequency-comb toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mc=False):
        p.add_argument("--config", help="JSON run configuration (default: packaged reference geometry)")
        p.add_argument("--out", help="output directory (overrides config output_dir)")
        if mc:
            p.add_argument("--seed", type=int, help="Monte Carlo seed (overrides config)")
            p.add_argument("--mc-samples", type=int, dest="mc_samples", help="Monte Carlo sample count")

    p = sub.add_parser("simulate", help="supermodes and band covariance from a config")
    common(p)
    p.add_argument("--traces", action="store_true", help="also write noise-free synthetic traces")
    p.add_argument("--supermodes", type=int, default=20, help="number of supermodes to write (default 20)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("witness", help="entanglement scan over every bipartition of a state")
    p.add_argument("state", help="covariance state JSON")
    common(p)
    p.set_defaults(func=cmd_witness)

    for name, func, text in (("ingest", cmd_ingest, "full analysis of a trace bundle"),
                             ("modes", cmd_modes, "Monte Carlo mode extraction only")):
        p = sub.add_parser(name, help=text)
        p.add_argument("traces", nargs="?")
        p.add_argument("powers", nargs="?")
        p.add_argument("--fixture", action="store_true", help="use the packaged reconstruction fixture")
        common(p, mc=True)
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="report JSON and plot data for a simulated or saved state")
    p.add_argument("--state", help="covariance state JSON (default: simulate from the config)")
    common(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpopoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
