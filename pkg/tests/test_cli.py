import json

import numpy as np
import pytest

from spopo.cli import main
from spopo.config import reference_config
from spopo.state import CovarianceState
from spopo.traces import read_bundle, write_bundle


def cfg_file(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data, indent=1))
    return str(p)


SMALL = {
    "n_modes": 5,
    "pump": {"shape": "single-line"},
    "squeezing": {"pump_ratio": 0.5},
    "bands": {"n_bands": 2},
    "analysis": {"k_modes": 2, "mc_samples": 20},
}


class TestSimulate:
    def test_exchange_eigenpairs(self, tmp_path):
        out = tmp_path / "s"
        assert main(["simulate", "--config", cfg_file(tmp_path, SMALL), "--out", str(out)]) == 0
        eig = json.loads((out / "eigenvalues.json").read_text())
        assert sorted(eig) == [-1.0, -1.0, 1.0, 1.0, 1.0]
        header = (out / "supermodes.csv").read_text().splitlines()[0]
        assert header.split(",")[0] == "frequency_hz" and len(header.split(",")) == 6
        state = CovarianceState.from_json(out / "state.json")
        assert state.n_bands == 2
        assert (out / "state_Cx.csv").is_file() and (out / "state_Cp.csv").is_file()

    def test_traces_round_trip(self, tmp_path):
        out = tmp_path / "s"
        assert main(["simulate", "--config", cfg_file(tmp_path, SMALL), "--out", str(out), "--traces"]) == 0
        b = read_bundle(out / "traces.csv", out / "powers.json")
        assert b.missing_shapes() == []

    def test_above_threshold(self, tmp_path, capsys):
        cfg = cfg_file(tmp_path, {**SMALL, "squeezing": {"pump_ratio": 1.2}})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 4
        assert "pump_ratio" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        cfg = cfg_file(tmp_path, {"n_modes": 4})
        assert main(["simulate", "--config", cfg]) == 2
        assert "n_modes" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = cfg_file(tmp_path, {"n_modes": 5, "colour": "red"})
        assert main(["simulate", "--config", cfg]) == 2
        assert "line 3: colour" in capsys.readouterr().err


class TestWitness:
    def test_vacuum(self, tmp_path):
        CovarianceState.vacuum(4).to_json(tmp_path / "v.json")
        assert main(["witness", str(tmp_path / "v.json"), "--out", str(tmp_path / "w")]) == 0
        counts = json.loads((tmp_path / "w" / "counts.json").read_text())
        assert counts == {"bipartitions": 7, "ppt_entangled": 0, "epr_entangled": 0, "duan_violated": 0}
        assert (tmp_path / "w" / "scan.csv").is_file()

    def test_unphysical_refused(self, tmp_path, capsys):
        CovarianceState(np.diag([0.3, 0.3]), np.diag([0.3, 0.3])).to_json(tmp_path / "u.json")
        assert main(["witness", str(tmp_path / "u.json"), "--out", str(tmp_path / "w")]) == 4
        assert not (tmp_path / "w" / "scan.json").exists()
        assert "symplectic" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["witness", str(tmp_path / "none.json"), "--out", str(tmp_path / "w")]) == 3


def small_bundle(tmp_path):
    out = tmp_path / "s"
    main(["simulate", "--config", cfg_file(tmp_path, SMALL), "--out", str(out), "--traces"])
    return out / "traces.csv", out / "powers.json"


class TestIngest:
    def test_incomplete_bundle(self, tmp_path, capsys):
        traces, powers = small_bundle(tmp_path)
        b = read_bundle(traces, powers)
        del b.traces[(0, 1)]
        write_bundle(b, tmp_path / "t.csv", tmp_path / "p.json")
        code = main(["ingest", str(tmp_path / "t.csv"), str(tmp_path / "p.json"),
                     "--config", cfg_file(tmp_path, SMALL), "--out", str(tmp_path / "o")])
        assert code == 3
        assert "missing shapes: {1,2}" in capsys.readouterr().err

    def test_missing_inputs(self, tmp_path):
        assert main(["ingest", "--out", str(tmp_path / "o")]) == 3
        assert main(["ingest", str(tmp_path / "a.csv"), str(tmp_path / "b.json"), "--out", str(tmp_path / "o")]) == 3

    def test_fixture_and_files_conflict(self, tmp_path):
        assert main(["ingest", "a", "b", "--fixture", "--out", str(tmp_path / "o")]) == 2

    def test_bad_workers(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SPOPO_WORKERS", "lots")
        assert main(["modes", "--fixture", "--mc-samples", "5", "--out", str(tmp_path / "o")]) == 2

    def test_bad_mc_samples(self, tmp_path):
        assert main(["modes", "--fixture", "--mc-samples", "0", "--out", str(tmp_path / "o")]) == 2

    def test_fixture_report(self, tmp_path):
        out = tmp_path / "i"
        assert main(["ingest", "--fixture", "--mc-samples", "300", "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert "not measured" in rep["labels"]["input"]
        assert rep["labels"]["values"].startswith("uncorrected")
        assert rep["corrected"] is None
        assert rep["provenance"]["mc_samples"] == 300
        assert rep["uncorrected"]["witnesses"]["bipartitions"] == 511
        for name in ("state.json", "modes.json", "scan.json", "correlation_x.csv", "spectrum.csv", "noise_levels.csv"):
            assert (out / name).is_file()

    def test_loss_correction_section(self, tmp_path):
        data = reference_config().to_dict()
        data["analysis"].update(mc_samples=50, loss_correction=0.8)
        cfg = cfg_file(tmp_path, data)
        out = tmp_path / "i"
        assert main(["ingest", "--fixture", "--config", cfg, "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["corrected"] is not None

    def test_reports_reproducible(self, tmp_path, monkeypatch):
        args = ["ingest", "--fixture", "--mc-samples", "200", "--seed", "5"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        monkeypatch.setenv("SPOPO_WORKERS", "2")
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a = json.loads((tmp_path / "a" / "report.json").read_text())
        b = json.loads((tmp_path / "b" / "report.json").read_text())
        a.pop("generated_at"), b.pop("generated_at")
        assert a == b
        assert (tmp_path / "a" / "modes.json").read_bytes() == (tmp_path / "b" / "modes.json").read_bytes()

    def test_modes_command(self, tmp_path, capsys):
        out = tmp_path / "m"
        assert main(["modes", "--fixture", "--mc-samples", "300", "--seed", "2", "--out", str(out)]) == 0
        spec = json.loads((out / "modes.json").read_text())
        assert spec["seed"] == 2 and spec["mc_samples"] == 300
        assert "nonclassical modes" in capsys.readouterr().out


class TestReport:
    def test_simulated(self, tmp_path):
        out = tmp_path / "r"
        assert main(["report", "--config", cfg_file(tmp_path, SMALL), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["labels"]["values"].startswith("simulated")
        assert rep["provenance"]["config_digest"]
        assert "output_dir" not in rep["provenance"]["config"]

    def test_saved_state(self, tmp_path):
        CovarianceState.vacuum(3).to_json(tmp_path / "v.json")
        out = tmp_path / "r"
        assert main(["report", "--state", str(tmp_path / "v.json"), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["uncorrected"]["witnesses"]["ppt_entangled"] == 0
        assert rep["provenance"]["inputs"]["state"]["sha256"]

    def test_byte_identical_except_timestamp(self, tmp_path):
        for d in ("a", "b"):
            assert main(["report", "--config", cfg_file(tmp_path, SMALL), "--out", str(tmp_path / d)]) == 0
        a = (tmp_path / "a" / "report.json").read_text().splitlines()
        b = (tmp_path / "b" / "report.json").read_text().splitlines()
        diff = [(x, y) for x, y in zip(a, b) if x != y]
        assert len(a) == len(b)
        assert all("generated_at" in x for x, _ in diff)


def test_help(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "simulate" in capsys.readouterr().out
