import csv
import json

import numpy as np
import pytest
import yaml

from isacdesign import ao
from isacdesign.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, main
from isacdesign.evaluation import imsr
from isacdesign.model import build_beampattern_matrices
from isacdesign.oracle import ENV_TOL
from isacdesign.serialize import load_design, scenario_from_dict, unpack_complex


@pytest.fixture(scope="module")
def designed(tmp_path_factory):
    """One small design shared by the evaluate tests."""
    root = tmp_path_factory.mktemp("cli")
    from isacdesign.config import DESK_YAML

    text = DESK_YAML.replace("n_s: 16", "n_s: 8").replace("n_cp: 4", "n_cp: 2")
    text = text.replace("num_symbols: 16", "num_symbols: 4").replace("num_blocks: 3", "num_blocks: 2")
    text += "  ao_max_iter: 4\n  ao_min_iter: 2\n  sca_max_iter: 5\n  check_surrogate_samples: 50\n"
    cfg = root / "small.yaml"
    cfg.write_text(text)
    out = root / "design"
    assert main(["design", str(cfg), "-o", str(out)]) == EXIT_OK
    return cfg, out


def test_config_prints_loadable_yaml(capsys):
    assert main(["config"]) == EXIT_OK
    raw = yaml.safe_load(capsys.readouterr().out)
    assert raw["scenario"]["n_t"] == 4


class TestDesign:
    def test_outputs(self, designed):
        _, out = designed
        for name in ("design.json", "summary.json", "ao_trace.csv", "sca_trace.csv", "trace.jsonl"):
            assert (out / name).is_file()
        summary = json.loads((out / "summary.json").read_text())
        assert [b["index"] for b in summary["blocks"]] == [1, 2]
        assert all(b["feasible"] for b in summary["blocks"])
        d = load_design(out / "design.json")
        assert len(d["boundary"]) == 2 and len(d["blocks"]) == 2
        with open(out / "ao_trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0].keys() == {"block", "iteration", "g_obj"}

    def test_deterministic_bytes(self, designed, tmp_path):
        cfg, out = designed
        assert main(["design", str(cfg), "-o", str(tmp_path)]) == EXIT_OK
        for name in ("design.json", "summary.json", "ao_trace.csv", "sca_trace.csv", "trace.jsonl"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_overrides_and_figures(self, small_yaml, tmp_path):
        assert main(["design", str(small_yaml), "-o", str(tmp_path), "--blocks", "1", "--threads", "2",
                     "--seed", "5", "--figures"]) == EXIT_OK
        d = json.loads((tmp_path / "design.json").read_text())
        assert len(d["blocks"]) == 1 and d["solver"]["seed"] == 5
        assert (tmp_path / "convergence.png").stat().st_size > 0

    def test_injected_fault_exits_3(self, small_yaml, tmp_path, monkeypatch):
        calls = iter(range(10_000))
        real = ao.g_objective
        # every evaluation adds 1: the AO monotonicity guard must trip
        monkeypatch.setattr(ao, "g_objective", lambda *a: real(*a) + next(calls))
        assert main(["design", str(small_yaml), "-o", str(tmp_path)]) == EXIT_SOLVER

    def test_infeasible_problem_exits_2(self, small_yaml, tmp_path):
        cfg = tmp_path / "hard.yaml"
        cfg.write_text(small_yaml.read_text().replace("gamma_u: 10.0", "gamma_u: 1.0e+6"))
        assert main(["design", str(cfg), "-o", str(tmp_path / "o")]) == EXIT_INFEASIBLE

    @pytest.mark.parametrize("args", [["--blocks", "0"], ["--threads", "0"]])
    def test_bad_overrides(self, small_yaml, tmp_path, args):
        assert main(["design", str(small_yaml), "-o", str(tmp_path), *args]) == EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert main(["design", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG

    def test_bad_log_level(self, small_yaml, tmp_path):
        assert main(["--log-level", "chatty", "design", str(small_yaml), "-o", str(tmp_path)]) == EXIT_CONFIG


class TestEvaluate:
    def test_report(self, designed, tmp_path):
        cfg, out = designed
        assert main(["evaluate", str(cfg), str(out / "design.json"), "-o", str(tmp_path),
                     "--snr", "0", "10", "--figures"]) == EXIT_OK
        rep = json.loads((tmp_path / "evaluation.json").read_text())
        d = load_design(out / "design.json")
        sc = scenario_from_dict(d["scenario"])
        for row, blk in zip(rep["blocks"], d["blocks"]):
            assert row["feasible"]
            zl = unpack_complex(row["zero_lag"])[0]
            assert abs(zl - 1) <= 1e-9
            s = unpack_complex(blk["s"])
            assert row["imsr_db"] == imsr(s, build_beampattern_matrices(sc))
            assert row["ser"]["snr_db"] == [0.0, 10.0]
        for name in ("block1_beampattern.csv", "block2_range_profile.csv", "block1_ser.csv",
                     "block1_beampattern.png", "block2_range_profile.png", "ser.png"):
            assert (tmp_path / name).is_file()

    def test_malformed_design(self, designed, tmp_path):
        cfg, _ = designed
        bad = tmp_path / "bad.json"
        bad.write_text("{ nope")
        assert main(["evaluate", str(cfg), str(bad), "-o", str(tmp_path)]) == EXIT_CONFIG
        d = json.loads((designed[1] / "design.json").read_text())
        d["blocks"][0]["s"] = d["blocks"][0]["s"][:4]
        bad.write_text(json.dumps(d))
        assert main(["evaluate", str(cfg), str(bad), "-o", str(tmp_path)]) == EXIT_CONFIG

    def test_tampered_design_reported_infeasible(self, designed, tmp_path):
        cfg, out = designed
        d = json.loads((out / "design.json").read_text())
        d["blocks"][0]["s"] = (3 * np.asarray(d["blocks"][0]["s"])).tolist()
        bad = tmp_path / "tampered.json"
        bad.write_text(json.dumps(d))
        assert main(["evaluate", str(cfg), str(bad), "-o", str(tmp_path)]) == EXIT_INFEASIBLE

    def test_trial_floor(self, designed, tmp_path):
        cfg, out = designed
        assert main(["evaluate", str(cfg), str(out / "design.json"), "--trials", "10"]) == EXIT_CONFIG


class TestValidate:
    def test_default_passes(self, capsys):
        assert main(["validate"]) == EXIT_OK
        assert "checks passed" in capsys.readouterr().out

    def test_filter_runs_only_ci(self, capsys, tmp_path):
        assert main(["validate", "--filter", "ci", "-o", str(tmp_path)]) == EXIT_OK
        lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith(("PASS", "FAIL"))]
        assert lines and all(l.split()[1] == "ci" for l in lines)
        assert (tmp_path / "validation.csv").is_file()

    def test_tampered_tolerance_fails(self, monkeypatch, capsys):
        monkeypatch.setenv(ENV_TOL, "1e-300")
        assert main(["validate", "--filter", "power"]) == EXIT_VALIDATION
        assert "FAIL" in capsys.readouterr().out


class TestSweep:
    def test_grid(self, small_yaml, tmp_path):
        assert main(["sweep", str(small_yaml), "-o", str(tmp_path), "--blocks", "1",
                     "--grid", "lambda_g=0.5,2"]) == EXIT_OK
        with open(tmp_path / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["lambda_g"]) for r in rows] == [0.5, 2.0]
        assert all(r["status"] == "ok" for r in rows)
        assert json.loads((tmp_path / "sweep.json").read_text())["grid"] == {"lambda_g": [0.5, 2.0]}

    @pytest.mark.parametrize("grid", [["--grid", "foo=1"], ["--grid", "eta=a,b"], []])
    def test_bad_grid(self, small_yaml, tmp_path, grid):
        assert main(["sweep", str(small_yaml), "-o", str(tmp_path), *grid]) == EXIT_CONFIG
