import json

import numpy as np
import pytest
import yaml

from isacdesign.config import (
    DESK_YAML,
    SolverConfig,
    load_config,
    run_config_from_dict,
    scenario_from_dict,
)
from isacdesign.errors import ConfigurationError
from isacdesign.model import desk_scenario
from isacdesign.serialize import (
    TraceLog,
    dump_json,
    load_design,
    pack_complex,
    scenario_from_dict as scenario_from_record,
    scenario_to_dict,
    unpack_complex,
    write_csv,
)


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert cfg.ao_max_iter == 30 and cfg.ao_tol == 1e-5 and cfg.adpm_tol == 1e-5

    @pytest.mark.parametrize("change", [{"adpm_tol": 0}, {"rho_growth": 0.9}, {"ci_backoff": -1},
                                        {"ao_max_iter": 0}, {"ao_min_iter": -1}])
    def test_validation(self, change):
        with pytest.raises(ConfigurationError):
            SolverConfig(**change)


class TestLoadConfig:
    def test_desk_yaml_matches_desk_scenario(self, desk_yaml):
        rc = load_config(desk_yaml)
        ref = desk_scenario(0)
        assert np.array_equal(rc.scenario.symbols, ref.symbols)
        assert np.array_equal(rc.scenario.channels, ref.channels)
        assert rc.scenario.eta == pytest.approx(ref.eta)
        assert rc.num_blocks == 3 and rc.scenario_raw["n_t"] == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.yaml")

    @pytest.mark.parametrize("text", ["scenario: [1, 2", "- a\n- b\n", "extra: 1\n",
                                      "scenario:\n  bogus: 1\n", "run:\n  bogus: 1\n",
                                      "run:\n  ser_trials: 10\n", "scenario:\n  constellation: ask\n",
                                      "scenario:\n  channel_model: awgn\n", "run:\n  threads: 0\n"])
    def test_rejects_bad_files(self, tmp_path, text):
        path = tmp_path / "bad.yaml"
        path.write_text(text)
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_derived_keys(self):
        sc = scenario_from_dict({"gamma_u_db": 10.0, "eta_rel": 2.0, "p0": 2.0, "mainlobe": [-10, 10]})
        assert sc.gamma_u == pytest.approx(10.0)
        assert sc.eta == pytest.approx(2.0 / (20 * 4 * 2.0))
        assert sc.mainlobe == ((-10.0, 10.0),)

    def test_explicit_eta_wins(self):
        assert scenario_from_dict({"eta": 0.5, "eta_rel": 3.0}).eta == 0.5

    def test_rayleigh_and_qam(self):
        sc = scenario_from_dict({"channel_model": "rayleigh", "constellation": "qam", "order": 16})
        assert sc.constellation.kind == "qam" and sc.channels.shape == (16, 64)

    def test_run_section(self):
        rc = run_config_from_dict({}, {"snr_db": [1, 2], "adpm_tol": 1e-6, "threads": 2})
        assert rc.snr_db == (1.0, 2.0) and rc.solver.adpm_tol == 1e-6 and rc.threads == 2

    def test_desk_yaml_is_valid_yaml(self):
        raw = yaml.safe_load(DESK_YAML)
        assert set(raw) == {"scenario", "run"}


class TestSerialize:
    def test_complex_roundtrip(self, rng):
        z = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        packed = pack_complex(z)
        assert packed[:2] == [z[0].real, z[0].imag]
        assert np.array_equal(unpack_complex(packed), z)
        with pytest.raises(ConfigurationError):
            unpack_complex([1.0, 2.0, 3.0])

    def test_scenario_roundtrip(self):
        sc = desk_scenario(2, n_s=6, n_cp=1, num_symbols=3)
        back = scenario_from_record(json.loads(json.dumps(scenario_to_dict(sc))))
        assert np.array_equal(back.channels, sc.channels)
        assert back.eta == sc.eta and back.mainlobe == sc.mainlobe
        with pytest.raises(ConfigurationError):
            scenario_from_record({"n_t": 4})

    def test_dump_json_is_canonical(self, tmp_path):
        dump_json({"b": 1, "a": [0.1]}, tmp_path / "x.json")
        assert (tmp_path / "x.json").read_text() == '{\n "a": [\n  0.1\n ],\n "b": 1\n}\n'

    @pytest.mark.parametrize("content", ["not json", '{"format": "other"}', "[]",
                                         '{"format": "isacdesign.design/1", "scenario": {}}'])
    def test_load_design_validation(self, tmp_path, content):
        path = tmp_path / "d.json"
        path.write_text(content)
        with pytest.raises(ConfigurationError):
            load_design(path)
        with pytest.raises(ConfigurationError):
            load_design(tmp_path / "missing.json")

    def test_csv_uses_round_trip_floats(self, tmp_path):
        write_csv(tmp_path / "t.csv", ["a", "b"], [(0.1, "x"), (np.float64(1 / 3), 2)])
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines == ["a,b", "0.1,x", f"{1 / 3!r},2"]

    def test_trace_log(self, tmp_path):
        log = TraceLog(tmp_path / "t.jsonl")
        log({"k": np.float64(1.5), "n": 2})
        log.close()
        assert log.records == [{"k": 1.5, "n": 2}]
        assert json.loads((tmp_path / "t.jsonl").read_text()) == {"k": 1.5, "n": 2}
