import json
import subprocess
import sys

import numpy as np
import pytest

from seqtherm.cli import main
from seqtherm.errors import ValidationError
from seqtherm.experiments import (
    ExperimentConfig,
    csv_body,
    read_result_table,
    run,
)
from seqtherm.parallel import worker_count
from seqtherm.presets import PRESET_IDS, preset


class TestConfig:
    def test_json_round_trip_identity(self):
        cfg = preset("fig6b")
        clone = ExperimentConfig.from_json(cfg.to_json())
        assert clone == cfg

    def test_unknown_fields_rejected(self):
        with pytest.raises(ValidationError, match="unknown config fields"):
            ExperimentConfig.from_dict({"scenario": "bayes", "n_sites": 4, "bogus": 1})

    def test_missing_required_scenario_field(self):
        cfg = ExperimentConfig(scenario="bayes", n_sites=4)
        with pytest.raises(ValidationError, match="requires field"):
            cfg.validate()

    def test_zero_dataset_count_rejected(self):
        cfg = ExperimentConfig(
            scenario="bayes", n_sites=4, kappa=1.0, tau=4.0,
            n_seq=[2], true_temperature=0.3, n_datasets=0,
        )
        with pytest.raises(ValidationError, match="M .*positive"):
            cfg.validate()

    def test_every_preset_id_resolves(self):
        for fid in PRESET_IDS:
            cfg = preset(fid)
            cfg.validate()
            assert cfg.figure == fid

    def test_unknown_preset_lists_valid_ids(self):
        with pytest.raises(ValidationError, match="fig1a"):
            preset("fig999")

    def test_preset_examples(self):
        fig6b = preset("fig6b")
        assert fig6b.n_sites == 4 and fig6b.kappa == 1.0 and fig6b.tau == 4.0
        assert isinstance(fig6b.temperature, list)
        assert max(fig6b.n_seq) >= 8
        fig1a = preset("fig1a")
        assert fig1a.n_sites == 4 and fig1a.temperature == 1.0 and fig1a.kappa == 1.0
        figa1 = preset("figA1")
        assert figa1.n_sites == 8 and figa1.kappa == 0.0
        assert figa1.true_temperature == 0.3 and figa1.n_datasets == 5000


class TestResultTables:
    def test_metadata_config_reparses_identically(self, tmp_path):
        cfg = preset("fig3a")
        paths = run(cfg, out_dir=tmp_path)
        table = read_result_table(paths[0])
        assert ExperimentConfig.from_json(table.metadata["config"]) == cfg

    def test_units_recorded_for_every_column(self, tmp_path):
        paths = run(preset("fig3a"), out_dir=tmp_path)
        table = read_result_table(paths[0])
        units = dict(pair.split("=") for pair in table.metadata["units"].split(";"))
        assert set(units) == set(table.columns)

    def test_bodies_deterministic_for_fixed_seed(self, tmp_path):
        cfg = preset("fig3a")
        first = run(cfg, out_dir=tmp_path / "a")
        second = run(cfg, out_dir=tmp_path / "b")
        assert csv_body(first[0]) == csv_body(second[0])

    def test_single_site_readout_carries_no_information(self, tmp_path):
        paths = run(preset("fig3a"), out_dir=tmp_path)
        table = read_result_table(paths[0])
        col = {c: i for i, c in enumerate(table.columns)}
        single = [r for r in table.rows if r[col["n_measured"]] == 1]
        assert single and all(abs(r[col["fisher"]]) < 1e-10 for r in single)


class TestCliInterface:
    def test_run_with_config_file(self, tmp_path):
        cfg = ExperimentConfig(
            scenario="static-fi", n_sites=[2, 3], temperature=0.4,
            out=str(tmp_path / "out"),
        )
        config_path = tmp_path / "cfg.json"
        config_path.write_text(cfg.to_json())
        assert main(["run", "--config", str(config_path)]) == 0
        assert (tmp_path / "out" / "static_fi.csv").exists()

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1

    def test_invalid_json_diagnostic(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--config", str(bad)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_invalid_field_diagnostic(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"scenario": "bayes", "n_sites": 4, "typo": 1}))
        assert main(["run", "--config", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "typo" in err

    def test_zero_datasets_is_config_error(self, tmp_path, capsys):
        cfg = dict(scenario="bayes", n_sites=2, kappa=1.0, tau=2.0, n_seq=[2],
                   true_temperature=0.3, n_datasets=0, out=str(tmp_path))
        path = tmp_path / "m0.json"
        path.write_text(json.dumps(cfg))
        assert main(["run", "--config", str(path)]) == 1
        assert "M" in capsys.readouterr().err

    def test_resource_guard_is_runtime_error(self, tmp_path, capsys):
        cfg = dict(scenario="intermediate-regime", n_sites=7, kappa=1.0, tau=2.0,
                   n_seq=[2], temperature=0.5, out=str(tmp_path))
        path = tmp_path / "big.json"
        path.write_text(json.dumps(cfg))
        assert main(["run", "--config", str(path)]) == 2
        assert "runtime error" in capsys.readouterr().err

    def test_unknown_preset_exit_code(self, capsys):
        assert main(["preset", "fig999"]) == 1
        assert "valid ids" in capsys.readouterr().err

    def test_preset_list(self, capsys):
        assert main(["preset", "--list"]) == 0
        out = capsys.readouterr().out
        for fid in PRESET_IDS:
            assert fid in out

    def test_preset_seed_and_out(self, tmp_path):
        assert main(["preset", "fig3a", "--seed", "42", "--out", str(tmp_path)]) == 0
        table = read_result_table(tmp_path / "fig3a.csv")
        assert table.metadata["seed"] == "42"

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "seqtherm.cli", "preset", "fig3a",
             "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert (tmp_path / "fig3a.csv").exists()


class TestWorkerCount:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("SEQTHERM_THREADS", "3")
        assert worker_count() == 3

    def test_explicit_override_wins(self, monkeypatch):
        monkeypatch.setenv("SEQTHERM_THREADS", "3")
        assert worker_count(2) == 2

    def test_garbage_env_ignored(self, monkeypatch):
        monkeypatch.setenv("SEQTHERM_THREADS", "lots")
        assert worker_count() >= 1


class TestThermalizeScenario:
    def test_columns_and_convergence_direction(self, tmp_path):
        cfg = ExperimentConfig(
            scenario="thermalize", n_sites=3, temperature=1.0, kappa=2.0,
            t_max=30.0, dt=0.5, out=str(tmp_path),
        )
        paths = run(cfg, out_dir=tmp_path)
        table = read_result_table(paths[0])
        assert table.columns == ["t", "fidelity_down_state", "fidelity_random_state"]
        first, last = table.rows[0], table.rows[-1]
        assert last[1] > first[1] and last[2] > first[2]
