import csv
import json

import numpy as np
import pytest
import yaml

from collapsesim.cli import main


def write_config(path, data):
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh)
    return str(path)


def base_config(**overrides):
    cfg = {
        "grid": {"dims": [8], "spacing": 1.0},
        "particles": [{"mass": 1.0, "kinetic": True,
                       "initial": {"type": "gaussian", "center": [4.0],
                                   "width": 1.5, "momentum": [0.3]}}],
        "model": {"kind": "csl", "sigma": 1.0, "gamma": 1.0, "G": 0.1},
        "integration": {"dt": 1e-4, "steps": 200, "ensemble": 1, "seed": 7},
        "output": {"record_every": 10},
    }
    for key, val in overrides.items():
        cfg[key] = val
    return cfg


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


class TestRun:
    def test_minimal_run_trace_column(self, tmp_path):
        cfg = write_config(tmp_path / "run.yaml", base_config())
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
        header, data = read_csv(tmp_path / "out" / "trajectory_0000.csv")
        assert header[0].startswith("t ")
        trace = data[:, header.index("trace (1)")]
        assert np.abs(trace - 1.0).max() < 1e-10
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["seeds"] == [7]
        assert "wall_time_s" in summary

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path / "run.yaml", base_config())
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b")])
        a = (tmp_path / "a" / "trajectory_0000.csv").read_bytes()
        b = (tmp_path / "b" / "trajectory_0000.csv").read_bytes()
        assert a == b

    def test_thread_count_does_not_change_bytes(self, tmp_path, monkeypatch):
        # ensemble workers are reduced in seed order: COLLAPSE_SIM_THREADS
        # bounds the pool without touching the outputs
        data = base_config()
        data["integration"]["ensemble"] = 3
        cfg = write_config(tmp_path / "run.yaml", data)
        monkeypatch.setenv("COLLAPSE_SIM_THREADS", "1")
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        monkeypatch.setenv("COLLAPSE_SIM_THREADS", "3")
        main(["run", "--config", cfg, "--out", str(tmp_path / "b")])
        for i in range(3):
            fa = (tmp_path / "a" / f"trajectory_{i:04d}.csv").read_bytes()
            fb = (tmp_path / "b" / f"trajectory_{i:04d}.csv").read_bytes()
            assert fa == fb

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write_config(tmp_path / "run.yaml", base_config())
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--seed", "99", "--out", str(tmp_path / "b")])
        a = (tmp_path / "a" / "trajectory_0000.csv").read_bytes()
        b = (tmp_path / "b" / "trajectory_0000.csv").read_bytes()
        assert a != b

    def test_cat_decay_rate_matches_analyze(self, tmp_path):
        # cross-command self-consistency: the noise-averaged run's
        # off-diagonal decay equals the closed-form rate table entry
        from collapsesim.analysis import fit_offdiagonal_decay

        x, y = 2, 6
        run_cfg = base_config()
        run_cfg["particles"] = [{"mass": 1.0, "kinetic": False,
                                 "initial": {"type": "cat", "centers": [[2.0], [6.0]],
                                             "width": 0.45}}]
        run_cfg["model"] = {"kind": "csl", "sigma": 1.0, "gamma": 1.0, "G": 0.2}
        run_cfg["integration"] = {"dt": 1.2e-3, "steps": 300, "ensemble": 1,
                                  "seed": 0, "representation": "mean"}
        run_cfg["output"] = {"record_every": 3, "offdiagonal_pairs": [[x, y]]}
        run_cfg["analyze"] = {"rate": {"separations": [0, 1, 2, 3, 4]}}
        cfg = write_config(tmp_path / "run.yaml", run_cfg)
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
        header, data = read_csv(tmp_path / "out" / "trajectory_0000.csv")
        col = header.index(f"abs_rho_{x}_{y} (1)")
        series = data[:, col]
        assert series[-1] < 0.5 * series[0]  # visibly decaying
        fitted = fit_offdiagonal_decay(data[:, 0], series)

        assert main(["analyze", "rate", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 0
        _, table = read_csv(tmp_path / "out" / "rate.csv")
        rate_d4 = table[table[:, 0] == 4.0, 3][0]
        assert fitted == pytest.approx(rate_d4, rel=0.01)

    def test_invalid_config_exit_2(self, tmp_path):
        cfg = write_config(tmp_path / "bad.yaml", {"grid": {"dims": [8]}})
        assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_guard_trip_exit_3(self, tmp_path, capsys):
        data = base_config()
        data["model"]["G"] = 5.0
        data["integration"]["dt"] = 0.05
        cfg = write_config(tmp_path / "run.yaml", data)
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 3
        err = capsys.readouterr().err
        assert "step-size" in err and "step" in err


class TestAnalyze:
    def test_kappa_scan_minimum_row(self, tmp_path):
        data = {
            "grid": {"dims": [6, 6, 6], "spacing": 1.0},
            "particles": [{"mass": 1.0, "kinetic": False,
                           "initial": {"type": "gaussian", "center": [3.0, 3.0, 3.0],
                                       "width": 1.0}}],
            "model": {"kind": "dp", "sigma": 1.1, "kappa": 2.0, "G": 1.0},
            "analyze": {"kappa_scan": {"kappas": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
                                       "separation": 2}},
        }
        cfg = write_config(tmp_path / "scan.yaml", data)
        assert main(["analyze", "kappa-scan", "--config", cfg,
                     "--out", str(tmp_path)]) == 0
        _, table = read_csv(tmp_path / "kappa_scan.csv")
        best = table[np.argmin(table[:, 1]), 0]
        flagged = table[table[:, 2] == 1.0, 0]
        assert best == 2.0 and list(flagged) == [2.0]

    def test_pair_potential_newton_column(self, tmp_path):
        data = {
            "grid": {"dims": [32, 32, 32], "spacing": 1.0},
            "particles": [
                {"mass": 1.0, "initial": {"type": "gaussian", "center": [8.0] * 3,
                                          "width": 1.0}},
                {"mass": 1.0, "initial": {"type": "gaussian", "center": [24.0] * 3,
                                          "width": 1.0}}],
            "model": {"kind": "csl", "sigma": 1.0, "gamma": 1.0, "G": 1.0},
            "analyze": {"pair_potential": {"separations": [8]}},
        }
        cfg = write_config(tmp_path / "pair.yaml", data)
        assert main(["analyze", "pair-potential", "--config", cfg,
                     "--out", str(tmp_path)]) == 0
        header, table = read_csv(tmp_path / "pair_potential.csv")
        assert header[-1].startswith("newton_ratio")
        assert table[0, -1] == pytest.approx(1.0, abs=0.02)

    def test_rate_table_zero_separation_row(self, tmp_path):
        data = base_config()
        data["particles"][0]["kinetic"] = False
        data["analyze"] = {"rate": {"separations": [0, 1, 2]}}
        cfg = write_config(tmp_path / "rate.yaml", data)
        assert main(["analyze", "rate", "--config", cfg, "--out", str(tmp_path)]) == 0
        _, table = read_csv(tmp_path / "rate.csv")
        assert table[0, 0] == 0.0
        assert np.abs(table[0, 1:]).max() < 1e-14

    def test_linearity_report(self, tmp_path):
        data = base_config()
        data["particles"] = [{"mass": 1.0,
                              "initial": {"type": "cat", "centers": [[2.0], [6.0]],
                                          "width": 0.7}}]
        data["model"] = {"kind": "csl", "sigma": 1.0, "gamma": 1.0, "G": 0.1}
        data["integration"] = {"dt": 1e-4, "steps": 100, "seed": 3, "ensemble": 1}
        data["analyze"] = {"linearity": {"time": 0.01, "samples": 20}}
        cfg = write_config(tmp_path / "lin.yaml", data)
        assert main(["analyze", "linearity", "--config", cfg,
                     "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "linearity.json").read_text())
        assert report["linear"] is True
        assert report["trace_distance"] < report["tolerance"]


class TestPresets:
    def test_text_lists_sigma_values(self, capsys):
        assert main(["presets"]) == 0
        out = capsys.readouterr().out
        assert "1e-07 m" in out
        assert "1e-14 m" in out

    def test_json_flag_valid_json(self, capsys):
        assert main(["presets", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["presets"]["grw-csl"]["sigma_m"] == 1e-7
        assert payload["presets"]["dp"]["kappa"] == 2.0
        assert "lattice_mapping" in payload

    def test_preset_lattice_example_present(self, capsys):
        main(["presets", "--json"])
        payload = json.loads(capsys.readouterr().out)
        ex = payload["presets"]["grw-csl"]["lattice_example"]
        assert ex["sigma_lattice"] == pytest.approx(1.0)
