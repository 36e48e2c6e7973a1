import csv
import json
import subprocess
import sys
from decimal import Decimal
from pathlib import Path

import pytest

from ftrlink.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, exp, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"experiment": exp}, indent=2))
    return path


def ris_op(**over):
    exp = {
        "kind": "ris-op",
        "channel": {"hop1": {"m": 5, "K": 3, "delta": 0.5, "sigma2": 0.5},
                    "hop2": {"m": 10, "K": 7, "delta": 0.7, "sigma2": 0.3}},
        "system": {"L": 2, "noise": 1.0},
        "gamma_th": 1.0,
        "sweep": {"variable": "P_dB", "start": 0, "stop": 4, "points": 3},
        "output": "ris.csv",
    }
    exp.update(over)
    return exp


class TestValidate:
    def test_ok_lists_plan(self, tmp_path, capsys):
        assert main(["validate", str(write_config(tmp_path, ris_op()))]) == 0
        out = capsys.readouterr().out
        assert out.startswith("ok") and out.count("ris-op L=2") == 3

    def test_closed_form_cap(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ris_op(system={"L": 8, "noise": 1.0}))
        assert main(["validate", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "L <= 4" in err and "mc-validate" in err

    def test_missing_hardware(self, tmp_path, capsys):
        exp = {
            "kind": "af-op", "hw_mode": "impaired",
            "channel": ris_op()["channel"], "system": {"noise": 1.0}, "gamma_th": 1.0,
            "sweep": {"variable": "P_dB", "values": [0.0]},
        }
        assert main(["validate", str(write_config(tmp_path, exp))]) == 2
        assert "hardware" in capsys.readouterr().err

    def test_malformed_json_reports_position(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "experiment": {\n    "kind": "ris-op",,\n  }\n}\n')
        assert main(["validate", str(path)]) == 2
        assert "3:" in capsys.readouterr().err

    def test_field_type(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ris_op(gamma_th="high"))
        assert main(["validate", str(cfg)]) == 2
        assert "gamma_th" in capsys.readouterr().err

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_configs(self, path):
        assert main(["validate", str(path)]) == 0


class TestRun:
    def test_empty_sweep(self, tmp_path):
        cfg = write_config(tmp_path, ris_op(sweep={"variable": "P_dB", "start": 0, "stop": 4, "points": 0}))
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--out", str(out)]) == 2
        assert not (out / "ris.csv").exists()

    def test_header(self, tmp_path):
        cfg = write_config(tmp_path, ris_op())
        assert main(["run", str(cfg), "--out", str(tmp_path)]) == 0
        with open(tmp_path / "ris.csv") as fh:
            header = fh.readline().strip().split(",")
        assert header[:8] == ["sweep_variable", "sweep_value", "series", "analytic", "mc_mean",
                              "mc_std_error", "truncation_eps", "wall_time_s"]

    def test_rerun_is_byte_identical(self, tmp_path):
        exp = ris_op(mc={"trials": 2000, "seed": 3})
        cfg = write_config(tmp_path, exp)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", str(cfg), "--out", str(a), "--threads", "1"]) == 0
        assert main(["run", str(cfg), "--out", str(b), "--threads", "4"]) == 0
        assert (a / "ris.csv").read_bytes() == (b / "ris.csv").read_bytes()

    def test_thread_env(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, ris_op(mc={"trials": 2000, "seed": 3}))
        monkeypatch.setenv("FTRLINK_THREADS", "3")
        assert main(["run", str(cfg), "--out", str(tmp_path)]) == 0
        monkeypatch.setenv("FTRLINK_THREADS", "many")
        assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2

    def test_seed_override(self, tmp_path):
        cfg = write_config(tmp_path, ris_op(mc={"trials": 2000, "seed": 3}))
        main(["run", str(cfg), "--out", str(tmp_path / "a")])
        main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"])
        assert (tmp_path / "a" / "ris.csv").read_bytes() != (tmp_path / "b" / "ris.csv").read_bytes()

    def test_timing_column(self, tmp_path):
        cfg = write_config(tmp_path, ris_op())
        main(["run", str(cfg), "--out", str(tmp_path), "--timing"])
        rows = read_rows(tmp_path / "ris.csv")
        assert all(float(r["wall_time_s"]) >= 0 for r in rows)

    def test_truncation_table(self, tmp_path):
        assert main(["run", str(CONFIGS / "table2_truncation.json"), "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "table2_truncation.csv")
        got = [f"{float(r['truncation_eps']):.2g}" for r in rows]
        assert got == ["6.5e-06", "7.9e-06", "8.5e-06", "8.3e-06"]

    def test_compare_single_point(self, tmp_path):
        assert main(["run", str(CONFIGS / "compare_single_point.json"), "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "compare_single_point.csv")
        assert [r["series"] for r in rows] == ["ris", "af-any-power"]
        for r in rows:
            assert r["intervals_overlap"] in ("0", "1")
            assert abs(float(r["analytic"]) - float(r["mc_mean"])) <= 3 * float(r["mc_std_error"]) + 1e-3
        overlap = {r["intervals_overlap"] for r in rows}
        assert len(overlap) == 1

    def test_numbers_round_trip(self, tmp_path):
        cfg = write_config(tmp_path, ris_op())
        main(["run", str(cfg), "--out", str(tmp_path)])
        for r in read_rows(tmp_path / "ris.csv"):
            digits = Decimal(r["analytic"]).normalize().as_tuple().digits
            assert len(digits) <= 17
            assert float(repr(float(r["analytic"]))) == float(r["analytic"])

    def test_console_entry_point(self, tmp_path):
        cfg = write_config(tmp_path, ris_op())
        res = subprocess.run([sys.executable, "-m", "ftrlink.cli", "validate", str(cfg)],
                             capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.startswith("ok")
