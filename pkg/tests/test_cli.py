import csv
import hashlib
import json

import numpy as np
import pytest

from hypsoliton import cli
from hypsoliton.cli import ConfigError, RunConfig, parse_range, run


def read_table(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestConfig:
    @pytest.mark.parametrize("command", cli.COMMANDS)
    def test_round_trip(self, command):
        cfg = RunConfig.defaults(command)
        again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    def test_set_coerces_by_default_type(self):
        cfg = RunConfig.defaults("groundstate")
        cfg.set("grid.n", "500")
        cfg.set("model.lambda", "0.25")
        assert cfg.get("grid.n") == 500 and cfg.get("model.lambda") == 0.25
        with pytest.raises(ConfigError):
            cfg.set("grid.n", "1.5")
        with pytest.raises(ConfigError):
            cfg.set("grid.bogus", "1")

    def test_wrong_command_in_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(RunConfig.defaults("sweep").to_dict()))
        with pytest.raises(ConfigError):
            RunConfig.load(path, "groundstate")

    def test_parse_range(self):
        assert np.allclose(parse_range("0.5:1:0.1"), [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
        assert len(parse_range("0.5:2:0.1")) == 16
        for bad in ("1:0:0.1", "0:1:0", "a:b"):
            with pytest.raises(ConfigError):
                parse_range(bad)


class TestExitCodes:
    def test_bad_power_is_a_config_error(self, tmp_path, capsys):
        assert run(["groundstate", "--p", "5", "--out", str(tmp_path)]) == 2
        assert "model.p" in capsys.readouterr().err

    def test_lambda_below_spectrum(self, tmp_path, capsys):
        assert run(["groundstate", "--d", "3", "--lambda", "-1.5", "--out", str(tmp_path)]) == 2
        assert "lambda" in capsys.readouterr().err

    def test_solver_budget(self, tmp_path, capsys):
        assert run(["groundstate", "--n", "800", "--max-iters", "3", "--out", str(tmp_path)]) == 3
        assert "last_residual" in capsys.readouterr().err

    def test_unreadable_profile(self, tmp_path):
        assert run(["rearrange", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2

    def test_unsupported_dimension(self, tmp_path):
        assert run(["heatkernel", "--d", "9", "--out", str(tmp_path)]) == 2

    def test_orbital_needs_subcritical_power(self, tmp_path):
        assert run(["orbital", "--p", "3", "--out", str(tmp_path)]) == 2


class TestCommands:
    def test_groundstate(self, tmp_path):
        assert run(["groundstate", "--n", "1000", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "solution.json").read_text())
        assert summary["converged"] and summary["residual"] < 1e-8
        rows = read_table(tmp_path / "solution.csv")
        assert len(rows) == 1000 and set(rows[0]) == {"r", "u", "R"}
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "groundstate" and manifest["grid"]["n"] == 1000

    def test_sweep(self, tmp_path):
        args = ["sweep", "--set", "sweep.lambda=0.8:1.2:0.1", "--h", "0.01", "--out", str(tmp_path)]
        assert run(args) == 0
        rows = read_table(tmp_path / "sweep.csv")
        lam = [float(r["lambda"]) for r in rows]
        assert len(lam) == 5 and all(b > a for a, b in zip(lam, lam[1:]))
        assert {r["verdict"] for r in rows} <= {"stable", "unstable", "inconclusive"}

    def test_spectrum(self, tmp_path):
        assert run(["spectrum", "--n", "200", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "spectrum.json").read_text())
        assert report["admissibility"]["condition_2_only_zero_in_gap"]["verdict"] is True

    def test_evolve_and_blowup(self, tmp_path):
        assert run(["evolve", "--h", "0.02", "--t-end", "0.2", "--out", str(tmp_path / "e")]) == 0
        rows = read_table(tmp_path / "e" / "trace.csv")
        assert float(rows[-1]["t"]) == pytest.approx(0.2)
        args = ["blowup", "--h", "0.01", "--t-max", "0.05", "--amplitude", "1", "--out", str(tmp_path / "b")]
        assert run(args) == 0
        out = json.loads((tmp_path / "b" / "blowup.json").read_text())
        assert out["t_reached"] == pytest.approx(0.05) and out["blowup_time"] is None

    def test_heatkernel(self, tmp_path):
        assert run(["heatkernel", "--d", "2", "--n-rho", "21", "--out", str(tmp_path)]) == 0
        rows = read_table(tmp_path / "heatkernel.csv")
        assert len(rows) == 21

    def test_rearrange_from_file(self, tmp_path):
        r = np.linspace(0.005, 7.995, 800)
        src = tmp_path / "profile.csv"
        src.write_text("r,f\n" + "\n".join(f"{a},{np.exp(-(a - 2) ** 2)}" for a in r) + "\n")
        assert run(["rearrange", "--input", str(src), "--out", str(tmp_path / "o")]) == 0
        rows = read_table(tmp_path / "o" / "rearranged.csv")
        star = np.array([float(row[list(row)[-1]]) for row in rows])
        assert np.all(np.diff(star) <= 0)

    def test_output_location_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUT, str(tmp_path))
        assert run(["heatkernel", "--n-rho", "11"]) == 0
        assert (tmp_path / "heatkernel" / "manifest.json").exists()

    def test_reproducible_output(self, tmp_path):
        args = ["rearrange", "--seed", "3", "--h", "0.01"]
        assert run(args + ["--out", str(tmp_path / "a")]) == 0
        assert run(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("rearranged.csv", "rearrange.json"):
            assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)

    def test_config_file_with_override(self, tmp_path):
        cfg = RunConfig.defaults("heatkernel")
        cfg.set("kernel.n_rho", 5)
        path = tmp_path / "run.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert run(["heatkernel", "--config", str(path), "--t", "0.5", "--out", str(tmp_path / "o")]) == 0
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["kernel"]["n_rho"] == 5 and manifest["kernel"]["t"] == 0.5
