"""
End-to-end tests for the fourier-lab command line.
"""
import numpy as np
import orjson
import pytest

from config import reload_settings
from export import read_json, read_table
from main import main, manifest_path


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Write outputs under tmp_path and keep logs on the console."""
    monkeypatch.setenv("LOG_TO_FILE", "false")
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "runs"))
    reload_settings()
    yield
    monkeypatch.undo()
    reload_settings()


class TestVerifyCommands:
    """Test suite for the lattice and interaction checks."""

    def test_lattice_to_stdout(self, capsys):
        """Test a passing lattice report printed as JSON."""
        assert main(["lattice", "verify", "--max-shell", "6"]) == 0
        report = orjson.loads(capsys.readouterr().out)
        assert report["passed"] is True
        assert report["frequencies_checked"] == 84

    def test_lattice_capacity(self):
        """Test that exceeding the integer capacity is a usage error."""
        assert main(["lattice", "verify", "--max-shell", "40", "--bits", "64"]) == 2

    def test_interactions_to_file(self, tmp_path):
        """Test the interaction report and its manifest."""
        out = tmp_path / "interactions.json"
        assert main(["interactions", "verify", "--max-m", "2", "--out", str(out)]) == 0
        assert len(read_json(out)["cases"]) == 27
        manifest = read_json(manifest_path(out))
        assert manifest["config"] == {"max_m": 2, "tol": 1e-12}
        assert manifest["finished_at"] is not None
        assert "numpy" in manifest["versions"]


class TestSimulate:
    """Test suite for the simulate command."""

    def test_dyadic_run(self, tmp_path, capsys):
        """Test the run table, manifest and summary line."""
        out = tmp_path / "run.csv"
        assert main(["simulate", "--shells", "4", "--t-end", "0.1", "--out", str(out)]) == 0
        table = read_table(out)
        assert [name for name in table if name.startswith("psi_")] == [f"psi_{n}" for n in range(5)]
        assert table["t"][-1] == 0.1
        assert "reached_t_end" in capsys.readouterr().out
        manifest = read_json(manifest_path(out))
        assert manifest["config"]["shells"] == 4
        assert manifest["config"]["model"] == "euler"

    def test_deterministic(self, tmp_path):
        """Test that identical invocations write identical tables."""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--shells", "5", "--t-end", "0.2", "--psi0", "geometric(0.5)"]
        assert main(args + ["--out", str(first)]) == 0
        assert main(args + ["--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_config_file_with_override(self, tmp_path):
        """Test that flags override the JSON config file."""
        config = tmp_path / "run.json"
        config.write_bytes(orjson.dumps({"shells": 3, "t_end": 0.05, "psi0": "geometric(0.5)"}))
        out = tmp_path / "run.csv"
        assert main(["simulate", "--config", str(config), "--shells", "5", "--out", str(out)]) == 0
        table = read_table(out)
        assert "psi_5" in table
        assert table["psi_1"][0] == 0.5

    def test_unknown_config_key(self, tmp_path):
        """Test that misspelled keys in the config file are refused."""
        config = tmp_path / "run.json"
        config.write_bytes(orjson.dumps({"shells": 3, "t_end": 0.05, "tend": 1.0}))
        assert main(["simulate", "--config", str(config)]) == 2

    def test_viscosity_sweep(self, tmp_path):
        """Test one table per ν value."""
        out = tmp_path / "sweep.csv"
        args = ["simulate", "--model", "hypo", "--alpha", "0.2", "--nu", "0.01", "0.1",
                "--shells", "4", "--t-end", "0.1", "--out", str(out)]
        assert main(args) == 0
        low, high = read_table(tmp_path / "sweep_0.csv"), read_table(tmp_path / "sweep_1.csv")
        assert high["E_0"][-1] < low["E_0"][-1] < 1.0
        assert read_json(manifest_path(tmp_path / "sweep_1.csv"))["config"]["nu"] == 0.1

    def test_galerkin_run(self, tmp_path):
        """Test that --galerkin reproduces the dyadic columns."""
        dyadic, galerkin = tmp_path / "d.csv", tmp_path / "g.csv"
        args = ["simulate", "--shells", "3", "--t-end", "0.05", "--psi0", "geometric(0.5)"]
        assert main(args + ["--out", str(dyadic)]) == 0
        assert main(args + ["--galerkin", "--out", str(galerkin)]) == 0
        a, b = read_table(dyadic), read_table(galerkin)
        np.testing.assert_allclose(b["psi_3"][-1], a["psi_3"][-1], rtol=1e-7)

    def test_hypo_without_viscosity(self):
        """Test that a hypodissipative run needs ν > 0."""
        assert main(["simulate", "--model", "hypo", "--shells", "3", "--t-end", "0.1"]) == 2

    def test_unknown_flag(self):
        """Test argparse usage errors."""
        assert main(["simulate", "--shells", "3", "--t-end", "0.1", "--bogus"]) == 2
        assert main([]) == 2


class TestDiagnose:
    """Test suite for the diagnose command."""

    @pytest.mark.slow
    def test_euler_report(self, tmp_path):
        """Test the bound, ladder and regularity sections of an Euler run."""
        run = tmp_path / "run.csv"
        assert main(["simulate", "--shells", "10", "--t-end", "1.0", "--out", str(run)]) == 0
        assert main(["diagnose", "--traj", str(run)]) == 0
        report = read_json(tmp_path / "runs" / "report.json")
        assert report["euler_bound"]["T_star"] == pytest.approx(6.57, abs=0.01)
        assert report["ladder"]["passed"] is True
        assert report["regularity"]["max_gronwall_residual"] <= 1e-9
        assert report["trajectory"]["model"] == "euler"

    def test_hypo_report(self, tmp_path):
        """Test the Lyapunov section of a hypodissipative run."""
        run, out = tmp_path / "hypo.csv", tmp_path / "hypo.json"
        assert main(["simulate", "--model", "hypo", "--nu", "0.01", "--alpha-tilde", "0.2",
                     "--shells", "10", "--t-end", "0.5", "--out", str(run)]) == 0
        assert main(["diagnose", "--traj", str(run), "--nu", "0.01", "--alpha-tilde", "0.2",
                     "--out", str(out)]) == 0
        report = read_json(out)
        assert report["lyapunov"]["qualifies"] is True
        assert report["lyapunov"]["T_bound"] == pytest.approx(11.06, rel=1e-3)
        assert "ladder" not in report

    def test_missing_table(self, tmp_path):
        """Test that a missing run file is a usage error."""
        assert main(["diagnose", "--traj", str(tmp_path / "absent.csv")]) == 2


class TestGridAndSheet:
    """Test suite for the physical-space commands."""

    def test_grid(self, tmp_path):
        """Test M³ rows with the fixed column set."""
        out = tmp_path / "grid.csv"
        assert main(["grid", "--psi0", "delta0", "--shells", "1", "--resolution", "9", "--out", str(out)]) == 0
        table = read_table(out)
        assert list(table) == ["x", "y", "z", "u1", "u2", "u3", "omega1", "omega2", "omega3",
                               "lambda1", "lambda2", "lambda3", "detS"]
        assert table["x"].size == 729
        assert np.all(table["lambda1"] <= table["lambda2"])

    def test_sheet(self, tmp_path):
        """Test the determinant identities in the sheet report."""
        out = tmp_path / "sheet.json"
        assert main(["sheet", "--epsilon", "0.5", "--truncation", "1000", "--out", str(out)]) == 0
        report = read_json(out)
        for point in ("origin", "region"):
            assert report[point]["observed"] == pytest.approx(report[point]["expected"], rel=1e-8)
        assert report["symmetry"]["sigma_mirror"] > 0.1
        assert len(report["field"]["modes"]) == 3000

    def test_sheet_epsilon_range(self):
        """Test that ε outside (0, 1) is a usage error."""
        assert main(["sheet", "--epsilon", "1.5", "--truncation", "10"]) == 2
