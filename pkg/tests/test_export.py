"""
Unit tests for run artifacts.
"""
import numpy as np
import orjson
import pytest

from diagnostics import run_table
from dyadic import psi_preset
from evolve import integrate_dyadic
from export import (
    field_from_json,
    field_to_json,
    read_field,
    read_json,
    read_table,
    to_json,
    trajectory_from_table,
    write_field,
    write_json,
    write_table,
)
from field import random_field
from lattice import Frequency
from models import ModelKind, SimConfig


class TestJson:
    """Test suite for JSON reports."""

    def test_reports_and_arrays(self, tmp_path):
        """Test pydantic models, numpy arrays and complex numbers."""
        config = SimConfig(shells=3, t_end=1.0)
        payload = {"config": config, "values": np.arange(3.0), "c": 1 + 2j}
        data = orjson.loads(to_json(payload))
        assert data["config"]["shells"] == 3
        assert data["values"] == [0.0, 1.0, 2.0]
        assert data["c"] == {"re": 1.0, "im": 2.0}
        path = write_json(tmp_path / "nested" / "report.json", payload)
        assert read_json(path)["config"]["model"] == "euler"

    def test_unserializable(self):
        """Test that unknown objects are refused."""
        with pytest.raises(TypeError):
            to_json({"x": object()})


class TestFieldFiles:
    """Test suite for field JSON files."""

    def test_entries(self):
        """Test one labelled entry per positive frequency."""
        field = random_field(2, np.random.default_rng(1))
        data = field_to_json(field)
        assert data["N"] == 2
        assert len(data["modes"]) == 18
        first = next(entry for entry in data["modes"] if entry["k"] == [2, 1, 0])
        assert (first["shell"], first["kind"], first["permutation"], first["sign"]) == (0, "K", "id", "+")

    def test_file_round_trip(self, tmp_path):
        """Test write_field then read_field."""
        field = random_field(3, np.random.default_rng(2))
        restored = read_field(write_field(tmp_path / "u.json", field))
        np.testing.assert_array_equal(restored.amplitudes, field.amplitudes)

    def test_negative_entries_conjugated(self):
        """Test that an entry on -k stores conj(c) at k."""
        data = {"N": 0, "modes": [{"k": [-2, -1, 0], "re": 0.5, "im": 0.25}]}
        field = field_from_json(data)
        assert field.amplitude(Frequency(2, 1, 0)) == 0.5 - 0.25j

    def test_outside_lattice(self):
        """Test that entries outside ℳ_{≤N} are refused."""
        with pytest.raises(ValueError):
            field_from_json({"N": 0, "modes": [{"k": [7, 4, 1], "re": 1.0, "im": 0.0}]})


class TestTables:
    """Test suite for CSV tables."""

    def test_round_trip(self, tmp_path):
        """Test 17-digit columns survive a write/read cycle."""
        columns = {"t": np.array([0.0, 0.1, 1.0 / 3.0]), "psi_0": np.array([1.0, np.pi, -2e-300])}
        table = read_table(write_table(tmp_path / "run.csv", columns))
        assert list(table) == ["t", "psi_0"]
        for name in columns:
            np.testing.assert_array_equal(table[name], columns[name])

    def test_header(self, tmp_path):
        """Test the plain header row."""
        path = write_table(tmp_path / "one.csv", {"a": np.array([1.0]), "b": np.array([2.0])})
        assert path.read_text().splitlines()[0] == "a,b"
        assert read_table(path)["b"].tolist() == [2.0]

    def test_trajectory_from_table(self, tmp_path):
        """Test that a reloaded run keeps states and derivatives."""
        config = SimConfig(model="hypo", nu=0.02, alpha=0.25, shells=4, t_end=0.2)
        traj = integrate_dyadic(psi_preset("delta0", 4), config)
        table = read_table(write_table(tmp_path / "run.csv", run_table(traj)))
        loaded = trajectory_from_table(table, alpha=0.25, nu=0.02)
        assert loaded.config.model == ModelKind.HYPO
        assert loaded.N == 4
        np.testing.assert_array_equal(loaded.states, traj.states)
        np.testing.assert_allclose(loaded.derivatives, traj.derivatives, rtol=1e-12, atol=1e-14)
        assert loaded.dissipated[-1] == pytest.approx(traj.dissipated[-1], rel=1e-3)

    def test_table_without_psi(self):
        """Test that tables without psi_n columns are refused."""
        with pytest.raises(ValueError):
            trajectory_from_table({"t": np.array([0.0])})
