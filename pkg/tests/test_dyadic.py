"""
Unit tests for the reduced shell system.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic import (
    DyadicState,
    alpha_from_tilde,
    coefficient_tables,
    lyapunov,
    lyapunov_bounds,
    lyapunov_r,
    lyapunov_rate,
    psi_preset,
    rhs,
    rhs_psi,
    shell_energies,
    shell_energy,
    shell_energy_rate,
)
from models import ModelKind, ParameterRangeError

psi_vectors = st.lists(st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=2, max_size=12)


class TestRightHandSide:
    """Test suite for dψ/dt."""

    def test_delta0(self):
        """Test that δ_0 only feeds shell 1, at rate 2π."""
        psi = psi_preset("delta0", 5)
        expected = np.zeros(6)
        expected[1] = 2.0 * math.pi
        np.testing.assert_allclose(rhs_psi(psi), expected, atol=1e-14)

    def test_drain_equals_next_attack(self):
        """Test D_n = A_{n+1}."""
        coeffs = coefficient_tables(10)
        np.testing.assert_allclose(coeffs.drain[:-1], coeffs.attack[1:], rtol=1e-15)
        assert coeffs.attack[0] == 0.0

    def test_euler_energy_conserved(self):
        """Test Σ ψ_n ψ_n' = 0 for the inviscid system."""
        rng = np.random.default_rng(1)
        for _ in range(20):
            psi = rng.standard_normal(15)
            rate = float(np.dot(psi, rhs_psi(psi)))
            assert abs(rate) <= 1e-10 * float(np.max(np.abs(rhs_psi(psi))))

    def test_state_wrapper(self):
        """Test that rhs(DyadicState) matches rhs_psi."""
        psi = np.array([1.0, 0.5, 0.25, 0.1])
        state = DyadicState(psi=psi, model=ModelKind.HYPO, alpha=0.3, nu=0.05)
        assert state.N == 3
        np.testing.assert_array_equal(rhs(state), rhs_psi(psi, 0.3, 0.05))

    def test_dissipation_damps(self):
        """Test that viscosity removes energy at rate Σ ν d_n ψ_n²."""
        psi = np.array([1.0, 0.5, 0.25])
        coeffs = coefficient_tables(2, 0.4, 0.1)
        rate = float(np.dot(psi, rhs_psi(psi, 0.4, 0.1)))
        assert rate == pytest.approx(-float(np.sum(coeffs.decay * psi ** 2)), rel=1e-12)

    def test_tables_read_only(self):
        """Test that cached coefficient tables cannot be modified."""
        coeffs = coefficient_tables(4, 0.2, 0.01)
        with pytest.raises(ValueError):
            coeffs.decay[0] = 1.0


class TestShellEnergies:
    """Test suite for E_n and its rate."""

    def test_tail_sums(self):
        """Test E_n = Σ_{m≥n} ψ_m²."""
        psi = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(shell_energies(psi), [14.0, 13.0, 9.0])
        assert shell_energy(psi, 1) == 13.0

    def test_shell_out_of_range(self):
        """Test that shells outside 0..N are rejected."""
        with pytest.raises(ValueError):
            shell_energy(np.ones(3), 3)

    @settings(max_examples=100, deadline=None)
    @given(psi_vectors, st.integers(min_value=0, max_value=11))
    def test_rate_matches_direct_sum(self, values, n):
        """Test the telescoped flux against 2 Σ_{m≥n} ψ_m ψ_m'."""
        psi = np.array(values)
        n = min(n, psi.size - 1)
        for alpha, nu in ((0.0, 0.0), (0.3, 0.05)):
            direct = 2.0 * float(np.dot(psi[n:], rhs_psi(psi, alpha, nu)[n:]))
            scale = max(1.0, float(np.max(np.abs(rhs_psi(psi, alpha, nu)))))
            assert shell_energy_rate(psi, n, alpha, nu) == pytest.approx(direct, abs=1e-11 * scale * psi.size)


class TestLyapunov:
    """Test suite for H_γ."""

    def test_r_value(self):
        """Test r(0.1)."""
        assert lyapunov_r(0.1) == pytest.approx(7.7446, rel=1e-4)

    def test_r_requires_positive_gamma(self):
        """Test the γ > 0 range."""
        with pytest.raises(ParameterRangeError) as exc_info:
            lyapunov_r(0.0)
        assert "gamma" in exc_info.value.inequality

    def test_delta0(self):
        """Test H_γ(δ_0) = r and dH_γ/dt = 2π."""
        psi = psi_preset("delta0", 6)
        H, r = lyapunov(psi, 0.25)
        assert H == pytest.approx(r)
        assert lyapunov_rate(psi, 0.25) == pytest.approx(2.0 * math.pi, rel=1e-14)

    def test_bounds_ordered(self):
        """Test the norm sandwich for nonnegative data."""
        rng = np.random.default_rng(4)
        for gamma in (0.05, 0.3, 0.9):
            lower, H, upper = lyapunov_bounds(rng.uniform(0.0, 1.0, 10), gamma)
            assert lower <= H <= upper

    def test_rate_matches_finite_difference(self):
        """Test the analytic rate against a centred difference of H_γ along the flow."""
        psi = np.array([0.8, 0.4, 0.2, 0.1, 0.05])
        h = 1e-6
        rate = rhs_psi(psi, 0.2, 0.01)
        fd = (lyapunov(psi + h * rate, 0.3)[0] - lyapunov(psi - h * rate, 0.3)[0]) / (2.0 * h)
        assert lyapunov_rate(psi, 0.3, 0.2, 0.01) == pytest.approx(fd, rel=1e-7)


class TestPresets:
    """Test suite for initial data presets."""

    def test_geometric(self):
        """Test geometric(q)."""
        np.testing.assert_allclose(psi_preset("geometric(0.5)", 3), [1.0, 0.5, 0.25, 0.125])

    def test_csv_file_is_padded(self, tmp_path):
        """Test that short CSV files are zero-padded."""
        path = tmp_path / "psi.csv"
        path.write_text("# psi\n0.9\n0.3\n")
        np.testing.assert_allclose(psi_preset(str(path), 3), [0.9, 0.3, 0.0, 0.0])

    def test_csv_file_too_long(self, tmp_path):
        """Test that files longer than N + 1 are rejected."""
        path = tmp_path / "psi.csv"
        path.write_text("1\n2\n3\n")
        with pytest.raises(ValueError):
            psi_preset(path, 1)

    def test_unknown_preset(self):
        """Test an unknown name."""
        with pytest.raises(ValueError):
            psi_preset("gaussian", 4)

    def test_alpha_from_tilde(self):
        """Test α = α̃ log 3 / (2 log 2)."""
        assert alpha_from_tilde(1.0) == pytest.approx(math.log(3.0) / (2.0 * math.log(2.0)))
        assert alpha_from_tilde(0.0) == 0.0
