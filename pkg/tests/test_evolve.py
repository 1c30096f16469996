"""
Unit tests for the adaptive integrator, trajectories and blowup fits.
"""
import math

import numpy as np
import pytest

from diagnostics import energy_ladder, euler_blowup_bound
from dyadic import alpha_from_tilde, psi_preset
from evolve import (
    Trajectory,
    detect_blowup,
    fit_blowup,
    integrate_dyadic,
    integrate_galerkin,
    parity_defect_prediction,
    sweep,
)
from field import SpectralField, from_components, from_psi, sobolev_norm, symmetry_classify
from models import ModelKind, SimConfig, Termination


def euler_run(psi0, shells, t_end, **options):
    return integrate_dyadic(psi0, SimConfig(shells=shells, t_end=t_end, **options))


def quadratic_trajectory() -> Trajectory:
    """y(t) = t² on an uneven grid, with exact derivatives."""
    times = np.array([0.0, 0.5, 1.5, 2.0])
    return Trajectory(
        kind="dyadic",
        N=0,
        config=SimConfig(shells=0, t_end=2.0),
        times=times,
        states=(times ** 2)[:, None],
        derivatives=(2.0 * times)[:, None],
        dissipated=np.zeros(times.size),
        termination=Termination.REACHED_T_END,
    )


class TestDyadicIntegration:
    """Test suite for integrate_dyadic."""

    def setup_method(self):
        """Setup test fixtures."""
        self.traj = euler_run(psi_preset("delta0", 12), 12, 1.0)

    def test_reaches_end(self):
        """Test a short Euler run."""
        assert self.traj.termination == Termination.REACHED_T_END
        assert self.traj.t_final == 1.0
        assert self.traj.times.size == self.traj.steps + 1

    def test_energy_conserved(self):
        """Test Σψ² drift below 1e-8."""
        energy = self.traj.kinetic_energy()
        assert np.max(np.abs(energy - energy[0])) <= 1e-8 * energy[0]

    def test_positivity(self):
        """Test that nonnegative data stay nonnegative."""
        assert np.min(self.traj.states) >= -1e-12

    def test_tail_energies_grow(self):
        """Test that E_n(t) is nondecreasing for n ≥ 1."""
        squares = self.traj.states ** 2
        tails = np.cumsum(squares[:, ::-1], axis=1)[:, ::-1]
        assert np.all(np.diff(tails[:, 1:], axis=0) >= -1e-9)

    def test_hypo_energy_budget(self):
        """Test kinetic plus dissipated energy stays constant."""
        config = SimConfig(model="hypo", nu=0.05, alpha=0.5, shells=10, t_end=1.0)
        traj = integrate_dyadic(psi_preset("geometric(0.5)", 10), config)
        budget = traj.energy_budget()
        assert traj.dissipated[-1] > 0.0
        assert np.max(np.abs(budget - budget[0])) <= 1e-7 * budget[0]

    def test_length_mismatch(self):
        """Test that ψ0 must have N + 1 entries."""
        with pytest.raises(ValueError):
            euler_run([1.0, 0.0], 4, 1.0)

    def test_step_budget(self):
        """Test the STEP_BUDGET termination."""
        traj = euler_run(psi_preset("delta0", 8), 8, 10.0, max_steps=3)
        assert traj.termination == Termination.STEP_BUDGET
        assert traj.steps + traj.rejected <= 3

    def test_threshold_at_start(self):
        """Test that data above the blowup threshold stop immediately."""
        traj = euler_run(psi_preset("delta0", 4), 4, 1.0, blowup_threshold=0.5)
        assert traj.termination == Termination.BLOWUP_DETECTED
        assert traj.times.size == 1

    def test_saturation_time(self):
        """Test saturation for a coarse and a fine truncation."""
        assert 0.0 < euler_run(psi_preset("delta0", 2), 2, 1.0).saturation_time() < 1.0
        assert euler_run(psi_preset("delta0", 20), 20, 0.1).saturation_time() is None


class TestGalerkinIntegration:
    """Test suite for integrate_galerkin."""

    def test_matches_dyadic(self):
        """Test that a reducible field follows the ψ system."""
        psi0 = psi_preset("geometric(0.5)", 6)
        config = SimConfig(shells=6, t_end=0.1)
        galerkin = integrate_galerkin(from_psi(psi0), config)
        dyadic = integrate_dyadic(psi0, config)
        assert galerkin.is_galerkin
        np.testing.assert_allclose(galerkin.psi()[-1], dyadic.states[-1], rtol=0, atol=1e-8)

    def test_long_horizon_matches_dyadic(self):
        """Test δ_0 against the ψ system up to half the analytic blowup bound."""
        T_star = euler_blowup_bound(E0=1.0).T_star
        psi0 = psi_preset("delta0", 6)
        for fraction in (0.05, 0.25, 0.5):
            config = SimConfig(shells=6, t_end=fraction * T_star, rtol=1e-12, atol=1e-15)
            galerkin = integrate_galerkin(from_psi(psi0), config)
            dyadic = integrate_dyadic(psi0, config)
            assert galerkin.termination == Termination.REACHED_T_END
            np.testing.assert_allclose(galerkin.psi()[-1], dyadic.states[-1], rtol=0, atol=1e-8)
            final = SpectralField.from_flat(6, galerkin.states[-1])
            assert symmetry_classify(final).hj_parity

    def test_energy_conserved(self):
        """Test ½‖u‖² drift for a generic Euler run."""
        rng = np.random.default_rng(8)
        u0 = from_components(rng.uniform(0.0, 1.0, 2), rng.uniform(0.0, 1.0, 2), rng.uniform(0.0, 1.0, 2), 3)
        traj = integrate_galerkin(u0, SimConfig(shells=3, t_end=0.1))
        energy = traj.kinetic_energy()
        assert np.max(np.abs(energy - energy[0])) <= 1e-8 * energy[0]

    def test_parity_defect(self):
        """Test the predicted η_0 - ζ_0 against the observed defect."""
        u0 = from_components([1.0, 0.5], [0.4, 0.2], [0.2, 0.1], 3)
        traj = integrate_galerkin(u0, SimConfig(shells=3, t_end=0.05))
        times, predicted, observed = parity_defect_prediction(traj, 0)
        assert times.size == traj.times.size
        assert observed[0] == pytest.approx(0.2)
        np.testing.assert_allclose(predicted, observed, rtol=1e-5)

    def test_parity_defect_arguments(self):
        """Test the trajectory kind and generation range."""
        u0 = from_components([1.0, 0.5], [0.4, 0.2], [0.2, 0.1], 3)
        traj = integrate_galerkin(u0, SimConfig(shells=3, t_end=0.01))
        with pytest.raises(ValueError):
            parity_defect_prediction(traj, 2)
        with pytest.raises(ValueError):
            parity_defect_prediction(euler_run(psi_preset("delta0", 3), 3, 0.01), 0)


class TestTrajectory:
    """Test suite for dense output and quadrature."""

    def test_interpolate_at_samples(self):
        """Test that the interpolant passes through accepted steps."""
        traj = euler_run(psi_preset("delta0", 6), 6, 0.5)
        np.testing.assert_array_equal(traj.interpolate(traj.times[2]), traj.states[2])
        assert traj.interpolate(traj.times[:3]).shape == (3, 7)

    def test_interpolate_outside(self):
        """Test that extrapolation is refused."""
        traj = quadratic_trajectory()
        with pytest.raises(ValueError):
            traj.interpolate(2.5)

    def test_interpolant_exact_for_quadratics(self):
        """Test Hermite reproduction of t²."""
        traj = quadratic_trajectory()
        t = np.linspace(0.0, 2.0, 17)
        np.testing.assert_allclose(traj.interpolate(t)[:, 0], t ** 2, atol=1e-14)

    def test_cumulative_integral(self):
        """Test ∫t² = t³/3 at every sample."""
        traj = quadratic_trajectory()
        integral = traj.cumulative_integral(traj.states[:, 0], traj.derivatives[:, 0])
        np.testing.assert_allclose(integral, traj.times ** 3 / 3.0, atol=1e-14)

    def test_first_crossing(self):
        """Test bisection on the interpolant."""
        traj = quadratic_trajectory()
        assert traj.first_crossing(lambda s: s[:, 0], 1.0) == pytest.approx(1.0, abs=1e-12)
        assert traj.first_crossing(lambda s: s[:, 0], 0.0) == 0.0
        assert traj.first_crossing(lambda s: s[:, 0], 5.0) is None

    def test_dyadic_has_no_fields(self):
        """Test that dyadic runs refuse field reconstruction."""
        with pytest.raises(ValueError):
            quadratic_trajectory().fields()


class TestSweep:
    """Test suite for parameter sweeps."""

    def test_order_and_determinism(self):
        """Test that parallel results come back in config order and match serial runs."""
        nus = (0.3, 0.01, 0.1)
        configs = [SimConfig(model=ModelKind.HYPO, nu=nu, alpha=0.3, shells=4, t_end=0.2) for nu in nus]
        psi0 = psi_preset("delta0", 4)
        parallel = sweep(psi0, configs, jobs=2)
        serial = sweep(psi0, configs, jobs=1)
        assert [t.config.nu for t in parallel] == list(nus)
        for a, b in zip(parallel, serial):
            np.testing.assert_array_equal(a.states, b.states)


class TestBlowupFit:
    """Test suite for fit_blowup and detect_blowup."""

    def test_synthetic_power_law(self):
        """Test recovery of T = 1 and p = 1 from 3/(1 - t)."""
        t = 1.0 - 10.0 ** -np.linspace(0.0, 4.0, 200)
        report = fit_blowup(t, 3.0 / (1.0 - t))
        assert report.detected
        assert report.T_est == pytest.approx(1.0, abs=1e-5)
        assert report.rate_exponent == pytest.approx(1.0, abs=1e-3)
        assert report.log_decades == pytest.approx(4.0, abs=1e-9)

    def test_no_growth(self):
        """Test that bounded signals are not reported."""
        t = np.linspace(0.0, 1.0, 50)
        assert not fit_blowup(t, np.ones(50)).detected
        assert not fit_blowup(t[:3], np.array([1.0, 10.0, 1e4])).detected

    def test_bound_attached_to_euler_runs(self):
        """Test that Euler reports carry the analytic T* for δ_0."""
        report = detect_blowup(euler_run(psi_preset("delta0", 6), 6, 0.2))
        assert report.bound_T_star == pytest.approx(6.573, rel=1e-3)
        assert math.isfinite(report.log_decades)

    @pytest.mark.slow
    def test_delta0_blowup_at_thirty_shells(self):
        """Test a blowup signature with p ≈ 1 well before T* for δ_0 at N = 30."""
        T_star = euler_blowup_bound(E0=1.0).T_star
        traj = euler_run(psi_preset("delta0", 30), 30, T_star)
        assert traj.termination == Termination.BLOWUP_DETECTED
        assert traj.t_final < T_star
        assert np.max(traj.growth_norm()) > 1e6
        assert energy_ladder(traj, 0.4).passed
        report = detect_blowup(traj)
        assert report.detected
        assert 0.8 <= report.rate_exponent <= 1.2
        assert report.T_est < T_star


class TestRegularityRegimes:
    """Test suite for hypodissipative runs that stay regular."""

    def test_critical_dissipation_keeps_h1_bounded(self):
        """Test a bounded ‖ψ‖_{ℋ¹} at α̃ = ½ over a long horizon."""
        config = SimConfig(model="hypo", nu=1.0, alpha=alpha_from_tilde(0.5), shells=16, t_end=20.0)
        traj = integrate_dyadic(psi_preset("delta0", 16), config)
        assert traj.termination == Termination.REACHED_T_END
        assert np.max(traj.growth_norm()) <= 3.0
        assert not detect_blowup(traj).detected

    def test_small_data_norms_decrease(self):
        """Test nonincreasing L², critical and Ḣ¹ norms for small data."""
        alpha = 0.2
        config = SimConfig(model="hypo", nu=1.0, alpha=alpha, shells=10, t_end=2.0)
        traj = integrate_dyadic(1e-3 * psi_preset("delta0", 10), config)
        assert traj.termination == Termination.REACHED_T_END
        critical = math.log(3.0) / (2.0 * math.log(2.0)) - 2.0 * alpha
        for s in (0.0, critical, 1.0):
            norms = np.array([sobolev_norm(from_psi(p), s) for p in traj.states])
            assert np.all(np.diff(norms) <= 1e-12 * norms[:-1])
            assert norms[-1] < norms[0]
