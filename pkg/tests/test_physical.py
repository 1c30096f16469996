"""
Unit tests for physical-space synthesis, the enstrophy identities and the
mollified vortex sheet.
"""
import math

import numpy as np
import pytest

from diagnostics import origin_gradient, origin_strain_lambda
from dyadic import psi_preset
from evolve import integrate_dyadic, integrate_galerkin
from field import from_psi, random_field, sobolev_norm
from models import SimConfig
from physical import (
    GeneralSpectralField,
    bump,
    det3,
    enstrophy_identities,
    evaluate_at,
    general_symmetry,
    grid_points,
    strain_spectrum,
    strain_tensor,
    symmetric_eigenvalues,
    synthesize,
    vortex_sheet,
)


class TestSynthesis:
    """Test suite for grid and point evaluation."""

    def setup_method(self):
        """Setup test fixtures."""
        self.psi = np.array([1.0, 0.4, 0.1])
        self.field = from_psi(self.psi)

    def test_origin_gradient(self):
        """Test ∇u(0) against the closed form."""
        grad = evaluate_at(self.field, [0.0, 0.0, 0.0])["grad"][0]
        np.testing.assert_allclose(grad, origin_gradient(self.psi), rtol=0, atol=1e-10 * origin_strain_lambda(self.psi))

    def test_origin_strain_spectrum(self):
        """Test eigenvalues (-2λ, λ, λ) at the origin."""
        grid = synthesize(self.field, 9)
        lam = origin_strain_lambda(self.psi)
        np.testing.assert_allclose(strain_spectrum(grid, (0, 0, 0)), [-2.0 * lam, lam, lam], rtol=1e-10)
        np.testing.assert_allclose(strain_spectrum(grid, 0), strain_spectrum(grid, (0, 0, 0)))

    def test_divergence_free(self):
        """Test zero trace of ∇u everywhere on the grid."""
        grid = synthesize(random_field(1, np.random.default_rng(3)), 9)
        trace = np.trace(grid.grad, axis1=1, axis2=2)
        assert np.max(np.abs(trace)) <= 1e-10 * np.max(np.abs(grid.grad))

    def test_grid_mean_energy(self):
        """Test mean |u|² on an unaliased grid equals ‖u‖²."""
        field = random_field(1, np.random.default_rng(9))
        grid = synthesize(field, 9)
        assert np.mean(np.sum(grid.u ** 2, axis=1)) == pytest.approx(sobolev_norm(field) ** 2, rel=1e-12)

    def test_grid_layout(self):
        """Test point ordering and wrap-around into [-½, ½)."""
        points = grid_points(4)
        assert points.shape == (64, 3)
        np.testing.assert_allclose(points[1], [0.0, 0.0, 0.25])
        np.testing.assert_allclose(points[2], [0.0, 0.0, -0.5])
        grid = synthesize(self.field, 4)
        assert grid.index(1, 0, -1) == 16 + 3

    def test_linear_algebra(self):
        """Test det3 and the eigenvalues against numpy."""
        rng = np.random.default_rng(0)
        S = strain_tensor(rng.standard_normal((50, 3, 3)))
        np.testing.assert_allclose(det3(S), np.linalg.det(S), atol=1e-12)
        eig = symmetric_eigenvalues(S)
        np.testing.assert_allclose(eig, np.sort(np.linalg.eigvals(S).real, axis=1), atol=1e-12)
        np.testing.assert_allclose(np.prod(eig, axis=1), det3(S), atol=1e-11)


class TestGeneralField:
    """Test suite for GeneralSpectralField."""

    def test_isometries(self):
        """Test ‖∇u‖² = ‖ω‖² = 2‖S‖² for divergence-free fields."""
        g = GeneralSpectralField.from_spectral(random_field(3, np.random.default_rng(2)))
        assert np.max(np.abs(g.divergence())) <= 1e-9 * np.max(np.abs(g.amplitudes)) * g.bandwidth
        assert g.vort_sq() == pytest.approx(g.grad_sq(), rel=1e-12)
        assert 2.0 * g.strain_sq() == pytest.approx(g.grad_sq(), rel=1e-12)

    def test_rejects_mean_mode(self):
        """Test that k = 0 is refused."""
        with pytest.raises(ValueError):
            GeneralSpectralField(np.zeros((1, 3)), np.zeros((1, 3)))

    def test_length_mismatch(self):
        """Test mismatched frequency and amplitude arrays."""
        with pytest.raises(ValueError):
            GeneralSpectralField(np.ones((2, 3)), np.zeros((1, 3)))


class TestEnstrophyIdentities:
    """Test suite for the enstrophy identities along Galerkin runs."""

    def setup_method(self):
        """Setup test fixtures."""
        self.u0 = random_field(2, np.random.default_rng(21))

    def test_euler(self):
        """Test the isometries and d/dt‖S‖² = -4∫det S."""
        traj = integrate_galerkin(self.u0, SimConfig(shells=2, t_end=0.002))
        report = enstrophy_identities(traj, 22, stride=max(traj.times.size // 4, 1))
        assert not report.under_resolved
        assert report.bandwidth == 7
        assert report.max_isometry_residual <= 1e-10
        assert report.max_identity_residual <= 1e-6
        assert all(row.lambda2_plus_origin <= row.lambda2_plus_sup for row in report.rows)

    def test_hypodissipative(self):
        """Test d/dt‖S‖² = -2ν‖S‖²_{Ḣ^α} - 4∫det S."""
        config = SimConfig(model="hypo", nu=0.05, alpha=0.3, shells=2, t_end=0.002)
        traj = integrate_galerkin(self.u0, config)
        report = enstrophy_identities(traj, 22, stride=max(traj.times.size // 4, 1))
        assert report.max_identity_residual <= 1e-6

    def test_under_resolved_flag(self):
        """Test that coarse grids are flagged."""
        traj = integrate_galerkin(self.u0, SimConfig(shells=2, t_end=0.0005))
        report = enstrophy_identities(traj, 10, stride=traj.times.size)
        assert report.under_resolved
        assert len(report.rows) == 1

    def test_requires_galerkin(self):
        """Test that dyadic trajectories are refused."""
        traj = integrate_dyadic(psi_preset("delta0", 2), SimConfig(shells=2, t_end=0.01))
        with pytest.raises(ValueError):
            enstrophy_identities(traj, 22)


class TestVortexSheet:
    """Test suite for the mollified vortex sheet."""

    def setup_method(self):
        """Setup test fixtures."""
        self.sheet = vortex_sheet(0.5, 1000)

    def test_mollifier_peak(self):
        """Test g(0)/ε for ε = 0.5."""
        assert self.sheet.g0_over_epsilon == pytest.approx(6.6, abs=0.1)
        assert bump(np.array([0.0, 0.25, -0.3])).tolist() == pytest.approx([math.exp(-1.0), 0.0, 0.0])

    def test_determinants(self):
        """Test -4 det S at the origin and at (0, ⅓, ⅓) against the closed forms."""
        points = np.array([[0.0, 0.0, 0.0], [0.0, 1.0 / 3.0, 1.0 / 3.0]])
        S = strain_tensor(evaluate_at(self.sheet.field, points)["grad"])
        observed = -4.0 * det3(S)
        assert observed[0] == pytest.approx(self.sheet.origin_det_expected(), rel=1e-8)
        assert observed[1] == pytest.approx(self.sheet.region_det_expected(), rel=1e-8)
        assert observed[0] > 0.0 > observed[1]

    def test_helicity_and_symmetry(self):
        """Test zero helicity, oddness and permutation symmetry, and broken σ-mirror symmetry."""
        field = self.sheet.field
        assert abs(field.helicity()) <= 1e-12 * field.grad_sq()
        deviations = general_symmetry(field)
        assert deviations["odd"] <= 1e-15
        assert deviations["permutation"] <= 1e-15
        assert deviations["sigma_mirror"] > 0.1

    def test_epsilon_range(self):
        """Test the mollification width range."""
        for eps in (0.0, 1.0):
            with pytest.raises(ValueError):
                vortex_sheet(eps, 10)
        with pytest.raises(ValueError):
            vortex_sheet(0.5, 0)
