"""
Blowup diagnostics for the reduced system: the Euler blowup bound, the
energy-transfer ladder, the hypodissipative Lyapunov criterion and the
regularity functionals.
"""
import logging
import math
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from config import get_settings
from dyadic import alpha_from_tilde, lyapunov, rhs_psi
from bilinear import dissipation_multipliers
from evolve import Trajectory
from models import (
    BlowupBound,
    LadderReport,
    LadderRow,
    LyapunovCriterion,
    ModelKind,
    ParameterRangeError,
    RegularityReport,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
R_UPPER = SQRT2 / (SQRT2 + 1.5)
LAMBDA_GRONWALL = math.sqrt(5.0) / (3.0 * math.sqrt(3.0))


# -------------------------
# Euler blowup bound
# -------------------------

def bound_profile(r):
    """f(r) = r / ((√2 - (√2 + 3/2) r)(√(3r) - 1)) on (1/3, √2/(√2 + 3/2))."""
    r = np.asarray(r, dtype=float)
    return r / ((SQRT2 - (SQRT2 + 1.5) * r) * (np.sqrt(3.0 * r) - 1.0))


def euler_blowup_bound(E0: Optional[float] = None, l2_norm: Optional[float] = None) -> BlowupBound:
    """
    Minimize the bound profile by golden-section search.

    Args:
        E0: Shell energy Σψ_n² of the initial data
        l2_norm: ‖u0‖_{L²}; used when E0 is not given (‖u0‖² = 12 E0)

    Returns:
        BlowupBound with κ = (3√2/π) inf f and T* = (√3/(√2π)) inf f / √E0
    """
    if E0 is None:
        if l2_norm is None:
            raise ValueError("give E0 or l2_norm")
        E0 = l2_norm ** 2 / 12.0
    if E0 <= 0.0:
        raise ParameterRangeError(f"E0 must be > 0, got {E0}", inequality="E0 > 0")
    l2 = math.sqrt(12.0 * E0)

    result = minimize_scalar(
        lambda r: float(bound_profile(r)),
        bracket=(0.34, 0.4, 0.48),
        method="golden",
        tol=get_settings().golden_tol,
    )
    f_min = float(result.fun)
    kappa = 3.0 * SQRT2 / math.pi * f_min
    T_star = math.sqrt(3.0) / (SQRT2 * math.pi) * f_min / math.sqrt(E0)
    if not math.isclose(kappa / l2, T_star, rel_tol=1e-12):
        raise ArithmeticError("κ/‖u0‖ and T* disagree")
    return BlowupBound(kappa=kappa, r_star=float(result.x), f_min=f_min, T_star=T_star, E0=E0, l2_norm=l2)


# -------------------------
# Energy-transfer ladder
# -------------------------

def ladder_times(E0: float, r: float, n_max: int) -> np.ndarray:
    """Predicted T_0..T_{n_max}: T_n = c Σ_{j<n} (3r)^{-j/2}."""
    c = math.sqrt(r) / (math.sqrt(2.0 * E0) * math.pi * (SQRT2 - (SQRT2 + 1.5) * r))
    steps = c * (3.0 * r) ** (-0.5 * np.arange(n_max))
    return np.concatenate(([0.0], np.cumsum(steps)))


def ladder_limit(E0: float, r: float) -> float:
    """lim T_n, which equals the blowup bound evaluated at r."""
    c = math.sqrt(r) / (math.sqrt(2.0 * E0) * math.pi * (SQRT2 - (SQRT2 + 1.5) * r))
    return c / (1.0 - (3.0 * r) ** -0.5)


def _check_positive(traj: Trajectory):
    psi0 = traj.psi()[0]
    if np.min(psi0) < -traj.config.atol:
        raise ParameterRangeError("initial data is not coefficient-positive", inequality="psi0 >= 0")


def energy_ladder(traj: Trajectory, r: float, saturation_fraction: Optional[float] = None) -> LadderReport:
    """
    Compare observed first times E_n(t_n) ≥ E_0 r^n with the predicted T_n.

    Rows observed after truncation saturation are flagged unreliable and do
    not count against the verdict.

    Args:
        traj: Euler trajectory with coefficient-positive data
        r: Ladder ratio in (1/3, √2/(√2 + 3/2))
    """
    if not (1.0 / 3.0 < r < R_UPPER):
        raise ParameterRangeError(f"r={r} outside (1/3, {R_UPPER:.6f})", inequality="1/3 < r < sqrt2/(sqrt2+3/2)")
    if traj.config.model != ModelKind.EULER:
        raise ParameterRangeError("the ladder applies to Euler runs", inequality="nu = 0")
    _check_positive(traj)

    squares = traj.shell_squares()
    E0 = float(np.sum(squares[0]))
    N = traj.N
    predicted = ladder_times(E0, r, N)
    saturation = traj.saturation_time(saturation_fraction)

    rows = []
    passed = True
    for n in range(N + 1):
        level = E0 * r ** n
        if traj.is_galerkin:
            def energy_n(states, n=n):
                sq = np.mean(np.abs(states.reshape(-1, N + 1, 6)) ** 2, axis=2)
                return np.sum(sq[:, n:], axis=1)
        else:
            def energy_n(states, n=n):
                return np.sum(states[:, n:] ** 2, axis=1)
        t_obs = traj.first_crossing(energy_n, level)
        T_n = float(predicted[n])
        E_at = float(energy_n(traj.interpolate(np.array([T_n])))[0]) if T_n <= traj.t_final else None
        reliable = t_obs is None or saturation is None or t_obs <= saturation
        if t_obs is not None:
            holds = t_obs <= T_n
        elif traj.t_final >= T_n and (saturation is None or T_n <= saturation):
            holds = False
        else:
            holds = None
        if reliable and holds is False:
            passed = False
        rows.append(LadderRow(n=n, T_predicted=T_n, t_observed=t_obs,
                              E_at_T_predicted=E_at, reliable=reliable, holds=holds))

    report = LadderReport(r=r, E0=E0, T_limit=ladder_limit(E0, r),
                          saturation_time=saturation, rows=rows, passed=passed)
    logger.info("Energy ladder", extra={"r": r, "passed": passed, "saturation": saturation})
    return report


def truncation_saturation_time(traj: Trajectory, fraction: Optional[float] = None) -> Optional[float]:
    """First time E_N/E_0 exceeds fraction (default settings.saturation_fraction)."""
    return traj.saturation_time(fraction)


# -------------------------
# Hypodissipative Lyapunov criterion
# -------------------------

def dissipation_constant(gamma: float, alpha_tilde: float, r: float, shells: Optional[int] = None) -> float:
    """
    Row-sum bound on the weighted dissipation form, normalized by 3^{(γ+α̃)n}.

    C = sup_n [2r d_n 3^{γn} + ½3^{γn}(d_n + d_{n+1}) + ½3^{γ(n-1)}(d_{n-1} + d_n)] / 3^{(γ+α̃)n}
    """
    shells = shells or get_settings().lyapunov_scan_shells
    d = dissipation_multipliers(shells + 1, alpha_from_tilde(alpha_tilde))
    n = np.arange(shells + 1)
    w = 3.0 ** (gamma * n)
    rows = 2.0 * r * d[:-1] * w + 0.5 * w * (d[:-1] + d[1:])
    rows[1:] += 0.5 * w[:-1] * (d[:-2] + d[1:-1])
    return float(np.max(rows / 3.0 ** ((gamma + alpha_tilde) * n)))


def hypo_lyapunov_criterion(psi0: Sequence[float], gamma: float, alpha_tilde: float, nu: float) -> LyapunovCriterion:
    """
    Decide whether initial data clear the viscosity threshold of the Lyapunov argument.

    Args:
        psi0: Nonnegative initial ψ
        gamma: Weight exponent, 0 < γ < 1 - 3α̃
        alpha_tilde: Dyadic dissipation exponent, 0 < α̃ < 1/3
        nu: Viscosity ≥ 0

    Returns:
        LyapunovCriterion; T_bound set when the data qualify

    Raises:
        ParameterRangeError: names the violated inequality
    """
    if not (0.0 < alpha_tilde < 1.0 / 3.0):
        raise ParameterRangeError(f"alpha_tilde={alpha_tilde}", inequality="0 < alpha_tilde < 1/3")
    if not (0.0 < gamma < 1.0 - 3.0 * alpha_tilde):
        raise ParameterRangeError(f"gamma={gamma}", inequality="0 < gamma < 1 - 3*alpha_tilde")
    if nu < 0.0:
        raise ParameterRangeError(f"nu={nu}", inequality="nu >= 0")
    psi0 = np.asarray(psi0, dtype=float)
    if np.min(psi0) < 0.0:
        raise ParameterRangeError("initial data must be nonnegative", inequality="psi0 >= 0")

    epsilon = 2.0 - 6.0 * alpha_tilde - 2.0 * gamma
    H0, r = lyapunov(psi0, gamma)
    upper = r + 0.5 + 0.5 * 3.0 ** (-gamma)
    gap = 1.0 - 3.0 ** (-epsilon / 2.0)
    kappa = math.pi * math.sqrt(gap) / (2.0 * upper ** 1.5)
    C = dissipation_constant(gamma, alpha_tilde, r)
    C_tilde_sq = C ** 2 * upper / (gap * math.pi ** 2)
    threshold = C_tilde_sq * nu ** 2
    qualifies = H0 > 0.0 and H0 >= threshold
    T_bound = 1.0 / (kappa * math.sqrt(H0)) if qualifies else None

    logger.info(
        "Lyapunov criterion",
        extra={"gamma": gamma, "alpha_tilde": alpha_tilde, "nu": nu, "H0": H0,
               "threshold": threshold, "qualifies": qualifies},
    )
    return LyapunovCriterion(
        gamma=gamma, alpha_tilde=alpha_tilde, nu=nu, epsilon=epsilon, r=r, H0=H0,
        kappa=kappa, dissipation_constant=C, threshold=threshold,
        qualifies=qualifies, T_bound=T_bound,
    )


def lyapunov_along(traj: Trajectory, criterion: LyapunovCriterion,
                   saturation_fraction: Optional[float] = None) -> Dict[str, np.ndarray]:
    """
    H_γ(t), its comparison lower bound and the analytic rate along a run.

    Only samples before truncation saturation and before the predicted
    bound are returned.
    """
    psi = traj.psi()
    gamma = criterion.gamma
    H = np.array([lyapunov(p, gamma)[0] for p in psi])
    alpha, nu = traj.config.alpha, traj.config.nu
    w = 3.0 ** (gamma * np.arange(traj.N + 1))
    rates = np.empty(psi.shape[0])
    for i, p in enumerate(psi):
        grad = 2.0 * criterion.r * w * p
        grad[:-1] += w[:-1] * p[1:]
        grad[1:] += w[:-1] * p[:-1]
        rates[i] = float(np.dot(grad, rhs_psi(p, alpha, nu)))

    t = traj.times - traj.times[0]
    sqrt_H0 = math.sqrt(H[0])
    denom = 1.0 - criterion.kappa * t * sqrt_H0
    keep = denom > 0.0
    saturation = traj.saturation_time(saturation_fraction)
    if saturation is not None:
        keep &= traj.times <= saturation
    lower = np.where(keep, H[0] / np.where(keep, denom, 1.0) ** 2, np.nan)
    return {
        "t": traj.times[keep],
        "H": H[keep],
        "lower": lower[keep],
        "rate": rates[keep],
        "rate_floor": 2.0 * criterion.kappa * H[keep] ** 1.5,
    }


# -------------------------
# Regularity functionals
# -------------------------

def sup_weighted(psi) -> float:
    """sup_n (√3)^n ψ_n."""
    psi = np.asarray(psi, dtype=float)
    return float(np.max(math.sqrt(3.0) ** np.arange(psi.size) * psi))


def h1_norm(psi) -> float:
    """‖ψ‖_{ℋ¹}."""
    psi = np.asarray(psi, dtype=float)
    return float(math.sqrt(np.sum(3.0 ** np.arange(psi.size) * psi ** 2)))


def origin_strain_lambda(psi) -> float:
    """λ = 12√2π Σ ψ_n (√3)^n (1 + ⅔(3/4)^n)^{-1/2}."""
    psi = np.asarray(psi, dtype=float)
    n = np.arange(psi.size)
    weights = math.sqrt(3.0) ** n / np.sqrt(1.0 + (2.0 / 3.0) * 0.75 ** n)
    return float(12.0 * SQRT2 * math.pi * np.dot(weights, psi))


def origin_gradient(psi) -> np.ndarray:
    """∇u(0) with entries ∂_i u_j: λ times the zero-diagonal matrix of -1."""
    lam = origin_strain_lambda(psi)
    return lam * (np.eye(3) - np.ones((3, 3)))


def regularity_functionals(psi, traj: Optional[Trajectory] = None) -> RegularityReport:
    """
    sup_n (√3)^n ψ_n and ‖ψ‖_{ℋ¹}, plus Gronwall residuals along a trajectory.

    Along a run the reported residuals are
        d/dt‖ψ‖²_{ℋ¹} - 4√2π sup‖ψ‖²_{ℋ¹}                 (should be ≤ 0)
        log‖ψ‖²_{ℋ¹} - log‖ψ_0‖²_{ℋ¹} - (√5/(3√3))∫λ        (should be ≤ 0)
    """
    report = RegularityReport(sup_weighted=sup_weighted(psi), h1_norm=h1_norm(psi))
    if traj is None:
        return report

    psi_t = traj.psi()
    weights = 3.0 ** np.arange(traj.N + 1)
    alpha, nu = traj.config.alpha, traj.config.nu
    residuals = np.empty(psi_t.shape[0])
    lam = np.empty(psi_t.shape[0])
    lam_rate = np.empty(psi_t.shape[0])
    for i, p in enumerate(psi_t):
        dp = rhs_psi(p, alpha, nu)
        norm_sq = float(np.sum(weights * p * p))
        residuals[i] = 2.0 * float(np.sum(weights * p * dp)) - 4.0 * SQRT2 * math.pi * sup_weighted(p) * norm_sq
        lam[i] = origin_strain_lambda(p)
        lam_rate[i] = origin_strain_lambda(dp)
    norms = np.sum(weights * psi_t ** 2, axis=1)
    integral = traj.cumulative_integral(lam, lam_rate)
    lam_residual = np.log(norms) - math.log(norms[0]) - LAMBDA_GRONWALL * integral

    report.max_gronwall_residual = float(np.max(residuals / np.maximum(norms, 1e-300)))
    report.max_lambda_gronwall_residual = float(np.max(lam_residual))
    report.max_rate_excess = float(np.max(residuals))
    return report


# -------------------------
# Run tables
# -------------------------

def run_table(traj: Trajectory, gamma: Optional[float] = None) -> Dict[str, np.ndarray]:
    """
    Per-sample diagnostic columns in a fixed order.

    Columns: t, psi_0..psi_N, E_0, H1, H_gamma, lambda_origin, sup_weighted
    """
    gamma = traj.config.gamma if gamma is None else gamma
    psi = traj.psi()
    table: Dict[str, np.ndarray] = {"t": traj.times}
    for n in range(traj.N + 1):
        table[f"psi_{n}"] = psi[:, n]
    table["E_0"] = np.sum(psi ** 2, axis=1)
    table["H1"] = np.sqrt(np.sum(3.0 ** np.arange(traj.N + 1) * psi ** 2, axis=1))
    table["H_gamma"] = np.array([lyapunov(p, gamma)[0] for p in psi])
    table["lambda_origin"] = np.array([origin_strain_lambda(p) for p in psi])
    table["sup_weighted"] = np.array([sup_weighted(p) for p in psi])
    return table


def shell_energy_table(traj: Trajectory) -> np.ndarray:
    """E_n(t) for every sample, shape (samples, N+1)."""
    squares = traj.shell_squares()
    return np.cumsum(squares[:, ::-1], axis=1)[:, ::-1]
