"""
Time integration of the dyadic and Galerkin systems.

Both formulations run through one adaptive Dormand-Prince 5(4) stepper in
Lawson (integrating-factor) form: the diagonal dissipation is applied exactly
as e^{-ν d_n h} and the transfer terms go through the explicit stages. A
trailing real component accumulates the dissipated energy.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from bilinear import bilinear_flat, dissipation_multipliers, interaction_coefficients
from config import get_settings
from dyadic import coefficient_tables, nonlinear_rhs
from field import SpectralField, invariant_projector, sobolev_weights, symmetry_classify, to_components
from models import BlowupReport, ModelKind, SimConfig, Termination

logger = logging.getLogger(__name__)

CRITICAL_S = math.log(3.0) / (2.0 * math.log(2.0))

# -------------------------
# Dormand-Prince tableau
# -------------------------

C = np.array([0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0])
A = [
    [],
    [1.0 / 5.0],
    [3.0 / 40.0, 9.0 / 40.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
]
B5 = np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0])
B4 = np.array([5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0,
               -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0])

SAFETY = 0.9
FACTOR_MIN = 0.1
FACTOR_MAX = 4.0


class DormandPrince:
    """
    Embedded 5(4) pair with exact exponential decay.

    Stages:
        Y_j = e^{-L c_j h} y + h Σ_l a_jl e^{-L(c_j - c_l)h} K_l,   K_j = N(Y_j)
    Update:
        y_1 = e^{-L h} y + h Σ_j b_j e^{-L(1 - c_j)h} K_j

    With L = 0 this is the classical pair. The last stage equals y_1, so its
    value is reused as the first stage of the next step.
    """

    def __init__(self, decay: np.ndarray, nonlinear: Callable[[np.ndarray], np.ndarray],
                 rtol: float, atol: float):
        self.decay = np.asarray(decay, dtype=float)
        self.nonlinear = nonlinear
        self.rtol = rtol
        self.atol = atol

    def derivative(self, y: np.ndarray, k: Optional[np.ndarray] = None) -> np.ndarray:
        """Full dy/dt = -L y + N(y)."""
        k = self.nonlinear(y) if k is None else k
        return -self.decay * y + k

    def _factor(self, c: float, h: float) -> np.ndarray:
        return np.exp(-self.decay * (c * h))

    def step(self, y: np.ndarray, k1: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        Attempt one step.

        Returns:
            (y_1, N(y_1), scaled error norm)
        """
        ks = [k1]
        for j in range(1, 7):
            stage = self._factor(C[j], h) * y
            for l, a in enumerate(A[j]):
                if a != 0.0:
                    stage = stage + h * a * self._factor(C[j] - C[l], h) * ks[l]
            ks.append(self.nonlinear(stage))
        y_new = stage
        err = np.zeros_like(y)
        for j in range(7):
            coef = B5[j] - B4[j]
            if coef != 0.0:
                err = err + h * coef * self._factor(1.0 - C[j], h) * ks[j]
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))
        return y_new, ks[6], err_norm

    def initial_step(self, y: np.ndarray, f: np.ndarray, span: float) -> float:
        scale = self.atol + self.rtol * np.abs(y)
        d0 = float(np.sqrt(np.mean((np.abs(y) / scale) ** 2)))
        d1 = float(np.sqrt(np.mean((np.abs(f) / scale) ** 2)))
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        return min(h, span)

    @staticmethod
    def next_factor(err_norm: float) -> float:
        if err_norm == 0.0:
            return FACTOR_MAX
        return min(FACTOR_MAX, max(FACTOR_MIN, SAFETY * err_norm ** (-0.2)))


# -------------------------
# Trajectory
# -------------------------

@dataclass(frozen=True)
class Trajectory:
    """Accepted steps of a run with Hermite dense output."""
    kind: str
    N: int
    config: SimConfig
    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    dissipated: np.ndarray
    termination: Termination
    steps: int = 0
    rejected: int = 0

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def is_galerkin(self) -> bool:
        return self.kind == "galerkin"

    def _hermite(self, i: np.ndarray, t: np.ndarray, values: np.ndarray, derivs: np.ndarray) -> np.ndarray:
        t0, t1 = self.times[i], self.times[i + 1]
        h = t1 - t0
        theta = ((t - t0) / h)[:, None]
        h = h[:, None]
        h00 = 2 * theta ** 3 - 3 * theta ** 2 + 1
        h10 = theta ** 3 - 2 * theta ** 2 + theta
        h01 = -2 * theta ** 3 + 3 * theta ** 2
        h11 = theta ** 3 - theta ** 2
        return h00 * values[i] + h10 * h * derivs[i] + h01 * values[i + 1] + h11 * h * derivs[i + 1]

    def interpolate(self, t) -> np.ndarray:
        """
        Cubic Hermite state at time(s) t within [t_0, t_final].

        Returns:
            One state for scalar t, a (len(t), dim) array otherwise
        """
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < self.times[0]) or np.any(ts > self.times[-1]):
            raise ValueError("interpolation time outside the trajectory")
        if self.times.size == 1:
            out = np.repeat(self.states[:1], ts.size, axis=0)
        else:
            i = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, self.times.size - 2)
            out = self._hermite(i, ts, self.states, self.derivatives)
        return out[0] if scalar else out

    def cumulative_integral(self, values: np.ndarray, derivs: np.ndarray) -> np.ndarray:
        """
        ∫_{t_0}^{t_i} of a quantity linear in the state, at every sample.

        Exact for the Hermite interpolant: h(y_0 + y_1)/2 + h²(y_0' - y_1')/12.
        """
        h = np.diff(self.times)
        pieces = h * (values[:-1] + values[1:]) / 2.0 + h ** 2 * (derivs[:-1] - derivs[1:]) / 12.0
        return np.concatenate(([0.0], np.cumsum(pieces)))

    def first_crossing(self, func: Callable[[np.ndarray], np.ndarray], level: float,
                       start: int = 0, iterations: int = 60) -> Optional[float]:
        """
        First time func(state) reaches level, refined by bisection on the interpolant.

        Args:
            func: Maps a (k, dim) state array to k scalars
            level: Threshold
            start: First sample index to consider
        """
        values = func(self.states)
        hits = np.nonzero(values[start:] >= level)[0]
        if hits.size == 0:
            return None
        i = int(hits[0]) + start
        if i == 0:
            return float(self.times[0])
        lo, hi = float(self.times[i - 1]), float(self.times[i])
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if func(self.interpolate(np.array([mid])))[0] >= level:
                hi = mid
            else:
                lo = mid
        return hi

    # Shell bookkeeping shared by both formulations

    def shell_squares(self) -> np.ndarray:
        """ψ_n² per sample; for fields, the member-averaged |c_k|²."""
        if self.is_galerkin:
            amps = self.states.reshape(-1, self.N + 1, 6)
            return np.mean(np.abs(amps) ** 2, axis=2)
        return self.states ** 2

    def psi(self) -> np.ndarray:
        """ψ per sample (Galerkin: mean imaginary part over each shell)."""
        if self.is_galerkin:
            return np.mean(self.states.reshape(-1, self.N + 1, 6).imag, axis=2)
        return self.states

    def fields(self) -> List[SpectralField]:
        if not self.is_galerkin:
            raise ValueError("dyadic trajectories carry no fields")
        return [SpectralField.from_flat(self.N, s) for s in self.states]

    def kinetic_energy(self) -> np.ndarray:
        """½Σψ² (dyadic) or ½‖u‖² (Galerkin)."""
        if self.is_galerkin:
            return np.sum(np.abs(self.states) ** 2, axis=1)
        return 0.5 * np.sum(self.states ** 2, axis=1)

    def energy_budget(self) -> np.ndarray:
        """Kinetic plus dissipated energy; constant for exact solutions."""
        return self.kinetic_energy() + self.dissipated

    def growth_norm(self, states: Optional[np.ndarray] = None) -> np.ndarray:
        """‖ψ‖_{ℋ¹} (dyadic) or the critical Sobolev norm (Galerkin) per sample."""
        states = self.states if states is None else states
        if self.is_galerkin:
            w = sobolev_weights(self.N, CRITICAL_S)
            amps = np.abs(states.reshape(-1, self.N + 1, 6)) ** 2
            return np.sqrt(2.0 * np.sum(w[None, :, None] * amps, axis=(1, 2)))
        w = 3.0 ** np.arange(self.N + 1)
        return np.sqrt(np.sum(w * states ** 2, axis=1))

    def saturation_time(self, fraction: Optional[float] = None) -> Optional[float]:
        """First time E_N / E_0 exceeds fraction (interpolated)."""
        fraction = get_settings().saturation_fraction if fraction is None else fraction
        N = self.N
        if self.is_galerkin:
            def ratio(states):
                sq = np.mean(np.abs(states.reshape(-1, N + 1, 6)) ** 2, axis=2)
                return sq[:, N] / np.maximum(np.sum(sq, axis=1), 1e-300)
        else:
            def ratio(states):
                return states[:, N] ** 2 / np.maximum(np.sum(states ** 2, axis=1), 1e-300)
        return self.first_crossing(ratio, fraction)


# -------------------------
# Integration
# -------------------------

def _integrate(
    y0: np.ndarray,
    decay: np.ndarray,
    transfer: Callable[[np.ndarray], np.ndarray],
    dissipation_rate: Callable[[np.ndarray], float],
    norm: Callable[[np.ndarray], float],
    config: SimConfig,
    kind: str,
    N: int,
    constrain: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Trajectory:
    """
    Shared adaptive loop over the state plus the dissipated-energy accumulator.

    constrain, when given, maps accepted states and their derivatives back onto
    an invariant subspace of the flow.
    """
    dim = y0.size
    full_decay = np.concatenate([decay, [0.0]])

    def nonlinear(y):
        body = y[:dim]
        out = np.empty_like(y)
        out[:dim] = transfer(body)
        out[dim] = dissipation_rate(body)
        return out

    stepper = DormandPrince(full_decay, nonlinear, config.rtol, config.atol)
    y = np.concatenate([y0, np.zeros(1, dtype=y0.dtype)])
    k = nonlinear(y)
    t = 0.0
    dt_min = config.effective_dt_min()
    h = stepper.initial_step(y, stepper.derivative(y, k), config.t_end)

    times = [t]
    states = [y.copy()]
    derivs = [stepper.derivative(y, k)]
    termination = Termination.REACHED_T_END
    accepted = rejected = 0

    if norm(y[:dim]) > config.blowup_threshold:
        termination = Termination.BLOWUP_DETECTED
    while termination == Termination.REACHED_T_END and t < config.t_end:
        if accepted + rejected >= config.max_steps:
            termination = Termination.STEP_BUDGET
            break
        final = t + h >= config.t_end
        if final:
            h = config.t_end - t
        y_new, k_new, err = stepper.step(y, k, h)
        if not np.all(np.isfinite(y_new)):
            err = math.inf
        if err <= 1.0:
            t = config.t_end if final else t + h
            if constrain is not None:
                y_new[:dim] = constrain(y_new[:dim])
                k_new[:dim] = constrain(k_new[:dim])
            y, k = y_new, k_new
            accepted += 1
            times.append(t)
            states.append(y.copy())
            derivs.append(stepper.derivative(y, k))
            if norm(y[:dim]) > config.blowup_threshold:
                termination = Termination.BLOWUP_DETECTED
                break
            h *= stepper.next_factor(err)
        else:
            rejected += 1
            h *= FACTOR_MIN if not math.isfinite(err) else stepper.next_factor(err)
            if h < dt_min:
                termination = Termination.DT_UNDERFLOW
                break
        if not final and h < dt_min:
            termination = Termination.DT_UNDERFLOW
            break

    states_arr = np.array(states)
    derivs_arr = np.array(derivs)
    logger.info(
        "Integration finished",
        extra={"kind": kind, "N": N, "t_final": t, "steps": accepted,
               "rejected": rejected, "termination": termination.value},
    )
    body_dtype = float if kind == "dyadic" else complex
    return Trajectory(
        kind=kind,
        N=N,
        config=config,
        times=np.array(times),
        states=states_arr[:, :dim].astype(body_dtype),
        derivatives=derivs_arr[:, :dim].astype(body_dtype),
        dissipated=states_arr[:, dim].real.astype(float),
        termination=termination,
        steps=accepted,
        rejected=rejected,
    )


def integrate_dyadic(psi0: Sequence[float], config: SimConfig) -> Trajectory:
    """
    Integrate the reduced ψ system.

    Args:
        psi0: Initial ψ of length config.shells + 1
        config: Run configuration

    Returns:
        Trajectory with kind "dyadic"
    """
    psi0 = np.asarray(psi0, dtype=float)
    N = config.shells
    if psi0.size != N + 1:
        raise ValueError(f"psi0 has {psi0.size} entries, expected {N + 1}")
    coeffs = coefficient_tables(N, config.alpha, config.nu)
    weights = 3.0 ** np.arange(N + 1)

    def transfer(psi):
        return nonlinear_rhs(psi, coeffs)

    def dissipation_rate(psi):
        return float(np.sum(coeffs.decay * psi * psi))

    def norm(psi):
        return math.sqrt(float(np.sum(weights * psi * psi)))

    logger.info("Dyadic run started", extra={"N": N, "model": config.model.value, "t_end": config.t_end})
    return _integrate(psi0, np.array(coeffs.decay), transfer, dissipation_rate, norm, config, "dyadic", N)


def integrate_galerkin(u0: SpectralField, config: SimConfig) -> Trajectory:
    """
    Integrate the truncated field equation ∂_t u = B(u, u) - ν(-Δ)^α u.

    Args:
        u0: Initial field; truncated or zero-extended to config.shells
        config: Run configuration

    Returns:
        Trajectory with kind "galerkin" over flat amplitude vectors
    """
    N = config.shells
    start = u0.truncated(N)
    projector = invariant_projector(N, symmetry_classify(start))
    y0 = start.flat.astype(complex)
    if projector is not None:
        y0 = projector(y0)
    d = dissipation_multipliers(N, config.alpha)
    decay = np.repeat(config.nu * d, 6) if config.nu > 0.0 else np.zeros(6 * (N + 1))
    norm_weights = np.repeat(sobolev_weights(N, CRITICAL_S), 6)

    def transfer(c):
        return bilinear_flat(c, c, N, N)

    def dissipation_rate(c):
        return 2.0 * float(np.sum(decay * np.abs(c) ** 2))

    def norm(c):
        return math.sqrt(2.0 * float(np.sum(norm_weights * np.abs(c) ** 2)))

    logger.info("Galerkin run started", extra={"N": N, "model": config.model.value, "t_end": config.t_end,
                                                "constrained": projector is not None})
    return _integrate(y0, decay, transfer, dissipation_rate, norm, config, "galerkin", N, projector)


def _run_dyadic(args):
    psi0, config = args
    return integrate_dyadic(psi0, config)


def sweep(psi0: Sequence[float], configs: Sequence[SimConfig], jobs: Optional[int] = None) -> List[Trajectory]:
    """
    Run independent dyadic trajectories, fanned out over worker processes.

    Results come back in the order of configs.
    """
    jobs = jobs or get_settings().jobs
    tasks = [(np.asarray(psi0, dtype=float), c) for c in configs]
    logger.info("Sweep started", extra={"runs": len(tasks), "jobs": jobs})
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_dyadic(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(_run_dyadic, tasks))


# -------------------------
# Blowup detection
# -------------------------

def fit_blowup(
    times: np.ndarray,
    values: np.ndarray,
    min_decades: float = 2.0,
    headroom: float = 2.0,
    span: float = 3.0,
) -> BlowupReport:
    """
    Fit values ≈ C (T - t)^{-p} by least squares in log-log form.

    The fit window ends headroom decades below the last sample and reaches
    back at most span decades, never below ten times the first value. When
    the growth is too short for that window, the final decade is used.
    For fixed T the fit is linear in (log C, p); T is found by a bounded
    scalar search on log(T - t_last).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    positive = values > 0
    times, values = times[positive], values[positive]
    if values.size < 4:
        return BlowupReport(detected=False, message="no blowup signature: too few samples")
    decades = float(np.log10(values[-1] / np.min(values)))
    if decades < min_decades or values[-1] <= values[0]:
        return BlowupReport(detected=False, log_decades=max(decades, 0.0),
                            message="no blowup signature: insufficient growth")

    top = values[-1] / 10.0 ** headroom
    floor = max(top / 10.0 ** span, 10.0 * values[0])
    window = (values >= floor) & (values <= top)
    if top <= floor or np.count_nonzero(window) < 4:
        window = values >= values[-1] / 10.0
    first, last = np.nonzero(window)[0][[0, -1]]
    t_fit, y_fit = times[first:last + 1], np.log(values[first:last + 1])
    if t_fit.size < 4:
        t_fit, y_fit = times[-4:], np.log(values[-4:])
    t_last = float(t_fit[-1])
    width = max(t_last - float(t_fit[0]), 1e-300)

    def solve(tau):
        gap = np.log(t_last + math.exp(tau) - t_fit)
        design = np.column_stack([np.ones_like(gap), -gap])
        coef, *_ = np.linalg.lstsq(design, y_fit, rcond=None)
        residual = y_fit - design @ coef
        return float(residual @ residual), coef

    result = minimize_scalar(
        lambda tau: solve(tau)[0],
        bounds=(math.log(width * 1e-9), math.log(width * 1e3)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    _, coef = solve(result.x)
    T_est = t_last + math.exp(result.x)
    report = BlowupReport(
        detected=True,
        T_est=T_est,
        rate_exponent=float(coef[1]),
        log_decades=decades,
        fit_points=int(t_fit.size),
        message="blowup signature",
    )
    logger.info("Blowup fit", extra={"T_est": T_est, "p": report.rate_exponent, "points": report.fit_points})
    return report


def detect_blowup(traj: Trajectory, saturation_fraction: Optional[float] = None) -> BlowupReport:
    """
    Blowup report for a trajectory; samples after truncation saturation are excluded.

    Euler runs also carry the analytic bound T* for comparison.
    """
    cutoff = traj.saturation_time(saturation_fraction)
    keep = traj.times <= cutoff if cutoff is not None else np.ones(traj.times.size, dtype=bool)
    report = fit_blowup(traj.times[keep], traj.growth_norm()[keep])
    if traj.config.model == ModelKind.EULER:
        from diagnostics import euler_blowup_bound

        l2 = math.sqrt(2.0 * traj.kinetic_energy()[0]) if traj.is_galerkin else \
            math.sqrt(12.0 * float(np.sum(traj.states[0] ** 2)))
        if l2 > 0.0:
            report.bound_T_star = euler_blowup_bound(l2_norm=l2).T_star
    return report


def parity_defect_prediction(traj: Trajectory, m: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Predicted and observed hj-parity defect η_m - ζ_m along a Galerkin run.

    The defect obeys ρ' = (b_m φ_{m+1} - ν d_{2m+1}) ρ, so
    ρ(t) = ρ(0) exp(b_m ∫φ_{m+1} - ν d_{2m+1} t).

    Returns:
        (times, predicted, observed)
    """
    if not traj.is_galerkin:
        raise ValueError("parity defect needs a Galerkin trajectory")
    N = traj.N
    if 2 * m + 1 > N:
        raise ValueError(f"generation {m} has no odd shell within N={N}")
    observed = np.empty(traj.times.size)
    phi_next = np.zeros(traj.times.size)
    phi_next_rate = np.zeros(traj.times.size)
    for i, (state, deriv) in enumerate(zip(traj.states, traj.derivatives)):
        phi, eta, zeta = to_components(SpectralField.from_flat(N, state), tol=1e-6)
        observed[i] = eta[m] - zeta[m]
        if m + 1 < phi.size:
            phi_next[i] = phi[m + 1]
            phi_next_rate[i] = to_components(SpectralField.from_flat(N, deriv), tol=math.inf)[0][m + 1]
    _, b_m = interaction_coefficients(m)
    decay = traj.config.nu * dissipation_multipliers(N, traj.config.alpha)[2 * m + 1]
    integral = traj.cumulative_integral(phi_next, phi_next_rate)
    predicted = observed[0] * np.exp(b_m * integral - decay * (traj.times - traj.times[0]))
    return traj.times.copy(), predicted, observed
