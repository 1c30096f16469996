"""
Reduced shell system for ψ_n.

    dψ_n/dt = -ν d_n(α) ψ_n + A_n ψ_{n-1}² - D_n ψ_n ψ_{n+1}

with A_n = √2πβ_{n-1}(√3)^n, D_n = √2πβ_n(√3)^{n+1} = A_{n+1}, ψ_{-1} = 0 and
ψ_{N+1} = 0 at the truncation.
"""
import logging
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from bilinear import dissipation_multipliers, reduced_coefficients
from models import ModelKind, ParameterRangeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DyadicCoefficients:
    """Precomputed attack, drain and decay tables up to shell N."""
    N: int
    alpha: float
    nu: float
    attack: np.ndarray
    drain: np.ndarray
    decay: np.ndarray


@lru_cache(maxsize=64)
def coefficient_tables(N: int, alpha: float = 0.0, nu: float = 0.0) -> DyadicCoefficients:
    """Coefficient tables for shells 0..N (cached)."""
    rows = [reduced_coefficients(n) for n in range(N + 1)]
    attack = np.array([r[1] for r in rows])
    drain = np.array([r[2] for r in rows])
    decay = nu * dissipation_multipliers(N, alpha) if nu > 0.0 else np.zeros(N + 1)
    for arr in (attack, drain, decay):
        arr.setflags(write=False)
    return DyadicCoefficients(N=N, alpha=alpha, nu=nu, attack=attack, drain=drain, decay=decay)


@dataclass(frozen=True)
class DyadicState:
    """ψ at time t for a given model."""
    psi: np.ndarray
    t: float = 0.0
    model: ModelKind = ModelKind.EULER
    alpha: float = 0.0
    nu: float = 0.0

    @property
    def N(self) -> int:
        return int(self.psi.size) - 1

    @property
    def coefficients(self) -> DyadicCoefficients:
        return coefficient_tables(self.N, self.alpha, self.nu)


# -------------------------
# Right-hand side
# -------------------------

def nonlinear_rhs(psi: np.ndarray, coeffs: DyadicCoefficients) -> np.ndarray:
    """Transfer terms only."""
    prev = np.concatenate(([0.0], psi[:-1]))
    nxt = np.concatenate((psi[1:], [0.0]))
    return coeffs.attack * prev * prev - coeffs.drain * psi * nxt


def rhs(state: DyadicState) -> np.ndarray:
    """
    dψ/dt for a dyadic state.

    Args:
        state: DyadicState

    Returns:
        Array of length N+1
    """
    coeffs = state.coefficients
    return nonlinear_rhs(state.psi, coeffs) - coeffs.decay * state.psi


def rhs_psi(psi: np.ndarray, alpha: float = 0.0, nu: float = 0.0) -> np.ndarray:
    """Convenience wrapper over rhs for a bare ψ vector."""
    psi = np.asarray(psi, dtype=float)
    coeffs = coefficient_tables(psi.size - 1, alpha, nu)
    return nonlinear_rhs(psi, coeffs) - coeffs.decay * psi


# -------------------------
# Shell energies
# -------------------------

def shell_energies(psi: np.ndarray) -> np.ndarray:
    """E_n = Σ_{m≥n} ψ_m² for every n."""
    sq = np.asarray(psi, dtype=float) ** 2
    return np.cumsum(sq[::-1])[::-1]


def shell_energy(psi: np.ndarray, n: int) -> float:
    """E_n = Σ_{m≥n} ψ_m²."""
    psi = np.asarray(psi, dtype=float)
    if not 0 <= n <= psi.size - 1:
        raise ValueError(f"shell {n} outside 0..{psi.size - 1}")
    return float(np.sum(psi[n:] ** 2))


def shell_energy_rate(psi: np.ndarray, n: int, alpha: float = 0.0, nu: float = 0.0) -> float:
    """
    Analytic dE_n/dt.

    The transfer sum telescopes to the single flux 2A_n ψ_{n-1}² ψ_n into
    shell n; dissipation removes 2ν Σ_{m≥n} d_m ψ_m².
    """
    psi = np.asarray(psi, dtype=float)
    coeffs = coefficient_tables(psi.size - 1, alpha, nu)
    flux = 0.0 if n == 0 else 2.0 * coeffs.attack[n] * psi[n - 1] ** 2 * psi[n]
    return float(flux - 2.0 * np.sum(coeffs.decay[n:] * psi[n:] ** 2))


# -------------------------
# Lyapunov functional
# -------------------------

def lyapunov_r(gamma: float) -> float:
    """r(γ) = (3/2 + 3^{-1-γ}) / (2(3^γ - 1))."""
    if gamma <= 0.0:
        raise ParameterRangeError(f"gamma must be > 0, got {gamma}", inequality="0 < gamma")
    return (1.5 + 3.0 ** (-1.0 - gamma)) / (2.0 * (3.0 ** gamma - 1.0))


def lyapunov(psi: np.ndarray, gamma: float) -> Tuple[float, float]:
    """
    H_γ = r Σ 3^{γn} ψ_n² + Σ 3^{γn} ψ_n ψ_{n+1}.

    Returns:
        (H_γ, r(γ))
    """
    r = lyapunov_r(gamma)
    psi = np.asarray(psi, dtype=float)
    w = 3.0 ** (gamma * np.arange(psi.size))
    H = r * np.sum(w * psi ** 2) + np.sum(w[:-1] * psi[:-1] * psi[1:])
    return float(H), r


def lyapunov_bounds(psi: np.ndarray, gamma: float) -> Tuple[float, float, float]:
    """(r‖ψ‖²_{ℋ^γ}, H_γ, (r + ½ + ½3^{-γ})‖ψ‖²_{ℋ^γ}) for nonnegative ψ."""
    H, r = lyapunov(psi, gamma)
    psi = np.asarray(psi, dtype=float)
    norm_sq = float(np.sum(3.0 ** (gamma * np.arange(psi.size)) * psi ** 2))
    return r * norm_sq, H, (r + 0.5 + 0.5 * 3.0 ** (-gamma)) * norm_sq


def lyapunov_rate(psi: np.ndarray, gamma: float, alpha: float = 0.0, nu: float = 0.0) -> float:
    """Analytic dH_γ/dt along the flow."""
    _, r = lyapunov(psi, gamma)
    psi = np.asarray(psi, dtype=float)
    w = 3.0 ** (gamma * np.arange(psi.size))
    grad = 2.0 * r * w * psi
    grad[:-1] += w[:-1] * psi[1:]
    grad[1:] += w[:-1] * psi[:-1]
    return float(np.dot(grad, rhs_psi(psi, alpha, nu)))


# -------------------------
# Initial data
# -------------------------

_GEOMETRIC = re.compile(r"^geometric\(\s*([-+0-9.eE]+)\s*\)$")


def psi_preset(preset: Union[str, Path], N: int) -> np.ndarray:
    """
    Resolve initial data: "delta0", "geometric(q)" or a one-column CSV file.

    Args:
        preset: Preset name or file path
        N: Truncation shell; files are zero-padded or must fit

    Returns:
        ψ_0..ψ_N
    """
    text = str(preset).strip()
    if text == "delta0":
        psi = np.zeros(N + 1)
        psi[0] = 1.0
        return psi
    match = _GEOMETRIC.match(text)
    if match:
        q = float(match.group(1))
        return q ** np.arange(N + 1, dtype=float)
    path = Path(text)
    if not path.exists():
        raise ValueError(f"unknown ψ preset or missing file: {text}")
    values = np.atleast_1d(np.loadtxt(path, delimiter=",", comments="#", ndmin=1))
    if values.size > N + 1:
        raise ValueError(f"{path} holds {values.size} shells, truncation is {N}")
    psi = np.zeros(N + 1)
    psi[:values.size] = values
    logger.info("Loaded initial data", extra={"path": str(path), "shells": int(values.size)})
    return psi


def alpha_from_tilde(alpha_tilde: float) -> float:
    """α = α̃ log 3 / (2 log 2)."""
    return alpha_tilde * math.log(3.0) / (2.0 * math.log(2.0))
