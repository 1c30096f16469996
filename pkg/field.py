"""
Velocity fields in the constraint space.

A SpectralField stores one complex amplitude c_k per positive frequency
k ∈ ℳ^+ with shell ≤ N, meaning û(k) = c_k v^k. The negative half is implied
by reality, c_{-k} = conj(c_k), so divergence-free and constraint-space
membership hold by construction.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import get_settings
from lattice import (
    Frequency,
    Kind,
    build_shell_table,
    classify,
    mirror_frequency,
)
from models import SymmetryFlags, SymmetryViolation, VerificationError

logger = logging.getLogger(__name__)

LOG3_OVER_LOG2 = math.log(3.0) / math.log(2.0)


# -------------------------
# Spectral Field
# -------------------------

@dataclass(frozen=True)
class SpectralField:
    """Immutable snapshot of amplitudes on ℳ^+_{≤N}, shape (N+1, 6)."""
    N: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(self.N + 1, 6)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zeros(cls, N: int) -> "SpectralField":
        return cls(N, np.zeros((N + 1, 6), dtype=complex))

    @classmethod
    def from_flat(cls, N: int, flat: np.ndarray) -> "SpectralField":
        return cls(N, np.asarray(flat, dtype=complex).reshape(N + 1, 6))

    @property
    def table(self):
        return build_shell_table(self.N)

    @property
    def flat(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def amplitude(self, k: Frequency) -> complex:
        """c_k for any k ∈ ±ℳ_{≤N}; zero elsewhere."""
        hit = self.table.lookup(k)
        if hit is None:
            return 0j
        idx, negative = hit
        c = self.flat[idx]
        return complex(np.conj(c)) if negative else complex(c)

    def vectors(self) -> np.ndarray:
        """û(k) = c_k v^k on ℳ^+, shape (N+1, 6, 3)."""
        return self.amplitudes[..., None] * self.table.directions

    def scaled(self, factor: complex) -> "SpectralField":
        return SpectralField(self.N, self.amplitudes * factor)

    def truncated(self, N: int) -> "SpectralField":
        """Restrict or zero-extend to shells ≤ N."""
        out = np.zeros((N + 1, 6), dtype=complex)
        keep = min(N, self.N) + 1
        out[:keep] = self.amplitudes[:keep]
        return SpectralField(N, out)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        N = max(self.N, other.N)
        return SpectralField(N, self.truncated(N).amplitudes + other.truncated(N).amplitudes)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self + other.scaled(-1.0)

    def as_raw(self) -> Dict[Frequency, np.ndarray]:
        """Full ±k map of complex 3-vectors, the input format of project_M."""
        raw: Dict[Frequency, np.ndarray] = {}
        vecs = self.vectors()
        for n, shell in enumerate(self.table.shells):
            for pos, k in enumerate(shell):
                raw[k] = vecs[n, pos]
                raw[-k] = np.conj(vecs[n, pos])
        return raw


@lru_cache(maxsize=None)
def shell_kinds(N: int) -> Tuple[Tuple[Kind, ...], ...]:
    """Kind (K, H or J) of each member of each positive shell."""
    table = build_shell_table(N)
    return tuple(tuple(classify(k).kind for k in shell) for shell in table.shells)


# -------------------------
# Projection and Norms
# -------------------------

def project_M(raw: Mapping, N: int) -> SpectralField:
    """
    Project a Fourier map onto the constraint space truncated at shell N.

    Args:
        raw: Mapping from integer 3-vectors to complex 3-vectors ŵ(k)
        N: Truncation shell

    Returns:
        SpectralField with amplitude v^k·ŵ(k) at every k ∈ ℳ_{≤N}
    """
    table = build_shell_table(N)
    amps = np.zeros(table.size, dtype=complex)
    seen = np.zeros(table.size, dtype=bool)
    negatives = []
    for key, value in raw.items():
        k = key if isinstance(key, Frequency) else Frequency.of(key)
        hit = table.lookup(k)
        if hit is None:
            continue
        idx, negative = hit
        if negative:
            negatives.append((idx, value))
            continue
        amps[idx] = np.dot(table.directions.reshape(-1, 3)[idx], np.asarray(value, dtype=complex))
        seen[idx] = True
    for idx, value in negatives:
        if not seen[idx]:
            amps[idx] = np.conj(np.dot(table.directions.reshape(-1, 3)[idx], np.asarray(value, dtype=complex)))
    return SpectralField.from_flat(N, amps)


def sobolev_weights(N: int, s: float) -> np.ndarray:
    """(4π²|k|²)^s per shell."""
    return (4.0 * math.pi ** 2 * build_shell_table(N).norm_sq()) ** s


def sobolev_norm(field: SpectralField, s: float = 0.0) -> float:
    """
    Homogeneous Sobolev norm over both halves ±k.

    Args:
        field: Spectral field
        s: Regularity exponent

    Returns:
        (Σ_k (4π²|k|²)^s |c_k|²)^{1/2}
    """
    weights = sobolev_weights(field.N, s)
    total = 2.0 * np.sum(weights[:, None] * np.abs(field.amplitudes) ** 2)
    return float(math.sqrt(total))


def l2_inner(u: SpectralField, w: SpectralField) -> float:
    """Real L² inner product ∫u·w over the torus."""
    N = max(u.N, w.N)
    a, b = u.truncated(N).amplitudes, w.truncated(N).amplitudes
    return float(2.0 * np.real(np.sum(np.conj(a) * b)))


def dyadic_exponent(s: float) -> float:
    """s̃ = (2 log 2 / log 3) s."""
    return 2.0 * s / LOG3_OVER_LOG2


def physical_exponent(s_tilde: float) -> float:
    """Inverse of dyadic_exponent."""
    return s_tilde * LOG3_OVER_LOG2 / 2.0


def dyadic_norm(psi: Sequence[float], s_tilde: float) -> float:
    """‖ψ‖_{ℋ^s̃} = (Σ 3^{s̃ n} ψ_n²)^{1/2}."""
    psi = np.asarray(psi, dtype=float)
    n = np.arange(psi.size)
    return float(math.sqrt(np.sum(3.0 ** (s_tilde * n) * psi ** 2)))


def norm_equivalence_check(field: SpectralField, s: float) -> Tuple[float, float, float]:
    """
    Sandwich of ‖u‖²_{Ḣ^s} between multiples of ‖ψ‖²_{ℋ^s̃}.

    Returns:
        (lower, value, upper) with lower ≤ value ≤ upper

    Raises:
        SymmetryViolation: field not reducible to ψ
        VerificationError: the sandwich fails
    """
    psi = to_psi(field)
    norm_sq = dyadic_norm(psi, dyadic_exponent(s)) ** 2
    lower = 12.0 * (12.0 * math.pi ** 2) ** s * norm_sq
    upper = 12.0 * (20.0 * math.pi ** 2) ** s * norm_sq
    value = sobolev_norm(field, s) ** 2
    slack = 1e-12 * max(upper, 1e-300)
    if not (lower - slack <= value <= upper + slack):
        raise VerificationError(
            "norm equivalence violated",
            {"s": s, "lower": lower, "value": value, "upper": upper},
        )
    return lower, value, upper


def vorticity_amplitudes(field: SpectralField) -> np.ndarray:
    """ω̂(k) = 2πi k×û(k) on ℳ^+, shape (N+1, 6, 3)."""
    return 2j * math.pi * np.cross(field.table.wavevectors, field.vectors())


def helicity(field: SpectralField) -> float:
    """∫u·ω computed spectrally over both halves."""
    u_hat = field.vectors()
    w_hat = vorticity_amplitudes(field)
    return float(2.0 * np.real(np.sum(np.conj(u_hat) * w_hat)))


# -------------------------
# Symmetric Fields
# -------------------------

def from_psi(psi: Sequence[float]) -> SpectralField:
    """Field with c_k = iψ_n on every member of shell n."""
    psi = np.asarray(psi, dtype=float)
    amps = np.repeat(1j * psi[:, None], 6, axis=1)
    return SpectralField(psi.size - 1, amps)


def from_components(phi: Sequence[float], eta: Sequence[float], zeta: Sequence[float], N: int) -> SpectralField:
    """
    Odd permutation-symmetric field from its (φ, η, ζ) coefficients.

    Args:
        phi: φ_m on the k-shells 2m ≤ N
        eta: η_m on the h-members of shells 2m+1 ≤ N
        zeta: ζ_m on the j-members of shells 2m+1 ≤ N
        N: Truncation shell
    """
    phi, eta, zeta = (np.asarray(x, dtype=float) for x in (phi, eta, zeta))
    if phi.size != N // 2 + 1 or eta.size != (N + 1) // 2 or zeta.size != (N + 1) // 2:
        raise ValueError(f"component lengths do not match truncation N={N}")
    kinds = shell_kinds(N)
    amps = np.zeros((N + 1, 6), dtype=complex)
    for n in range(N + 1):
        m = n // 2
        for pos, kind in enumerate(kinds[n]):
            if kind == Kind.K:
                amps[n, pos] = 1j * phi[m]
            elif kind == Kind.H:
                amps[n, pos] = 1j * eta[m]
            else:
                amps[n, pos] = 1j * zeta[m]
    return SpectralField(N, amps)


def _shell_deviations(field: SpectralField) -> Dict[str, np.ndarray]:
    """Absolute per-shell deviations from oddness, permutation symmetry, hj-parity, σ-mirror."""
    N = field.N
    amps = field.amplitudes
    kinds = shell_kinds(N)
    table = field.table
    odd = np.max(np.abs(amps.real), axis=1)
    perm = np.zeros(N + 1)
    hj = np.zeros(N + 1)
    mirror = np.zeros(N + 1)
    for n in range(N + 1):
        by_kind: Dict[Kind, list] = {}
        for pos, kind in enumerate(kinds[n]):
            by_kind.setdefault(kind, []).append(amps[n, pos])
        for values in by_kind.values():
            values = np.array(values)
            perm[n] = max(perm[n], float(np.max(np.abs(values - values[0]))))
        if n % 2 == 1:
            hj[n] = abs(np.mean(by_kind[Kind.H]) - np.mean(by_kind[Kind.J]))
        for pos, k in enumerate(table.shells[n]):
            partner = -mirror_frequency(k)
            mirror[n] = max(mirror[n], abs(np.conj(field.amplitude(partner)) + amps[n, pos]))
    return {"odd": odd, "permutation": perm, "hj_parity": hj, "sigma_mirror": mirror}


def symmetry_classify(field: SpectralField, tol: Optional[float] = None) -> SymmetryFlags:
    """
    Classify the symmetries of a field.

    Deviations are measured relative to the largest amplitude of the field.

    Args:
        field: Spectral field
        tol: Relative tolerance (defaults to settings.symmetry_tol)

    Returns:
        SymmetryFlags with per-flag maximum relative deviation
    """
    tol = get_settings().symmetry_tol if tol is None else tol
    scale = float(np.max(np.abs(field.amplitudes))) if field.amplitudes.size else 0.0
    if scale == 0.0:
        zeros = {"odd": 0.0, "permutation": 0.0, "hj_parity": 0.0, "sigma_mirror": 0.0, "positivity": 0.0}
        return SymmetryFlags(
            odd=True, permutation_symmetric=True, hj_parity=True,
            sigma_mirror=True, coefficient_positive=True, deviations=zeros,
        )

    shell_dev = _shell_deviations(field)
    dev = {name: float(np.max(values)) / scale for name, values in shell_dev.items()}
    dev["positivity"] = max(0.0, -float(np.min(field.amplitudes.imag))) / scale

    odd = dev["odd"] <= tol
    perm = dev["permutation"] <= tol
    hj = dev["hj_parity"] <= tol
    mirror = dev["sigma_mirror"] <= tol
    positive = odd and perm and dev["positivity"] <= tol

    if odd and perm and hj != mirror and abs(dev["hj_parity"] - dev["sigma_mirror"]) > tol:
        raise VerificationError(
            "hj-parity and σ-mirror symmetry disagree on an odd permutation-symmetric field",
            dev,
        )
    return SymmetryFlags(
        odd=odd,
        permutation_symmetric=perm,
        hj_parity=hj,
        sigma_mirror=mirror,
        coefficient_positive=positive,
        deviations=dev,
    )


def _check_reducible(field: SpectralField, tol: Optional[float], require_parity: bool):
    tol = get_settings().symmetry_tol if tol is None else tol
    scale = float(np.max(np.abs(field.amplitudes)))
    if scale == 0.0:
        return
    shell_dev = _shell_deviations(field)
    names = ["odd", "permutation"] + (["hj_parity"] if require_parity else [])
    for n in range(field.N + 1):
        for name in names:
            deviation = float(shell_dev[name][n]) / scale
            if deviation > tol:
                raise SymmetryViolation(
                    f"{name} symmetry violated on shell {n} (deviation {deviation:.3e})",
                    shell=n,
                    deviation=deviation,
                )


def to_components(field: SpectralField, tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Extract (φ, η, ζ) from an odd permutation-symmetric field.

    Raises:
        SymmetryViolation: oddness or permutation symmetry fails on some shell
    """
    _check_reducible(field, tol, require_parity=False)
    kinds = shell_kinds(field.N)
    phi = np.zeros(field.N // 2 + 1)
    eta = np.zeros((field.N + 1) // 2)
    zeta = np.zeros((field.N + 1) // 2)
    for n in range(field.N + 1):
        m = n // 2
        for pos, kind in enumerate(kinds[n]):
            value = field.amplitudes[n, pos].imag
            if kind == Kind.K:
                phi[m] = value
            elif kind == Kind.H:
                eta[m] = value
            else:
                zeta[m] = value
    return phi, eta, zeta


def to_psi(field: SpectralField, tol: Optional[float] = None) -> np.ndarray:
    """
    Reduce an odd, permutation-symmetric field with hj-parity to ψ.

    Args:
        field: Spectral field
        tol: Relative tolerance (defaults to settings.symmetry_tol)

    Returns:
        ψ_0..ψ_N

    Raises:
        SymmetryViolation: carries the first offending shell
    """
    _check_reducible(field, tol, require_parity=True)
    phi, eta, zeta = to_components(field, tol=math.inf)
    psi = np.zeros(field.N + 1)
    psi[0::2] = phi
    psi[1::2] = 0.5 * (eta + zeta)
    return psi


def invariant_projector(N: int, flags: SymmetryFlags) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """
    Orthogonal projection of flat amplitudes onto the symmetry class of flags.

    Oddness drops real parts. Permutation symmetry averages each (shell, kind)
    orbit; with hj-parity as well, the h and j orbits of an odd shell share one
    average. Every member of an orbit receives the same float.

    Returns:
        The projection, or None when flags name no class to keep
    """
    merge_hj = flags.permutation_symmetric and flags.hj_parity
    if not (flags.odd or flags.permutation_symmetric):
        return None
    kinds = shell_kinds(N)
    labels = np.arange(6 * (N + 1))
    if flags.permutation_symmetric:
        orbit: Dict[Tuple[int, Kind], int] = {}
        for n in range(N + 1):
            for pos, kind in enumerate(kinds[n]):
                key = (n, Kind.H if merge_hj and kind == Kind.J else kind)
                labels[6 * n + pos] = orbit.setdefault(key, len(orbit))
    counts = np.bincount(labels).astype(float)
    odd = flags.odd

    def project(flat: np.ndarray) -> np.ndarray:
        imag = np.bincount(labels, weights=flat.imag, minlength=counts.size) / counts
        if odd:
            return 1j * imag[labels]
        real = np.bincount(labels, weights=flat.real, minlength=counts.size) / counts
        return real[labels] + 1j * imag[labels]

    logger.debug("Invariant projector built", extra={"N": N, "odd": odd,
                 "permutation": flags.permutation_symmetric, "hj_parity": merge_hj})
    return project


def random_field(
    N: int,
    rng: np.random.Generator,
    symmetric: bool = False,
    positive: bool = False,
) -> SpectralField:
    """
    Draw a random field.

    Args:
        N: Truncation shell
        rng: numpy Generator
        symmetric: Draw ψ and build the reducible field
        positive: Restrict ψ to [0, 1) (only with symmetric)
    """
    if symmetric:
        psi = rng.uniform(0.0, 1.0, N + 1) if positive else rng.standard_normal(N + 1)
        return from_psi(psi)
    amps = rng.standard_normal((N + 1, 6)) + 1j * rng.standard_normal((N + 1, 6))
    return SpectralField(N, amps)
