"""
Projected nonlinearity B(u, w) = -½ ℙ_ℳ((u·∇)w + (w·∇)u) on the lattice.

Interactions are enumerated once per (N, N_out) by walking adjacent shells and
classifying q - a; evaluation is then a gather/scatter over the cached table.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from lattice import Frequency, Kind, build_shell_table, canonical_frequency, classify, constraint_direction
from field import SpectralField, random_field, sobolev_norm
from models import BilinearEstimate, InteractionCase, InteractionReport, VerificationError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)


# -------------------------
# Interaction Coefficients
# -------------------------

def interaction_coefficients(m: int) -> Tuple[float, float]:
    """
    Closed-form (a_m, b_m).

    a_m = √6 π 3^m (1 + ½(9/16)^m)^{-1/2}
    b_m = √2 π 3^{m+1} (1 + ⅜(9/16)^m)^{-1/2}
    """
    if m < 0:
        raise ValueError(f"generation must be >= 0, got {m}")
    q = (9.0 / 16.0) ** m
    a = SQRT6 * math.pi * 3.0 ** m / math.sqrt(1.0 + 0.5 * q)
    b = SQRT2 * math.pi * 3.0 ** (m + 1) / math.sqrt(1.0 + 0.375 * q)
    return a, b


def coefficient_squares(m: int) -> Tuple[Fraction, Fraction]:
    """Exact (a_m²/π², b_m²/π²)."""
    q = Fraction(9, 16) ** m
    a_sq = Fraction(6 * 9 ** m) / (1 + Fraction(1, 2) * q)
    b_sq = Fraction(2 * 9 ** (m + 1)) / (1 + Fraction(3, 8) * q)
    return a_sq, b_sq


def beta(n: int) -> float:
    """β_n = (1 + ½(3/4)^n)^{-1/2}, with β_{-1} = 0."""
    if n < 0:
        return 0.0
    return 1.0 / math.sqrt(1.0 + 0.5 * 0.75 ** n)


def reduced_coefficients(n: int) -> Tuple[float, float, float]:
    """(β_n, attack √2πβ_{n-1}(√3)^n, drain √2πβ_n(√3)^{n+1})."""
    attack = SQRT2 * math.pi * beta(n - 1) * SQRT3 ** n
    drain = SQRT2 * math.pi * beta(n) * SQRT3 ** (n + 1)
    return beta(n), attack, drain


def dissipation_multipliers(N: int, alpha: float) -> np.ndarray:
    """d_n(α) = (4π²(3·4^n + 2·3^n))^α for n = 0..N."""
    n = np.arange(N + 1, dtype=float)
    return (4.0 * math.pi ** 2 * (3.0 * 4.0 ** n + 2.0 * 3.0 ** n)) ** alpha


# -------------------------
# Interaction Table
# -------------------------

@dataclass(frozen=True)
class InteractionTable:
    """Ordered pairs (a, b) with a + b = q, flattened for vectorized evaluation."""
    N: int
    N_out: int
    q_index: np.ndarray
    a_index: np.ndarray
    a_conj: np.ndarray
    b_index: np.ndarray
    b_conj: np.ndarray
    weight: np.ndarray
    raising: np.ndarray

    @property
    def size(self) -> int:
        return int(self.q_index.size)


@lru_cache(maxsize=None)
def interaction_table(N: int, N_out: int) -> InteractionTable:
    """
    Enumerate every interaction feeding shells ≤ N_out from inputs in shells ≤ N.

    Weight of the ordered pair (a, b) → q is (v^a·b)(v^b·v^q).
    """
    inputs = build_shell_table(N)
    geometry = build_shell_table(max(N, N_out))
    rows = []
    for n_q in range(N_out + 1):
        for pos_q, q in enumerate(geometry.shells[n_q]):
            flat_q = 6 * n_q + pos_q
            v_q = geometry.directions[n_q, pos_q]
            for n_a in range(max(0, n_q - 1), min(N, n_q + 1) + 1):
                for pos_a, a_pos in enumerate(inputs.shells[n_a]):
                    v_a = inputs.directions[n_a, pos_a]
                    for a, a_conj in ((a_pos, False), (-a_pos, True)):
                        b = q - a
                        hit = inputs.lookup(b)
                        if hit is None:
                            continue
                        b_idx, b_conj = hit
                        n_b, pos_b = divmod(b_idx, 6)
                        v_b = inputs.directions[n_b, pos_b]
                        weight = float(np.dot(v_a, b.as_array()) * np.dot(v_b, v_q))
                        rows.append((flat_q, 6 * n_a + pos_a, a_conj, b_idx, b_conj, weight,
                                     not a_conj and not b_conj))
    if rows:
        cols = list(zip(*rows))
    else:
        cols = [[] for _ in range(7)]
    table = InteractionTable(
        N=N,
        N_out=N_out,
        q_index=np.array(cols[0], dtype=int),
        a_index=np.array(cols[1], dtype=int),
        a_conj=np.array(cols[2], dtype=bool),
        b_index=np.array(cols[3], dtype=int),
        b_conj=np.array(cols[4], dtype=bool),
        weight=np.array(cols[5], dtype=float),
        raising=np.array(cols[6], dtype=bool),
    )
    logger.debug("Interaction table built", extra={"N": N, "N_out": N_out, "pairs": table.size})
    return table


def _gather(flat: np.ndarray, index: np.ndarray, conj: np.ndarray) -> np.ndarray:
    values = flat[index]
    return np.where(conj, np.conj(values), values)


def _evaluate(u_flat: np.ndarray, w_flat: np.ndarray, table: InteractionTable, mask: Optional[np.ndarray] = None) -> np.ndarray:
    ua = _gather(u_flat, table.a_index, table.a_conj)
    ub = _gather(u_flat, table.b_index, table.b_conj)
    wa = _gather(w_flat, table.a_index, table.a_conj)
    wb = _gather(w_flat, table.b_index, table.b_conj)
    contrib = table.weight * (ua * wb + wa * ub)
    if mask is not None:
        contrib = np.where(mask, contrib, 0.0)
    out = np.zeros(6 * (table.N_out + 1), dtype=complex)
    np.add.at(out, table.q_index, contrib)
    return -1j * math.pi * out


def bilinear_flat(u_flat: np.ndarray, w_flat: np.ndarray, N: int, N_out: int) -> np.ndarray:
    """B on flat amplitude vectors; the hot path used by the Galerkin integrator."""
    return _evaluate(u_flat, w_flat, interaction_table(N, N_out))


def bilinear_B(u: SpectralField, w: SpectralField, N_out: Optional[int] = None) -> SpectralField:
    """
    Exact Galerkin evaluation of B(u, w).

    Args:
        u: First field
        w: Second field
        N_out: Output truncation (defaults to N + 1, the full support)

    Returns:
        SpectralField truncated at N_out
    """
    N = max(u.N, w.N)
    N_out = N + 1 if N_out is None else N_out
    out = bilinear_flat(u.truncated(N).flat, w.truncated(N).flat, N, N_out)
    return SpectralField.from_flat(N_out, out)


def bilinear_parts(u: SpectralField, w: SpectralField, N_out: Optional[int] = None) -> Tuple[SpectralField, SpectralField]:
    """
    Split B(u, w) into raising and exchange parts.

    The raising part collects pairs with both inputs in ℳ^+; the exchange part
    collects the mixed-sign pairs. Their sum is bilinear_B(u, w).
    """
    N = max(u.N, w.N)
    N_out = N + 1 if N_out is None else N_out
    table = interaction_table(N, N_out)
    u_flat, w_flat = u.truncated(N).flat, w.truncated(N).flat
    raising = _evaluate(u_flat, w_flat, table, table.raising)
    exchange = _evaluate(u_flat, w_flat, table, ~table.raising)
    return SpectralField.from_flat(N_out, raising), SpectralField.from_flat(N_out, exchange)


# -------------------------
# General (φ, η, ζ) system
# -------------------------

def component_rhs(
    phi: np.ndarray,
    eta: np.ndarray,
    zeta: np.ndarray,
    N: int,
    nu: float = 0.0,
    alpha: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Right-hand side of the odd permutation-symmetric system without hj-parity.

        φ_m' = b_{m-1} η_{m-1} ζ_{m-1} - (a_m/2) φ_m (η_m + ζ_m)
        η_m' = a_m φ_m² - b_m ζ_m φ_{m+1}
        ζ_m' = a_m φ_m² - b_m η_m φ_{m+1}

    Components beyond shell N are zero; dissipation is -ν d_n(α) per shell.
    """
    n_phi, n_eta = N // 2 + 1, (N + 1) // 2
    coeffs = [interaction_coefficients(m) for m in range(n_phi)]
    a = np.array([c[0] for c in coeffs])
    b = np.array([c[1] for c in coeffs])

    eta_ext = np.concatenate([eta, np.zeros(n_phi - n_eta + 1)])
    zeta_ext = np.concatenate([zeta, np.zeros(n_phi - n_eta + 1)])
    phi_next = np.concatenate([phi[1:], [0.0]])[:n_eta]

    d_phi = -0.5 * a * phi * (eta_ext[:n_phi] + zeta_ext[:n_phi])
    d_phi[1:] += b[:n_phi - 1] * eta_ext[:n_phi - 1] * zeta_ext[:n_phi - 1]
    d_eta = a[:n_eta] * phi[:n_eta] ** 2 - b[:n_eta] * zeta * phi_next
    d_zeta = a[:n_eta] * phi[:n_eta] ** 2 - b[:n_eta] * eta * phi_next

    if nu > 0.0:
        d = dissipation_multipliers(N, alpha)
        d_phi = d_phi - nu * d[0::2] * phi
        d_eta = d_eta - nu * d[1::2] * eta
        d_zeta = d_zeta - nu * d[1::2] * zeta
    return d_phi, d_eta, d_zeta


# -------------------------
# Catalogued Interactions
# -------------------------

def _k(m: int, perm: str = "id") -> Frequency:
    return canonical_frequency(Kind.K, m).permute(perm)


def _h(m: int, perm: str = "id") -> Frequency:
    return canonical_frequency(Kind.H, m).permute(perm)


def _j(m: int, perm: str = "id") -> Frequency:
    return canonical_frequency(Kind.J, m).permute(perm)


def catalogue_cases(m: int) -> List[Tuple[int, Frequency, Frequency, Frequency, float]]:
    """
    The nine catalogued input pairs at generation m.

    Returns:
        (case, a, b, q, expected coefficient X) with ℙ_ℳ((u·∇)w + (w·∇)u)(q) = X i v^q
    """
    a_m, b_m = interaction_coefficients(m)
    return [
        (1, _k(m), _k(m, "P12"), _h(m), -a_m),
        (2, _k(m), _k(m, "P23"), _j(m), -a_m),
        (3, _h(m), _j(m), _k(m + 1), -b_m),
        (4, _h(m), -_k(m, "P12"), _k(m), a_m / 2.0),
        (5, _j(m), -_k(m, "P23"), _k(m), a_m / 2.0),
        (6, _k(m + 1), -_j(m), _h(m), b_m / 2.0),
        (7, _k(m + 1, "P12"), -_j(m, "P12"), _h(m), b_m / 2.0),
        (8, _k(m + 1), -_h(m), _j(m), b_m / 2.0),
        (9, _k(m + 1, "P23"), -_h(m, "P23"), _j(m), b_m / 2.0),
    ]


def single_mode(k: Frequency, N: int, amplitude: complex = 1j) -> SpectralField:
    """Real field with amplitude c at the positive member of ±k (conj(c) at the negative one)."""
    table = build_shell_table(N)
    hit = table.lookup(k)
    if hit is None:
        raise ValueError(f"{k} is not in ℳ_(≤{N})")
    idx, _ = hit
    flat = np.zeros(table.size, dtype=complex)
    flat[idx] = amplitude
    return SpectralField.from_flat(N, flat)


def _exact_square(a: Frequency, b: Frequency, q: Frequency) -> Fraction:
    """4 N²/D for the unnormalized directions, equal to X²/π²."""
    wa = constraint_direction(a)
    wb = constraint_direction(b)
    wq = constraint_direction(q)

    def dot(x, y):
        return sum(x[i] * y[i] for i in range(3))

    numerator = (dot(wb.unnormalized, a.components) * dot(wa.unnormalized, wq.unnormalized)
                 + dot(wa.unnormalized, b.components) * dot(wb.unnormalized, wq.unnormalized))
    denominator = wa.norm_sq * wb.norm_sq * wq.norm_sq
    return 4 * numerator ** 2 / denominator


def verify_appendix_interactions(m_max: int, tol: float = 1e-12) -> InteractionReport:
    """
    Check every catalogued interaction against generic convolution.

    Inputs are single real modes with amplitude i at the positive member
    (so -i at a negative input frequency).

    Args:
        m_max: Largest generation to check
        tol: Relative tolerance on the coefficient and on stray support

    Returns:
        InteractionReport

    Raises:
        VerificationError: carries (m, case, deviation)
    """
    logger.info("Interaction verification started", extra={"m_max": m_max, "tol": tol})
    cases: List[InteractionCase] = []
    for m in range(m_max + 1):
        a_sq, b_sq = coefficient_squares(m)
        N = 2 * m + 2
        for case, a, b, q, expected in catalogue_cases(m):
            u = single_mode(a, N)
            w = single_mode(b, N)
            out = bilinear_B(u, w, N + 1)
            q_idx = out.table.flat_index(q)
            B_q = out.flat[q_idx]
            observed = 2j * B_q
            stray = np.abs(out.flat.copy())
            stray[q_idx] = 0.0
            support_ok = float(np.max(stray)) <= tol * abs(expected)
            deviation = abs(observed - expected) / abs(expected)

            expected_sq = a_sq if case in (1, 2) else b_sq if case == 3 else \
                a_sq / 4 if case in (4, 5) else b_sq / 4
            exact_ok = _exact_square(a, b, q) == expected_sq

            row = InteractionCase(
                m=m,
                case=case,
                target=list(q.components),
                expected=expected,
                observed=float(observed.real),
                deviation=float(deviation),
                support_ok=support_ok,
                exact_square_ok=exact_ok,
            )
            cases.append(row)
            if not (support_ok and exact_ok and deviation <= tol):
                logger.error(
                    "Interaction mismatch",
                    extra={"m": m, "case": case, "deviation": deviation, "support_ok": support_ok},
                )
                raise VerificationError(
                    f"interaction case {case} at m={m} failed (deviation {deviation:.3e})",
                    {"m": m, "case": case, "deviation": float(deviation),
                     "support_ok": support_ok, "exact_square_ok": exact_ok},
                )
    logger.info("Interaction verification passed", extra={"cases": len(cases)})
    return InteractionReport(m_max=m_max, tol=tol, cases=cases, passed=True)


# -------------------------
# Empirical Bilinear Constant
# -------------------------

def bilinear_ratio(u: SpectralField, w: SpectralField, s: float) -> Optional[float]:
    """‖B(u,w)‖_{Ḣ^s} / (‖u‖‖w‖ in Ḣ^{s/2 + log3/(4 log2)}); None if an input vanishes."""
    s_in = s / 2.0 + math.log(3.0) / (4.0 * math.log(2.0))
    denom = sobolev_norm(u, s_in) * sobolev_norm(w, s_in)
    if denom == 0.0:
        return None
    return sobolev_norm(bilinear_B(u, w), s) / denom


def estimate_bilinear_constant(s: float, N: int, sample_count: int, seed: Optional[int] = None) -> BilinearEstimate:
    """
    Empirical supremum of bilinear_ratio over random fields.

    Args:
        s: Output regularity
        N: Truncation shell of the random inputs
        sample_count: Number of (u, w) draws
        seed: numpy seed
    """
    if N < 0 or sample_count < 1:
        raise ValueError("need N >= 0 and sample_count >= 1")
    rng = np.random.default_rng(seed)
    ratios = []
    skipped = 0
    for _ in range(sample_count):
        ratio = bilinear_ratio(random_field(N, rng), random_field(N, rng), s)
        if ratio is None:
            skipped += 1
            continue
        ratios.append(ratio)
    if not ratios:
        raise ValueError("every sample was degenerate")
    logger.info("Bilinear constant estimated", extra={"s": s, "N": N, "max_ratio": max(ratios)})
    return BilinearEstimate(
        s=s,
        shells=N,
        samples=sample_count,
        seed=seed,
        max_ratio=float(max(ratios)),
        mean_ratio=float(np.mean(ratios)),
        skipped=skipped,
    )
