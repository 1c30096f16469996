"""
Constraint lattice ℳ: canonical frequencies, shells, constraint directions.

Every positive frequency of the lattice lies in exactly one shell ℳ_n^+ of six
members. Even shells n = 2m are the permutations of

    k^m = 4^m σ + 3^m (1, 0, -1)

and odd shells n = 2m+1 are the permutations of

    h^m = 2·4^m σ + 3^m (1, 1, -2)   and   j^m = 2·4^m σ + 3^m (2, -1, -1),

with σ = (1, 1, 1). ℳ^- is the negation of ℳ^+. All lattice arithmetic is
exact (Python integers and Fractions); floating point only appears in the
cached unit directions v^k.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import get_settings
from models import CapacityError, LatticeError, LatticeReport, VerificationError

logger = logging.getLogger(__name__)

SIGMA = (1, 1, 1)

# Index maps: (P k)_i = k_{p[i]}. Order fixes which name classify reports.
PERMUTATIONS: Dict[str, Tuple[int, int, int]] = {
    "id": (0, 1, 2),
    "P12": (1, 0, 2),
    "P13": (2, 1, 0),
    "P23": (0, 2, 1),
    "P123": (1, 2, 0),
    "P132": (2, 0, 1),
}


class Kind(str, Enum):
    """Canonical family a frequency belongs to."""
    K = "K"
    H = "H"
    J = "J"


def apply_permutation(name: str, vector: Sequence):
    """Permute the components of any 3-sequence."""
    p = PERMUTATIONS[name]
    return tuple(vector[p[i]] for i in range(3))


def inverse_permutation(name: str) -> str:
    """Name of the inverse permutation."""
    p = PERMUTATIONS[name]
    inv = [0, 0, 0]
    for i in range(3):
        inv[p[i]] = i
    inv_t = tuple(inv)
    for other, q in PERMUTATIONS.items():
        if q == inv_t:
            return other
    raise KeyError(name)


# -------------------------
# Frequencies
# -------------------------

@dataclass(frozen=True, order=True)
class Frequency:
    """Exact integer wave vector in Z^3."""
    x: int
    y: int
    z: int

    @classmethod
    def of(cls, components: Iterable[int]) -> "Frequency":
        x, y, z = (int(c) for c in components)
        return cls(x, y, z)

    @property
    def components(self) -> Tuple[int, int, int]:
        return (self.x, self.y, self.z)

    def __iter__(self):
        return iter(self.components)

    def __neg__(self) -> "Frequency":
        return Frequency(-self.x, -self.y, -self.z)

    def __add__(self, other: "Frequency") -> "Frequency":
        return Frequency(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Frequency") -> "Frequency":
        return Frequency(self.x - other.x, self.y - other.y, self.z - other.z)

    def dot(self, other: Sequence) -> int:
        return self.x * other[0] + self.y * other[1] + self.z * other[2]

    @property
    def sigma_dot(self) -> int:
        return self.x + self.y + self.z

    @property
    def norm_sq(self) -> int:
        return self.x * self.x + self.y * self.y + self.z * self.z

    def permute(self, name: str) -> "Frequency":
        return Frequency(*apply_permutation(name, self.components))

    def as_array(self) -> np.ndarray:
        return np.array(self.components, dtype=float)

    def __str__(self) -> str:
        return f"({self.x}, {self.y}, {self.z})"


@dataclass(frozen=True)
class Membership:
    """Classification of a lattice frequency."""
    sign: int
    shell: int
    kind: Kind
    permutation: str
    generation: int

    @property
    def sign_label(self) -> str:
        return "+" if self.sign > 0 else "-"


def max_exact_shell(bits: Optional[int] = None) -> int:
    """
    Deepest shell whose |k|² fits in a signed integer of the given width.

    Args:
        bits: Integer capacity (defaults to settings.lattice_int_bits)

    Returns:
        Largest n with 3·4^n + 2·3^n < 2^(bits-1)
    """
    bits = bits or get_settings().lattice_int_bits
    limit = 1 << (bits - 1)
    n = 0
    while 3 * 4 ** (n + 1) + 2 * 3 ** (n + 1) < limit:
        n += 1
    return n


def _canonical(kind: Kind, m: int) -> Frequency:
    """Defining formulas, without capacity checks."""
    if kind == Kind.K:
        return Frequency(4 ** m + 3 ** m, 4 ** m, 4 ** m - 3 ** m)
    if kind == Kind.H:
        return Frequency(2 * 4 ** m + 3 ** m, 2 * 4 ** m + 3 ** m, 2 * 4 ** m - 2 * 3 ** m)
    return Frequency(2 * 4 ** m + 2 * 3 ** m, 2 * 4 ** m - 3 ** m, 2 * 4 ** m - 3 ** m)


def canonical_frequency(kind: Kind, m: int, bits: Optional[int] = None) -> Frequency:
    """
    Canonical frequency k^m, h^m or j^m.

    Args:
        kind: K, H or J
        m: Generation index (>= 0)
        bits: Integer capacity to enforce

    Returns:
        Frequency

    Raises:
        CapacityError: The shell exceeds the exact integer capacity
    """
    kind = Kind(kind)
    if m < 0:
        raise ValueError(f"generation must be >= 0, got {m}")
    shell = 2 * m if kind == Kind.K else 2 * m + 1
    cap = max_exact_shell(bits)
    if shell > cap:
        raise CapacityError(
            f"shell {shell} exceeds exact capacity (max shell {cap}); truncation too deep",
            shell=shell,
        )
    return _canonical(kind, m)


@lru_cache(maxsize=None)
def _shell_members(n: int) -> Dict[Frequency, Tuple[Kind, str, int]]:
    """Members of ℳ_n^+ mapped to (kind, first permutation name, generation)."""
    if n % 2 == 0:
        m = n // 2
        bases = [(Kind.K, _canonical(Kind.K, m))]
    else:
        m = (n - 1) // 2
        bases = [(Kind.H, _canonical(Kind.H, m)), (Kind.J, _canonical(Kind.J, m))]
    members: Dict[Frequency, Tuple[Kind, str, int]] = {}
    for kind, base in bases:
        for name in PERMUTATIONS:
            image = base.permute(name)
            if image not in members:
                members[image] = (kind, name, m)
    return members


def shell_frequencies(n: int) -> List[Frequency]:
    """The six members of ℳ_n^+ in lexicographic order."""
    if n < 0:
        raise ValueError(f"shell index must be >= 0, got {n}")
    return sorted(_shell_members(n))


def classify(k) -> Optional[Membership]:
    """
    Decide membership of k in ℳ.

    Args:
        k: Frequency or integer 3-sequence

    Returns:
        Membership, or None when k is not in ℳ
    """
    if not isinstance(k, Frequency):
        k = Frequency.of(k)
    s = k.sigma_dot
    if s == 0:
        return None
    sign = 1 if s > 0 else -1
    a = abs(s)
    if a % 3:
        return None
    p = a // 3
    if p & (p - 1):
        return None
    n = p.bit_length() - 1
    hit = _shell_members(n).get(k if sign > 0 else -k)
    if hit is None:
        return None
    kind, perm, m = hit
    return Membership(sign=sign, shell=n, kind=kind, permutation=perm, generation=m)


def mirror_frequency(k: Frequency) -> Frequency:
    """M_σ k = k - (2/3)(σ·k)σ, the σ-mirror image of k."""
    s = k.sigma_dot
    if s % 3:
        raise LatticeError(f"mirror image of {k} is not an integer vector")
    t = 2 * (s // 3)
    return Frequency(k.x - t, k.y - t, k.z - t)


def vorticity_direction(k: Frequency) -> np.ndarray:
    """Unit vector along σ×k, the admissible vorticity direction at k."""
    c = np.array([k.z - k.y, k.x - k.z, k.y - k.x], dtype=float)
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise LatticeError(f"{k} is parallel to σ")
    return c / norm


# -------------------------
# Constraint directions
# -------------------------

@dataclass(frozen=True)
class ConstraintDirection:
    """w^k exactly, |w^k|² exactly, v^k = w^k/|w^k| in floating point."""
    frequency: Frequency
    unnormalized: Tuple[Fraction, Fraction, Fraction]
    norm_sq: Fraction
    direction: Tuple[float, float, float] = field(compare=False)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.direction)


def shell_norm_sq(n: int) -> int:
    """|k|² shared by every member of shell n."""
    return 3 * 4 ** n + 2 * 3 ** n


def direction_norm_sq(n: int) -> Fraction:
    """Closed form |w^k|² = 6·3^n/(3·4^n + 2·3^n) on shell n."""
    return Fraction(6 * 3 ** n, shell_norm_sq(n))


@lru_cache(maxsize=None)
def constraint_direction(k: Frequency) -> ConstraintDirection:
    """
    Projection of σ orthogonal to k.

    Args:
        k: Frequency in ℳ

    Returns:
        ConstraintDirection with exact and floating representations

    Raises:
        LatticeError: k is not in ℳ or lies in span(σ)
    """
    if k.x == k.y == k.z:
        raise LatticeError(f"{k} lies in span(σ); projection of σ is degenerate")
    membership = classify(k)
    if membership is None:
        raise LatticeError(f"{k} is not in the constraint lattice")

    t = Fraction(k.sigma_dot, k.norm_sq)
    w = tuple(Fraction(SIGMA[i]) - t * k.components[i] for i in range(3))
    norm_sq = sum(c * c for c in w)
    if norm_sq != direction_norm_sq(membership.shell):
        raise VerificationError(
            "constraint direction norm disagrees with the shell closed form",
            {"k": list(k.components), "norm_sq": str(norm_sq)},
        )
    scale = math.sqrt(norm_sq)
    direction = tuple(float(c) / scale for c in w)
    return ConstraintDirection(frequency=k, unnormalized=w, norm_sq=norm_sq, direction=direction)


# -------------------------
# Shell tables
# -------------------------

@dataclass(frozen=True)
class ShellTable:
    """Positive shells 0..N with directions laid out as (N+1, 6, 3) arrays."""
    N: int
    shells: Tuple[Tuple[Frequency, ...], ...]
    directions: np.ndarray = field(repr=False, compare=False)
    wavevectors: np.ndarray = field(repr=False, compare=False)
    index: Dict[Frequency, Tuple[int, int]] = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return 6 * (self.N + 1)

    def norm_sq(self) -> np.ndarray:
        """|k|² per shell as floats."""
        return np.array([float(shell_norm_sq(n)) for n in range(self.N + 1)])

    def flat_index(self, k: Frequency) -> int:
        n, pos = self.index[k]
        return 6 * n + pos

    def lookup(self, k: Frequency) -> Optional[Tuple[int, bool]]:
        """
        Locate k in ±ℳ_{≤N}.

        Returns:
            (flat index of the positive partner, whether k is the negative one) or None
        """
        if k in self.index:
            return self.flat_index(k), False
        neg = -k
        if neg in self.index:
            return self.flat_index(neg), True
        return None

    def frequencies(self) -> List[Frequency]:
        """Positive frequencies in flat order."""
        return [k for shell in self.shells for k in shell]


@lru_cache(maxsize=None)
def build_shell_table(N: int) -> ShellTable:
    """Shell table for shells 0..N (cached, immutable)."""
    if N < 0:
        raise ValueError(f"truncation must be >= 0, got {N}")
    shells = tuple(tuple(shell_frequencies(n)) for n in range(N + 1))
    directions = np.empty((N + 1, 6, 3))
    wavevectors = np.empty((N + 1, 6, 3))
    index: Dict[Frequency, Tuple[int, int]] = {}
    for n, members in enumerate(shells):
        if len(members) != 6:
            raise VerificationError(f"shell {n} has {len(members)} members", {"shell": n})
        for pos, k in enumerate(members):
            directions[n, pos] = constraint_direction(k).vector
            wavevectors[n, pos] = k.as_array()
            index[k] = (n, pos)
    directions.setflags(write=False)
    wavevectors.setflags(write=False)
    logger.debug("Shell table built", extra={"shells": N + 1})
    return ShellTable(N=N, shells=shells, directions=directions, wavevectors=wavevectors, index=index)


# -------------------------
# Sum/difference catalogue
# -------------------------

def _catalogue(kind: Kind, m: int) -> List[Tuple[str, Frequency, Frequency]]:
    """Listed decompositions q = a + b for the canonical q of (kind, m)."""
    k_m = _canonical(Kind.K, m)
    h_m = _canonical(Kind.H, m)
    j_m = _canonical(Kind.J, m)
    if kind == Kind.K:
        pairs = []
        if m >= 1:
            pairs.append(("eq1", _canonical(Kind.H, m - 1), _canonical(Kind.J, m - 1)))
        pairs.append(("eq4", h_m, -k_m.permute("P12")))
        pairs.append(("eq5", j_m, -k_m.permute("P23")))
        return pairs
    k_next = _canonical(Kind.K, m + 1)
    if kind == Kind.H:
        return [
            ("eq2", k_m, k_m.permute("P12")),
            ("eq6", k_next, -j_m),
            ("eq7", k_next.permute("P12"), -j_m.permute("P12")),
        ]
    return [
        ("eq3", k_m, k_m.permute("P23")),
        ("eq8", k_next, -h_m),
        ("eq9", k_next.permute("P23"), -h_m.permute("P23")),
    ]


def catalogue_label(a: Frequency, b: Frequency) -> Optional[str]:
    """
    Name the catalogued equation a + b conforms to, if any.

    The pair is rotated so that a + b becomes canonical; stabilizer images of
    the listed pairs are accepted after an exact match is ruled out.
    """
    q = a + b
    mq = classify(q)
    if mq is None:
        return None
    inv = inverse_permutation(mq.permutation)
    A = (a if mq.sign > 0 else -a).permute(inv)
    B = (b if mq.sign > 0 else -b).permute(inv)
    Q = _canonical(mq.kind, mq.generation)
    pair: FrozenSet[Frequency] = frozenset((A, B))
    listed = _catalogue(mq.kind, mq.generation)
    for label, x, y in listed:
        if pair == frozenset((x, y)):
            return label
    stabilizer = [name for name in PERMUTATIONS if name != "id" and Q.permute(name) == Q]
    for label, x, y in listed:
        for name in stabilizer:
            if pair == frozenset((x.permute(name), y.permute(name))):
                return label
    return None


def verify_lattice_identities(n_max: int, bits: Optional[int] = None) -> LatticeReport:
    """
    Exact check of the shell identities and the sum/difference closure.

    Args:
        n_max: Deepest shell to check
        bits: Integer capacity (defaults to settings)

    Returns:
        LatticeReport

    Raises:
        CapacityError: n_max beyond the exact capacity
        VerificationError: Any identity fails; carries the counterexample
    """
    bits = bits or get_settings().lattice_int_bits
    cap = max_exact_shell(bits)
    if n_max > cap:
        raise CapacityError(f"max shell {n_max} exceeds exact capacity {cap}", shell=n_max)
    logger.info("Lattice verification started", extra={"n_max": n_max, "bits": bits})

    conical: List[str] = []
    everything: List[Frequency] = []
    for n in range(n_max + 1):
        members = shell_frequencies(n)
        if len(set(members)) != 6:
            raise VerificationError(f"shell {n} does not have 6 distinct members", {"shell": n})
        dot_expected = 3 * 2 ** n
        norm_expected = shell_norm_sq(n)
        ratio_expected = 1 / (1 + Fraction(2, 3) * Fraction(3, 4) ** n)
        for k in members:
            if k.sigma_dot != dot_expected or k.norm_sq != norm_expected:
                raise VerificationError(
                    "shell identity failed",
                    {"k": list(k.components), "shell": n, "sigma_dot": k.sigma_dot, "norm_sq": k.norm_sq},
                )
            pos, neg = classify(k), classify(-k)
            if pos is None or pos.shell != n or pos.sign != 1 or neg is None or neg.sign != -1:
                raise VerificationError("classification mismatch", {"k": list(k.components), "shell": n})
            cd = constraint_direction(k)
            if k.dot(cd.unnormalized) != 0:
                raise VerificationError("k·w^k != 0", {"k": list(k.components)})
            for name in PERMUTATIONS:
                if constraint_direction(k.permute(name)).unnormalized != apply_permutation(name, cd.unnormalized):
                    raise VerificationError(
                        "constraint direction not permutation equivariant",
                        {"k": list(k.components), "permutation": name},
                    )
            if constraint_direction(-k).unnormalized != cd.unnormalized:
                raise VerificationError("v^{-k} != v^k", {"k": list(k.components)})
            if Fraction(k.sigma_dot ** 2, 3 * k.norm_sq) != ratio_expected:
                raise VerificationError("conical ratio mismatch", {"k": list(k.components), "shell": n})
        conical.append(str(ratio_expected))
        everything.extend(members)
        everything.extend(-k for k in members)

    for m in range((n_max + 1) // 2 + 1):
        k_m, h_m, j_m = (_canonical(kind, m) for kind in Kind)
        if 2 * m + 1 <= n_max:
            if h_m != k_m + k_m.permute("P12") or j_m != k_m + k_m.permute("P23"):
                raise VerificationError("h/j composition failed", {"m": m})
        if 2 * m + 2 <= n_max and _canonical(Kind.K, m + 1) != h_m + j_m:
            raise VerificationError("k^{m+1} != h^m + j^m", {"m": m})

    counts: Dict[str, int] = {f"eq{i}": 0 for i in range(1, 10)}
    pairs_examined = 0
    closure_pairs = 0
    for i, a in enumerate(everything):
        ma = classify(a)
        for b in everything[i:]:
            pairs_examined += 1
            q = a + b
            if classify(q) is None:
                continue
            closure_pairs += 1
            mb = classify(b)
            if abs(ma.shell - mb.shell) > 1:
                raise VerificationError(
                    "interaction outside shell adjacency",
                    {"a": list(a.components), "b": list(b.components), "q": list(q.components)},
                )
            label = catalogue_label(a, b)
            if label is None:
                raise VerificationError(
                    "sum not in the catalogue",
                    {"a": list(a.components), "b": list(b.components), "q": list(q.components)},
                )
            counts[label] += 1

    if n_max >= 2:
        missing = [label for label, c in counts.items() if c == 0]
        if missing:
            raise VerificationError("catalogued equations never realised", {"missing": missing})

    report = LatticeReport(
        max_shell=n_max,
        capacity_bits=bits,
        max_exact_shell=cap,
        frequencies_checked=len(everything),
        pairs_examined=pairs_examined,
        closure_pairs=closure_pairs,
        catalogue_counts=counts,
        conical_ratio_squares=conical,
        passed=True,
    )
    logger.info(
        "Lattice verification passed",
        extra={"n_max": n_max, "pairs": pairs_examined, "closure_pairs": closure_pairs},
    )
    return report
