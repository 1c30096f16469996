"""
Physical-space synthesis on the torus: velocity, gradient, strain and
vorticity by direct mode summation, the enstrophy identities and the
mollified vortex sheet.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from evolve import Trajectory
from field import SpectralField
from lattice import PERMUTATIONS, build_shell_table
from models import EnstrophyReport, EnstrophyRow, ModelKind

logger = logging.getLogger(__name__)

CHUNK = 4096


# -------------------------
# General fields
# -------------------------

@dataclass(frozen=True)
class GeneralSpectralField:
    """
    Divergence-free field on Z³ given by one representative k per ±k pair.

    û(-k) = conj(û(k)) is implied.
    """
    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.frequencies, dtype=np.int64).reshape(-1, 3)
        u = np.asarray(self.amplitudes, dtype=complex).reshape(-1, 3)
        if k.shape != u.shape:
            raise ValueError("frequencies and amplitudes differ in length")
        if np.any(np.all(k == 0, axis=1)):
            raise ValueError("fields are mean-free; k = 0 is not allowed")
        object.__setattr__(self, "frequencies", k)
        object.__setattr__(self, "amplitudes", u)

    @classmethod
    def from_spectral(cls, field: SpectralField) -> "GeneralSpectralField":
        table = field.table
        return cls(table.wavevectors.reshape(-1, 3).astype(np.int64), field.vectors().reshape(-1, 3))

    @property
    def modes(self) -> int:
        return int(self.frequencies.shape[0])

    @property
    def bandwidth(self) -> int:
        """max_i |k_i| over all stored modes."""
        return int(np.max(np.abs(self.frequencies))) if self.modes else 0

    def divergence(self) -> np.ndarray:
        """k·û(k) per mode."""
        return np.sum(self.frequencies * self.amplitudes, axis=1)

    def _k(self) -> np.ndarray:
        return self.frequencies.astype(float)

    def grad_sq(self, s: float = 0.0) -> float:
        """‖∇u‖²_{Ḣ^s}."""
        k2 = np.sum(self._k() ** 2, axis=1)
        w = (4.0 * math.pi ** 2 * k2) ** (1.0 + s)
        return float(2.0 * np.sum(w * np.sum(np.abs(self.amplitudes) ** 2, axis=1)))

    def vort_sq(self) -> float:
        """‖ω‖²."""
        w = 2.0 * math.pi * np.cross(self._k(), self.amplitudes)
        return float(2.0 * np.sum(np.abs(w) ** 2))

    def strain_sq(self, s: float = 0.0) -> float:
        """‖S‖²_{Ḣ^s}."""
        k = self._k()
        outer = k[:, :, None] * self.amplitudes[:, None, :]
        sym = outer + np.swapaxes(outer, 1, 2)
        k2 = np.sum(k ** 2, axis=1)
        w = (4.0 * math.pi ** 2 * k2) ** s
        return float(2.0 * math.pi ** 2 * np.sum(w * np.sum(np.abs(sym) ** 2, axis=(1, 2))))

    def helicity(self) -> float:
        """∫u·ω."""
        w = 2j * math.pi * np.cross(self._k(), self.amplitudes)
        return float(2.0 * np.real(np.sum(np.conj(self.amplitudes) * w)))


def as_general(field: Union[SpectralField, GeneralSpectralField]) -> GeneralSpectralField:
    if isinstance(field, GeneralSpectralField):
        return field
    return GeneralSpectralField.from_spectral(field)


# -------------------------
# Grid synthesis
# -------------------------

def evaluate_at(field: Union[SpectralField, GeneralSpectralField], points) -> Dict[str, np.ndarray]:
    """
    Velocity and gradient at arbitrary points by direct mode summation.

    Returns:
        {"u": (P, 3), "grad": (P, 3, 3)} with grad[:, i, j] = ∂_i u_j
    """
    g = as_general(field)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    k = g.frequencies.astype(float)
    u_out = np.zeros((x.shape[0], 3))
    grad_out = np.zeros((x.shape[0], 3, 3))
    for start in range(0, x.shape[0], CHUNK):
        xs = x[start:start + CHUNK]
        phase = np.exp(2j * math.pi * (xs @ k.T))
        u_out[start:start + CHUNK] = 2.0 * np.real(phase @ g.amplitudes)
        dk = 2j * math.pi * k[:, :, None] * g.amplitudes[:, None, :]
        grad_out[start:start + CHUNK] = 2.0 * np.real(np.einsum("pm,mij->pij", phase, dk))
    return {"u": u_out, "grad": grad_out}


def grid_points(M: int) -> np.ndarray:
    """(ℤ/M)³ mapped to [-½, ½)³, indexed as i*M² + j*M + l."""
    axis = np.arange(M) / M
    axis = np.where(axis >= 0.5, axis - 1.0, axis)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def strain_tensor(grad: np.ndarray) -> np.ndarray:
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def vorticity_from_gradient(grad: np.ndarray) -> np.ndarray:
    """ω = ∇×u from grad[..., i, j] = ∂_i u_j."""
    return np.stack([
        grad[..., 1, 2] - grad[..., 2, 1],
        grad[..., 2, 0] - grad[..., 0, 2],
        grad[..., 0, 1] - grad[..., 1, 0],
    ], axis=-1)


def det3(S: np.ndarray) -> np.ndarray:
    """Determinant of (..., 3, 3) arrays by the closed formula."""
    return (S[..., 0, 0] * (S[..., 1, 1] * S[..., 2, 2] - S[..., 1, 2] * S[..., 2, 1])
            - S[..., 0, 1] * (S[..., 1, 0] * S[..., 2, 2] - S[..., 1, 2] * S[..., 2, 0])
            + S[..., 0, 2] * (S[..., 1, 0] * S[..., 2, 1] - S[..., 1, 1] * S[..., 2, 0]))


def symmetric_eigenvalues(S: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric (..., 3, 3) matrices, ascending."""
    return np.linalg.eigvalsh(np.asarray(S, dtype=float))


@dataclass(frozen=True)
class GridField:
    """Samples of u and ∇u on the uniform M³ grid."""
    M: int
    points: np.ndarray
    u: np.ndarray
    grad: np.ndarray

    @property
    def strain(self) -> np.ndarray:
        return strain_tensor(self.grad)

    @property
    def vorticity(self) -> np.ndarray:
        return vorticity_from_gradient(self.grad)

    def index(self, i: int, j: int, l: int) -> int:
        return (i % self.M) * self.M ** 2 + (j % self.M) * self.M + (l % self.M)

    def det_strain(self) -> np.ndarray:
        return det3(self.strain)

    def eigenvalues(self) -> np.ndarray:
        return symmetric_eigenvalues(self.strain)


def synthesize(field: Union[SpectralField, GeneralSpectralField], M: int) -> GridField:
    """
    Evaluate a field on the M³ grid.

    Args:
        field: SpectralField or GeneralSpectralField
        M: Points per axis; M ≥ 2·bandwidth + 1 avoids aliasing
    """
    g = as_general(field)
    if M < 2 * g.bandwidth + 1:
        logger.warning("Grid coarser than the field bandwidth", extra={"M": M, "bandwidth": g.bandwidth})
    points = grid_points(M)
    samples = evaluate_at(g, points)
    return GridField(M=M, points=points, u=samples["u"], grad=samples["grad"])


def strain_spectrum(grid: GridField, point: Union[int, Sequence[int]]) -> np.ndarray:
    """
    Ordered strain eigenvalues λ1 ≤ λ2 ≤ λ3 at a grid point.

    Args:
        grid: GridField
        point: Flat index, or a triple of grid indices
    """
    idx = point if isinstance(point, (int, np.integer)) else grid.index(*point)
    return symmetric_eigenvalues(grid.strain[idx])


# -------------------------
# Enstrophy identities
# -------------------------

def _rate_spectral(field: SpectralField, rate: SpectralField) -> float:
    """d/dt‖S‖² = 2 Σ_{ℳ^+} 4π²|k|² Re(conj(c) c')."""
    k2 = field.table.norm_sq()
    return float(2.0 * np.sum(4.0 * math.pi ** 2 * k2[:, None]
                              * np.real(np.conj(field.amplitudes) * rate.amplitudes)))


def enstrophy_identities(traj: Trajectory, resolution: int, stride: int = 1) -> EnstrophyReport:
    """
    Check ‖∇u‖² = ‖ω‖² = 2‖S‖² and d/dt‖S‖² = -2ν‖S‖²_{Ḣ^α} - 4∫det S along a Galerkin run.

    ∫det S uses grid quadrature, exact once the grid resolves three times the
    field bandwidth; coarser grids are flagged under-resolved.

    Args:
        traj: Galerkin trajectory
        resolution: Grid points per axis
        stride: Use every stride-th sample
    """
    if not traj.is_galerkin:
        raise ValueError("enstrophy identities need a Galerkin trajectory")
    nu, alpha = traj.config.nu, traj.config.alpha
    N = traj.N
    bandwidth = int(np.max(np.abs(build_shell_table(N).wavevectors)))
    under = resolution <= 3 * bandwidth
    if under:
        logger.warning("Quadrature under-resolved", extra={"M": resolution, "bandwidth": bandwidth})
    points = grid_points(resolution)

    rows = []
    indices = list(range(0, traj.times.size, max(stride, 1)))
    for i in indices:
        u = SpectralField.from_flat(N, traj.states[i])
        du = SpectralField.from_flat(N, traj.derivatives[i])
        g = as_general(u)
        grad_sq, vort_sq, strain_sq = g.grad_sq(), g.vort_sq(), g.strain_sq()
        scale = max(grad_sq, 1e-300)
        isometry = max(abs(vort_sq - grad_sq), abs(2.0 * strain_sq - grad_sq)) / scale
        S = strain_tensor(evaluate_at(g, points)["grad"])
        det_integral = float(np.mean(det3(S)))
        lam2 = symmetric_eigenvalues(S)[:, 1]
        rate_spectral = _rate_spectral(u, du)
        rate_identity = -2.0 * nu * g.strain_sq(alpha) - 4.0 * det_integral
        denom = max(abs(rate_spectral), abs(rate_identity), 1e-300)
        residual = abs(rate_spectral - rate_identity) / denom if (rate_spectral or rate_identity) else 0.0
        rows.append(EnstrophyRow(
            t=float(traj.times[i]),
            grad_sq=grad_sq,
            vort_sq=vort_sq,
            strain_sq=strain_sq,
            isometry_residual=isometry,
            det_integral=det_integral,
            rate_spectral=rate_spectral,
            rate_identity=rate_identity,
            identity_residual=residual,
            lambda2_plus_sup=float(max(np.max(lam2), 0.0)),
            lambda2_plus_origin=float(max(lam2[0], 0.0)),
        ))

    report = EnstrophyReport(
        resolution=resolution,
        bandwidth=bandwidth,
        under_resolved=under,
        rows=rows,
        max_isometry_residual=max((r.isometry_residual for r in rows), default=0.0),
        max_identity_residual=max((r.identity_residual for r in rows), default=0.0),
    )
    if len(rows) >= 3:
        t = np.array([r.t for r in rows])
        s2 = np.array([r.strain_sq for r in rows])
        fd = np.gradient(s2, t)
        exact = np.array([r.rate_spectral for r in rows])
        report.max_fd_residual = float(np.max(np.abs(fd - exact)) / max(np.max(np.abs(exact)), 1e-300))
        if traj.config.model == ModelKind.EULER and s2[0] > 0.0:
            lam = np.array([r.lambda2_plus_sup for r in rows])
            bound = s2[0] * np.exp(2.0 * cumulative_trapezoid(lam, t, initial=0.0))
            report.lambda2_gronwall_ok = bool(np.all(s2 <= bound * (1.0 + 1e-6)))
    logger.info(
        "Enstrophy identities",
        extra={"samples": len(rows), "max_identity_residual": report.max_identity_residual,
               "under_resolved": under},
    )
    return report


# -------------------------
# Vortex sheet
# -------------------------

def bump(x: np.ndarray) -> np.ndarray:
    """Unnormalized even bump exp(-1/(1 - (4x)²)) supported in (-¼, ¼)."""
    x = np.asarray(x, dtype=float)
    y = 1.0 - (4.0 * x) ** 2
    out = np.zeros_like(x)
    inside = y > 0.0
    out[inside] = np.exp(-1.0 / y[inside])
    return out


@dataclass(frozen=True)
class VortexSheet:
    """Mollified sheet field with the quantities its closed forms use."""
    field: GeneralSpectralField
    epsilon: float
    truncation: int
    g0_over_epsilon: float

    def origin_det_expected(self) -> float:
        """-4 det S^ε(0) = 8(g(0)/ε - 1)³."""
        return 8.0 * (self.g0_over_epsilon - 1.0) ** 3

    def region_det_expected(self) -> float:
        """-4 det S^ε(0, ⅓, ⅓) = -2(g(0)/ε - 2)²."""
        return -2.0 * (self.g0_over_epsilon - 2.0) ** 2


def _next_pow2(n: float) -> int:
    return 1 << int(math.ceil(math.log2(max(n, 1.0))))


def mollifier_coefficients(epsilon: float, truncation: int,
                           profile: Callable[[np.ndarray], np.ndarray] = bump):
    """
    ĝ(εm) for m = 0..truncation and g(0)/ε under the same unit-mass normalization.

    The periodized g^ε(y) = g(y/ε)/ε is sampled on P points and transformed
    with rfft; the m = 0 coefficient fixes the mass.
    """
    P = _next_pow2(max(8 * truncation, 512.0 / epsilon, 4096))
    y = np.arange(P) / P
    y = np.where(y >= 0.5, y - 1.0, y)
    samples = profile(y / epsilon) / epsilon
    coeffs = np.fft.rfft(samples) / P
    mass = coeffs[0].real
    g_hat = coeffs[:truncation + 1].real / mass
    return g_hat, float(samples[0] / mass)


def vortex_sheet(epsilon: float, truncation: int,
                 profile: Callable[[np.ndarray], np.ndarray] = bump) -> VortexSheet:
    """
    Mollified vortex sheet on the coordinate axes.

    û(m e1) = (i/(2πm))(0,1,1) ĝ(εm), and its permutations on the e2 and e3
    axes with directions (1,0,1) and (1,1,0).

    Args:
        epsilon: Mollification width in (0, 1)
        truncation: Largest |m| kept
        profile: Even bump supported in [-¼, ¼]
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    g_hat, g0 = mollifier_coefficients(epsilon, truncation, profile)
    m = np.arange(1, truncation + 1)
    scale = 1j / (2.0 * math.pi * m) * g_hat[1:]
    freqs, amps = [], []
    for axis, direction in ((0, (0, 1, 1)), (1, (1, 0, 1)), (2, (1, 1, 0))):
        k = np.zeros((m.size, 3), dtype=np.int64)
        k[:, axis] = m
        freqs.append(k)
        amps.append(scale[:, None] * np.array(direction, dtype=float))
    field = GeneralSpectralField(np.concatenate(freqs), np.concatenate(amps))
    logger.info("Vortex sheet built", extra={"epsilon": epsilon, "truncation": truncation, "g0_over_eps": g0})
    return VortexSheet(field=field, epsilon=epsilon, truncation=truncation, g0_over_epsilon=g0)


def general_symmetry(field: GeneralSpectralField) -> Dict[str, float]:
    """
    Relative deviations from oddness, permutation symmetry and σ-mirror symmetry.

    A mode whose mirror image M_σ k is not an integer vector counts fully
    against σ-mirror symmetry.
    """
    lookup = {}
    for k, u in zip(map(tuple, field.frequencies), field.amplitudes):
        lookup[k] = u
        lookup[tuple(-c for c in k)] = np.conj(u)
    scale = max(float(np.max(np.abs(field.amplitudes))), 1e-300) if field.modes else 1.0

    def amp(k):
        return lookup.get(tuple(k), np.zeros(3, dtype=complex))

    odd = float(np.max(np.abs(field.amplitudes.real))) / scale if field.modes else 0.0
    perm = 0.0
    mirror = 0.0
    M_sigma = np.eye(3) - (2.0 / 3.0) * np.ones((3, 3))
    for k, u in zip(field.frequencies, field.amplitudes):
        for p in PERMUTATIONS.values():
            pk = k[list(p)]
            perm = max(perm, float(np.max(np.abs(amp(pk) - u[list(p)]))) / scale)
        s = int(np.sum(k))
        if s % 3:
            mirror = max(mirror, float(np.max(np.abs(u))) / scale)
            continue
        mk = k - 2 * (s // 3)
        mirror = max(mirror, float(np.max(np.abs(amp(mk) - M_sigma @ u))) / scale)
    return {"odd": odd, "permutation": perm, "sigma_mirror": mirror}
