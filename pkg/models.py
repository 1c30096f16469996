"""
Pydantic models for run configuration, verification reports and diagnostics,
plus the exception hierarchy shared by every module.
"""
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import get_settings


class ModelKind(str, Enum):
    """Which evolution equation a run integrates."""
    EULER = "euler"
    HYPO = "hypo"


class Termination(str, Enum):
    """Why a trajectory stopped."""
    REACHED_T_END = "reached_t_end"
    BLOWUP_DETECTED = "blowup_detected"
    DT_UNDERFLOW = "dt_underflow"
    STEP_BUDGET = "step_budget"


# -------------------------
# Errors
# -------------------------

class LabError(Exception):
    """Base class for laboratory errors."""


class LatticeError(LabError):
    """Frequency outside the constraint lattice, or a degenerate projection."""


class CapacityError(LatticeError):
    """Exact lattice arithmetic would exceed the configured integer capacity."""

    def __init__(self, message: str, shell: Optional[int] = None):
        super().__init__(message)
        self.shell = shell


class SymmetryViolation(LabError):
    """A field fails a required symmetry beyond tolerance."""

    def __init__(self, message: str, shell: int, deviation: float):
        super().__init__(message)
        self.shell = shell
        self.deviation = deviation


class VerificationError(LabError):
    """An identity or inequality checked by a verification suite failed."""

    def __init__(self, message: str, counterexample: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.counterexample = counterexample or {}


class ParameterRangeError(LabError, ValueError):
    """Parameters violate an admissibility inequality."""

    def __init__(self, message: str, inequality: str = ""):
        super().__init__(message)
        self.inequality = inequality


# -------------------------
# Run Configuration
# -------------------------

class SimConfig(BaseModel):
    """Configuration of a single trajectory."""
    model: ModelKind = Field(default=ModelKind.EULER, description="Evolution equation")
    alpha: float = Field(default=0.0, ge=0.0, description="Dissipation exponent of (-Δ)^α")
    nu: float = Field(default=0.0, ge=0.0, description="Viscosity")
    shells: int = Field(..., ge=0, description="Truncation shell N")
    t_end: float = Field(..., gt=0.0, description="Final time")
    rtol: float = Field(default_factory=lambda: get_settings().default_rtol, gt=0.0)
    atol: float = Field(default_factory=lambda: get_settings().default_atol, gt=0.0)
    dt_min: Optional[float] = Field(default=None, gt=0.0, description="Smallest accepted step")
    max_steps: int = Field(default_factory=lambda: get_settings().max_steps, gt=0)
    blowup_threshold: float = Field(
        default_factory=lambda: get_settings().blowup_threshold,
        gt=0.0,
        description="Stop once ‖ψ‖_H1 (or the critical Sobolev norm of a field) exceeds this"
    )
    gamma: float = Field(
        default_factory=lambda: get_settings().default_gamma,
        gt=0.0,
        description="Lyapunov exponent used for the H_γ column"
    )

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_model_parameters(self):
        """Euler runs carry no viscosity; hypodissipative runs need ν > 0."""
        if self.model == ModelKind.EULER and self.nu != 0.0:
            raise ValueError("euler runs must have nu = 0")
        if self.model == ModelKind.HYPO and self.nu <= 0.0:
            raise ValueError("hypo runs need nu > 0")
        return self

    @property
    def is_hypo(self) -> bool:
        return self.model == ModelKind.HYPO

    def effective_dt_min(self) -> float:
        """Smallest step the integrator may accept."""
        if self.dt_min is not None:
            return self.dt_min
        return get_settings().dt_min_factor * max(self.t_end, 1.0)


# -------------------------
# Verification Reports
# -------------------------

class LatticeReport(BaseModel):
    """Outcome of the exact lattice identity suite."""
    max_shell: int
    capacity_bits: int
    max_exact_shell: int = Field(..., description="Deepest shell representable within capacity")
    frequencies_checked: int
    pairs_examined: int
    closure_pairs: int
    catalogue_counts: Dict[str, int] = Field(default_factory=dict)
    conical_ratio_squares: List[str] = Field(
        default_factory=list,
        description="Exact (σ·k)²/(|σ|²|k|²) per shell as fractions"
    )
    passed: bool = True


class InteractionCase(BaseModel):
    """One catalogued interaction at one generation."""
    m: int
    case: int = Field(..., ge=1, le=9)
    target: List[int]
    expected: float
    observed: float
    deviation: float
    support_ok: bool
    exact_square_ok: bool


class InteractionReport(BaseModel):
    """Outcome of the interaction oracle."""
    m_max: int
    tol: float
    cases: List[InteractionCase] = Field(default_factory=list)
    passed: bool = True


class BilinearEstimate(BaseModel):
    """Empirical ratio ‖B(u,w)‖ / (‖u‖‖w‖) over random fields."""
    s: float
    shells: int
    samples: int
    seed: Optional[int] = None
    max_ratio: float
    mean_ratio: float
    skipped: int = 0


class SymmetryFlags(BaseModel):
    """Symmetry classification of a spectral field."""
    odd: bool
    permutation_symmetric: bool
    hj_parity: bool
    sigma_mirror: bool
    coefficient_positive: bool
    deviations: Dict[str, float] = Field(default_factory=dict)


# -------------------------
# Diagnostics Reports
# -------------------------

class BlowupReport(BaseModel):
    """Least-squares fit of a norm to C (T - t)^(-p)."""
    detected: bool
    T_est: Optional[float] = None
    rate_exponent: Optional[float] = None
    bound_T_star: Optional[float] = None
    log_decades: float = 0.0
    fit_points: int = 0
    message: str = ""


class BlowupBound(BaseModel):
    """Analytic upper bound on the Euler blowup time."""
    kappa: float = Field(..., gt=0.0)
    r_star: float
    f_min: float
    T_star: float
    E0: float
    l2_norm: float

    @field_validator("r_star")
    @classmethod
    def validate_r_star(cls, v):
        """r_star lies strictly inside (1/3, √2/(√2+3/2))."""
        upper = 2 ** 0.5 / (2 ** 0.5 + 1.5)
        if not (1.0 / 3.0 < v < upper):
            raise ValueError(f"r_star={v} outside (1/3, {upper})")
        return v


class LadderRow(BaseModel):
    n: int
    T_predicted: float
    t_observed: Optional[float] = None
    E_at_T_predicted: Optional[float] = None
    reliable: bool = True
    holds: Optional[bool] = None


class LadderReport(BaseModel):
    """Predicted vs observed energy-transfer times."""
    r: float
    E0: float
    T_limit: float
    saturation_time: Optional[float] = None
    rows: List[LadderRow] = Field(default_factory=list)
    passed: bool = True


class LyapunovCriterion(BaseModel):
    """Blowup criterion for the hypodissipative reduced system."""
    gamma: float
    alpha_tilde: float
    nu: float
    epsilon: float
    r: float
    H0: float
    kappa: float
    dissipation_constant: float
    threshold: float = Field(..., description="C̃² ν², compared against H_γ(0)")
    qualifies: bool
    T_bound: Optional[float] = None


class RegularityReport(BaseModel):
    """Regularity functionals and Gronwall checks along a trajectory."""
    sup_weighted: float
    h1_norm: float
    max_gronwall_residual: Optional[float] = None
    max_lambda_gronwall_residual: Optional[float] = None
    max_rate_excess: Optional[float] = None


class EnstrophyRow(BaseModel):
    t: float
    grad_sq: float
    vort_sq: float
    strain_sq: float
    isometry_residual: float
    det_integral: float
    rate_spectral: float
    rate_identity: float
    identity_residual: float
    lambda2_plus_sup: float
    lambda2_plus_origin: float


class EnstrophyReport(BaseModel):
    """Per-sample enstrophy identity residuals."""
    resolution: int
    bandwidth: int
    under_resolved: bool
    rows: List[EnstrophyRow] = Field(default_factory=list)
    max_isometry_residual: float = 0.0
    max_identity_residual: float = 0.0
    max_fd_residual: Optional[float] = None
    lambda2_gronwall_ok: Optional[bool] = None


class RunManifest(BaseModel):
    """Everything needed to reproduce an output file."""
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    versions: Dict[str, str] = Field(default_factory=dict)
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    finished_at: Optional[datetime] = None
    outputs: List[str] = Field(default_factory=list)

    def finish(self):
        """Stamp the completion time."""
        self.finished_at = datetime.now(timezone.utc)
