import math
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings

ScenarioParam = Union[float, str, List[float], List[List[float]]]

# --- SIMULATION INPUTS ---

DisturbanceMode = Literal["zero", "envelope_constant", "envelope_random_hold", "sinusoid", "custom"]


class DisturbanceSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: DisturbanceMode = Field("zero", description="Disturbance realization.")
    scale: float = Field(1.0, ge=0.0, le=1.0, description="Fraction of the envelope gamma3(|x|) that is used.")
    hold_dt: Optional[float] = Field(None, gt=0.0, description="Redraw period of envelope_random_hold (defaults to dt).")
    freq: float = Field(1.0, gt=0.0, description="Frequency (Hz) of the sinusoid mode.")
    signal: Optional[str] = Field(None, description="Named corpus signal used by the custom mode.", examples=["zeno_adversary"])
    direction: Optional[List[float]] = Field(None, description="Fixed direction for envelope_constant/sinusoid (normalized).")

    @model_validator(mode="after")
    def _custom_needs_signal(self):
        if self.mode == "custom" and not self.signal:
            raise ValueError("custom disturbance mode requires 'signal'")
        if self.direction is not None and not any(self.direction):
            raise ValueError("direction must be a non-zero vector")
        return self


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t_end: float = Field(..., ge=0.0, description="Simulation horizon (s).")
    dt: float = Field(default_factory=lambda: settings.DEFAULT_DT, gt=0.0, description="Base RK4 step (s).")
    event_tol: float = Field(default_factory=lambda: settings.DEFAULT_EVENT_TOL, gt=0.0,
                             description="Crossing localization tolerance (s).")
    x0: List[float] = Field(..., min_length=1, description="Initial state.")
    disturbance: DisturbanceSpec = Field(default_factory=DisturbanceSpec)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, lt=2 ** 64)
    epsilon: Optional[float] = Field(None, gt=0.0, description="Radius of the admissible initial-condition set.")

    @model_validator(mode="after")
    def _check_tolerances(self):
        if self.event_tol > self.dt:
            raise ValueError(f"event_tol ({self.event_tol}) must not exceed dt ({self.dt})")
        return self


RuleVariant = Literal["static", "continuous", "discrete", "tabuada"]


class RuleSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: RuleVariant = Field("static", description="Triggering rule variant.")
    kappa: Optional[float] = Field(None, gt=0.0)
    zeta: Optional[float] = Field(None, gt=0.0)
    kappa_hat: Optional[float] = Field(None, gt=0.0)
    theta: Optional[float] = Field(None, gt=0.0)
    delta: Optional[float] = Field(None, gt=0.0)
    c: Optional[float] = Field(None, gt=0.0, lt=1.0, description="Baseline rule constant (defaults to the certificate c).")

    @model_validator(mode="after")
    def _check_variant_fields(self):
        if self.variant == "continuous" and (self.kappa is None) != (self.zeta is None):
            raise ValueError("continuous rule needs both kappa and zeta (or neither, to use scenario defaults)")
        if self.variant == "discrete" and self.delta is not None and not math.isfinite(self.delta):
            raise ValueError("discrete rule needs a finite delta")
        return self


class MonteCarloSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_ic: int = Field(default_factory=lambda: settings.DEFAULT_N_IC, ge=1)
    ic_distribution: Optional[Literal["uniform_ball", "uniform_interval"]] = Field(
        None, description="Initial-condition law; the scenario's own when unset.")
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, lt=2 ** 64)


class ChecksSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gain: bool = True
    residual: bool = True
    invariance: bool = False
    admissibility: bool = False
    convergence: bool = False
    separation: bool = False
    gain_tolerance: float = Field(default_factory=lambda: settings.GAIN_TOLERANCE, ge=0.0)
    residual_tolerance: float = Field(default_factory=lambda: settings.RESIDUAL_TOLERANCE, ge=0.0)
    table_tolerance: float = Field(0.5, ge=0.0, description="Relative tolerance against published table values.")


class PolynomialTerm(BaseModel):
    """coef * prod_j x_j^powers[j] * (u[u_index] if set) * (w[w_index] if set)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    coef: float
    powers: List[int] = Field(default_factory=list)
    u_index: Optional[int] = Field(None, ge=0)
    w_index: Optional[int] = Field(None, ge=0)


class PowerLaw(BaseModel):
    """Class-K map a * r^p."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(..., gt=0.0)
    p: float = Field(1.0, gt=0.0)


class InlinePlant(BaseModel):
    """Polynomial plant with linear state feedback and power-law certificates."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "inline"
    dynamics: List[List[PolynomialTerm]] = Field(..., min_length=1, description="One term list per state equation.")
    K: List[List[float]] = Field(..., description="Feedback gain, u = -K x.")
    output: List[int] = Field(..., min_length=1, description="State indices forming z.")
    q: int = Field(1, ge=1)
    P: List[List[float]] = Field(..., description="V(x) = x^T P x / 2.")
    lam: float = Field(..., gt=0.0, description="W = lam * V.")
    sigma_bar: PowerLaw
    sigma1: PowerLaw
    sigma2: PowerLaw
    sigma3: PowerLaw
    beta1: PowerLaw
    gamma3: PowerLaw
    l2_gain: float = Field(..., gt=0.0)
    c: float = Field(..., gt=0.0, lt=1.0)
    c_bar: float = Field(..., gt=0.0, lt=1.0)
    storage_scale: float = Field(1.0, gt=0.0)
    L_f: float = Field(..., gt=0.0)
    L_k: float = Field(..., gt=0.0)
    epsilon: float = Field(1.0, gt=0.0)
    w_cap: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _check_shapes(self):
        n = len(self.dynamics)
        if len(self.P) != n or any(len(row) != n for row in self.P):
            raise ValueError(f"P must be {n}x{n}")
        if any(len(row) != n for row in self.K):
            raise ValueError(f"K must have {n} columns")
        for eq in self.dynamics:
            for term in eq:
                if term.powers and len(term.powers) != n:
                    raise ValueError(f"term powers must list {n} exponents")
        return self


class ScenarioFile(BaseModel):
    """Top-level scenario configuration file (TOML)."""

    scenario: str = Field(..., description="Corpus scenario name, or 'inline' with an [inline] table.",
                          examples=["example1"])
    params: Dict[str, ScenarioParam] = Field(default_factory=dict, description="Constructor overrides (e.g. lam, p, h_kind).")
    inline: Optional[InlinePlant] = None
    rule: RuleSpec = Field(default_factory=RuleSpec)
    sim: Dict[str, object] = Field(default_factory=dict, description="SimConfig overrides.")
    outputs: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    monte_carlo: MonteCarloSpec = Field(default_factory=MonteCarloSpec)
    checks: ChecksSpec = Field(default_factory=ChecksSpec)

    @model_validator(mode="after")
    def _inline_consistency(self):
        if self.scenario == "inline" and self.inline is None:
            raise ValueError("scenario 'inline' requires an [inline] table")
        return self

    model_config = {
        "frozen": True,
        "extra": "forbid",
        "json_schema_extra": {
            "example": {
                "scenario": "example1",
                "rule": {"variant": "static"},
                "sim": {"t_end": 10.0, "x0": [1.0], "disturbance": {"mode": "envelope_random_hold"}},
                "outputs": "outputs/example1_static",
                "checks": {"gain": True, "residual": True, "invariance": True},
            }
        },
    }


# --- DESIGN INPUTS / OUTPUTS ---

class DesignInputs(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    L_f: float = Field(..., gt=0.0, description="Lipschitz constant of f.")
    L_fu: Optional[float] = Field(None, gt=0.0, description="Lipschitz constant of f in u alone; defaults to L_f.")
    L_k: float = Field(..., gt=0.0, description="Lipschitz constant of the controller.")
    L_gamma3: float = Field(..., gt=0.0, description="Lipschitz constant of the disturbance envelope.")
    L_sigma3: float = Field(..., ge=0.0, description="Lipschitz constant of sigma3.")
    L_sigmabar_inv: float = Field(..., gt=0.0, description="Lipschitz constant of sigma_bar^-1 on [0, sigma_bar(eps_bar)].")
    L_beta1: float = Field(..., gt=0.0, description="Lipschitz constant of beta1.")
    eps_bar: float = Field(..., gt=0.0, description="Invariant-set radius.")
    c: float = Field(..., gt=0.0, lt=1.0)
    sigma0_eps: float = Field(0.0, ge=0.0, description="sigma0(eps_bar).")
    sigmabar_eps: float = Field(..., gt=0.0, description="sigma_bar(eps_bar).")
    T_bar: float = Field(10.0, gt=0.0, description="Horizon of the continuous design (s).")
    tau_star: float = Field(..., gt=0.0, description="Requested increase of the inter-event bound (s).")
    f_cr: float = Field(..., gt=0.0, description="Critical average triggering frequency (Hz).")
    N: int = Field(1, ge=1, description="Iteration horizon of the discrete design.")
    zeta: float = Field(1.0, gt=0.0)
    theta: float = Field(1.0, gt=0.0)
    delta: Optional[float] = Field(None, gt=0.0, description="Forced-deadline period of the discrete rule.")
    L_bar: Optional[float] = Field(None, gt=0.0, description="Lipschitz constant of psi^-1(beta1_bar/c); defaults to L_hat.")

    @model_validator(mode="after")
    def _check_frequency(self):
        if self.tau_star <= 1.0 / self.f_cr:
            raise ValueError(f"tau_star ({self.tau_star}) must exceed 1/f_cr ({1.0 / self.f_cr:.6g})")
        return self


class DesignRequest(BaseModel):
    inputs: DesignInputs
    mode: Literal["continuous", "discrete", "both"] = "both"


class DesignFile(BaseModel):
    """Design configuration: explicit [inputs], or a corpus scenario's fixture with [overrides]."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Optional[str] = Field(None, examples=["example1"])
    params: Dict[str, ScenarioParam] = Field(default_factory=dict)
    inputs: Optional[DesignInputs] = None
    overrides: Dict[str, float] = Field(default_factory=dict, description="DesignInputs fields replacing fixture values.")
    mode: Literal["continuous", "discrete", "both"] = "both"
    outputs: str = Field(default_factory=lambda: settings.OUTPUT_DIR)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.scenario is None) == (self.inputs is None):
            raise ValueError("give exactly one of 'scenario' or an [inputs] table")
        if self.inputs is not None and self.overrides:
            raise ValueError("'overrides' only applies to scenario fixtures")
        return self


class DesignReportModel(BaseModel):
    L: float
    L_psi_inv: float
    L_hat: float
    L_bar: float
    L_star: float
    tau: float = Field(..., description="Static inter-event lower bound (s).")
    tau1: Optional[float] = Field(None, description="Continuous-design bound on [0, T_bar] (s).")
    tau2: Optional[float] = Field(None, description="Discrete-design bound for the first N events (s).")
    kappa: Optional[float] = None
    kappa_hat: Optional[float] = None
    N_theta: int
    discrete_case: Optional[int] = None
    valid: bool
    notes: List[str] = Field(default_factory=list)


# --- API SCHEMAS ---

class SimulationRequest(BaseModel):
    scenario: str = Field(..., description="Corpus scenario name.", examples=["example1"])
    rule: RuleSpec = Field(default_factory=RuleSpec)
    params: Dict[str, ScenarioParam] = Field(default_factory=dict)
    t_end: float = Field(10.0, gt=0.0, le=200.0)
    dt: Optional[float] = Field(None, gt=0.0)
    x0: Optional[List[float]] = None
    disturbance: Optional[DisturbanceSpec] = None
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)

    model_config = {
        "json_schema_extra": {
            "example": {
                "scenario": "example1",
                "rule": {"variant": "continuous"},
                "t_end": 10.0,
                "x0": [1.0],
                "disturbance": {"mode": "envelope_random_hold"},
                "seed": 7,
            }
        }
    }


class SimulationSummary(BaseModel):
    scenario: str
    rule: str
    event_count: int = Field(..., ge=1)
    min_gap: Optional[float] = Field(None, description="Minimum inter-event time (s); None with a single event.")
    mean_gap: Optional[float] = None
    first_events: List[float]
    gain_pass: bool
    gain_margin: float = Field(..., description="min over T of bound - ratio (positive means slack).")
    max_residual: float
    invariant_pass: bool
    latency_ms: float = Field(..., description="Wall-clock simulation time in milliseconds.")


class ScenarioInfo(BaseModel):
    name: str
    rules: List[str]
    epsilon: float
    eps_bar: float
    Q: Optional[float] = Field(None, description="Disturbance admissibility bound; None when unbounded.")
    published_Q: Optional[float] = None
    l2_gain: float
