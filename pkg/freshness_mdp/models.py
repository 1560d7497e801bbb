"""
Pydantic models for the freshness_mdp package.

Every configuration, parameter set and result that crosses a module
boundary is an immutable model defined here.
"""
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

PROB_TOL = 1e-12
SIGN_TOL = 1e-9


def _open_unit(name: str, value: float) -> float:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must satisfy 0 < {name} < 1")
    return value


class SolverConfig(BaseModel):
    """Settings for relative value iteration and exact evaluation."""
    eps_v: float = Field(default=0.1, gt=0)
    max_iterations: int = Field(default=100_000, ge=1)
    ref_state: int = Field(default=0, ge=0)
    tie_tolerance: float = Field(default=1e-9, ge=0)
    # self-loop weight of the lazy chain RVIA iterates on; 0 iterates on P itself
    aperiodicity: float = Field(default=0.5, ge=0, lt=1)

    model_config = ConfigDict(frozen=True)


class SolveResult(BaseModel):
    """Average cost, differential values and policy of a solved MDP."""
    J: float
    V: np.ndarray
    policy: np.ndarray
    n_iterations: int
    residual_span: float

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class AoiiParams(BaseModel):
    """Source chain and channel of the single-rate AoII problem.

    Use ``aoii.derive_chain_params`` to build one from (N, p_R, p_s).
    """
    N: int = Field(ge=2)
    p_R: float
    p_t: float
    p_s: float
    p_f: float
    beta: float
    delta_max: int = Field(ge=1)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_chain(self) -> "AoiiParams":
        for name in ("p_R", "p_t", "p_s", "p_f", "beta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if abs(self.p_R + (self.N - 1) * self.p_t - 1.0) > PROB_TOL:
            raise ValueError("p_R + (N-1)*p_t must equal 1")
        if abs(self.p_s + self.p_f - 1.0) > PROB_TOL:
            raise ValueError("p_f must equal 1 - p_s")
        if not self.p_R > self.p_t:
            raise ValueError("p_R must be strictly greater than p_t")
        if abs(self.beta - (self.p_R * self.p_s + self.p_f * self.p_t)) > PROB_TOL:
            raise ValueError("beta must equal p_R*p_s + p_f*p_t")
        if not self.beta > self.p_t:
            raise ValueError("beta must be strictly greater than p_t")
        return self


class TokenParams(BaseModel):
    """Token arrival rate (the rate budget) and bucket cap."""
    alpha: float
    b_max: int = Field(ge=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: float) -> float:
        return _open_unit("alpha", v)


class TwoRateParams(BaseModel):
    """Request process and the two rate caps of the two-rate AoI problem."""
    q: float
    alpha_min: float
    alpha_max: float
    delta_max: int = Field(default=20, ge=1)
    b_max: int = Field(default=5, ge=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("q", "alpha_min", "alpha_max")
    @classmethod
    def _unit_range(cls, v: float, info: Any) -> float:
        return _open_unit(info.field_name, v)

    @model_validator(mode="after")
    def _ordered_caps(self) -> "TwoRateParams":
        if self.alpha_min > self.alpha_max:
            raise ValueError("alpha_min must not exceed alpha_max")
        return self

    @computed_field  # type: ignore[misc]
    @property
    def alpha0(self) -> float:
        return (1.0 - self.q) * self.alpha_min

    @computed_field  # type: ignore[misc]
    @property
    def alpha1(self) -> float:
        return self.q * self.alpha_max


class ConstraintEval(BaseModel):
    """Signed constraint slacks of a policy (positive means violated)."""
    c0: float
    c1: float = 0.0

    model_config = ConfigDict(frozen=True)

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1])

    def sign_pattern(self, tol: float = SIGN_TOL) -> Tuple[bool, bool]:
        """Whether each slack counts as nonnegative; values within tol of 0 count as both."""
        return (self.c0 >= -tol, self.c1 >= -tol)

    def matches(self, pattern: str, tol: float = SIGN_TOL) -> bool:
        """Check a pattern such as ``"+-"`` against the slacks."""
        for sign, value in zip(pattern, (self.c0, self.c1)):
            if sign == "+" and value < -tol:
                return False
            if sign == "-" and value > tol:
                return False
        return True


class LagrangeVec(BaseModel):
    """Pair of nonnegative Lagrange multipliers."""
    lambda0: float = Field(ge=0)
    lambda1: float = Field(ge=0)

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_array(cls, values: Union[np.ndarray, List[float], Tuple[float, float]]) -> "LagrangeVec":
        # tiny negatives come from midpoint/centroid arithmetic at the axes
        return cls(lambda0=max(float(values[0]), 0.0), lambda1=max(float(values[1]), 0.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda0, self.lambda1])

    def key(self) -> Tuple[float, float]:
        return (round(self.lambda0, 12), round(self.lambda1, 12))


class LambdaTriangle(BaseModel):
    """Triangle in multiplier space, vertices in order (A, B, C)."""
    a: LagrangeVec
    b: LagrangeVec
    c: LagrangeVec

    model_config = ConfigDict(frozen=True)

    @property
    def vertices(self) -> Tuple[LagrangeVec, LagrangeVec, LagrangeVec]:
        return (self.a, self.b, self.c)

    def area(self) -> float:
        pa, pb, pc = (v.as_array() for v in self.vertices)
        u, w = pb - pa, pc - pa
        return 0.5 * abs(float(u[0] * w[1] - u[1] * w[0]))

    def centroid(self) -> np.ndarray:
        return sum(v.as_array() for v in self.vertices) / 3.0

    def longest_edge_first(self) -> "LambdaTriangle":
        """Rotate the vertices so that edge AB is the longest one."""
        verts = self.vertices
        lengths = [
            float(np.linalg.norm(verts[(i + 1) % 3].as_array() - verts[i].as_array()))
            for i in range(3)
        ]
        start = int(np.argmax(lengths))
        return LambdaTriangle(
            a=verts[start], b=verts[(start + 1) % 3], c=verts[(start + 2) % 3]
        )


class SearchConfig(BaseModel):
    """Settings for the multiplier searches."""
    eps_lambda: float = Field(default=0.1, gt=0)
    gamma: float = Field(default=0.1, gt=0)
    max_outer: int = Field(default=200, ge=1)
    lambda_bar: Optional[float] = Field(default=None, gt=0)
    n_scales: int = Field(default=12, ge=0)
    max_scalings: int = Field(default=200, ge=1)

    model_config = ConfigDict(frozen=True)


class MixedPolicy(BaseModel):
    """Randomization over four deterministic policies, drawn once at time 0.

    Policies are ordered (++, +-, -+, --) by the signs of their slacks.
    """
    policies: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    rho0: float = Field(ge=0, le=1)
    rho1: float = Field(ge=0, le=1)
    lambdas: Optional[Tuple[LagrangeVec, LagrangeVec, LagrangeVec, LagrangeVec]] = None
    constraints: Optional[
        Tuple[ConstraintEval, ConstraintEval, ConstraintEval, ConstraintEval]
    ] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _same_length(self) -> "MixedPolicy":
        sizes = {len(p) for p in self.policies}
        if len(sizes) != 1:
            raise ValueError("all component policies must cover the same states")
        return self

    @property
    def weights(self) -> np.ndarray:
        r0, r1 = self.rho0, self.rho1
        return np.array([r0 * r1, r0 * (1 - r1), (1 - r0) * r1, (1 - r0) * (1 - r1)])

    @property
    def n_states(self) -> int:
        return len(self.policies[0])

    @classmethod
    def two_policy(
        cls,
        plus: np.ndarray,
        minus: np.ndarray,
        mu: float,
        constraints: Optional[Tuple[ConstraintEval, ConstraintEval]] = None,
    ) -> "MixedPolicy":
        """Mixture of ``plus`` with probability ``mu`` and ``minus`` otherwise."""
        evals = None
        if constraints is not None:
            evals = (constraints[0], constraints[0], constraints[1], constraints[1])
        return cls(
            policies=(plus, plus, minus, minus), rho0=mu, rho1=1.0, constraints=evals
        )


class BaselineKind(str, Enum):
    """Reference decision rules without an optimization behind them."""
    UNIFORM_TWO_RATE = "uniform"
    RANDOM_TWO_RATE = "random"
    NEVER_UPDATE = "never"
    GREEDY_TOKEN = "greedy"


class SimConfig(BaseModel):
    """Monte Carlo protocol settings."""
    horizon_T: int = Field(default=20_000, ge=1)
    n_runs: int = Field(default=400, ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    burn_in: int = Field(default=0, ge=0)
    trace_runs: int = Field(default=0, ge=0)
    chunk_size: int = Field(default=1000, ge=1)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _burn_in_fits(self) -> "SimConfig":
        if self.burn_in >= self.horizon_T:
            raise ValueError("burn_in must be smaller than horizon_T")
        return self


class SimResult(BaseModel):
    """Run-averaged Monte Carlo estimates."""
    avg_cost: float
    rate0: float
    rate1: float
    total_rate: float
    stderr_cost: float
    stderr_rate0: float
    stderr_rate1: float
    n_runs: int
    horizon_T: int
    trace: List[Tuple[int, ...]] = Field(default_factory=list, exclude=True, repr=False)

    model_config = ConfigDict(frozen=True)


class ThresholdProfile(BaseModel):
    """Per-context update thresholds; delta_max + 1 means never update."""
    thresholds: Dict[Any, int]

    model_config = ConfigDict(frozen=True)


class NotThreshold(BaseModel):
    """Witness that a policy updates at a lower age but idles at a higher one."""
    context: Any
    delta_update: int
    delta_idle: int

    model_config = ConfigDict(frozen=True)


Family = Literal[
    "aoii-sweep-alpha",
    "aoii-sweep-pr",
    "aoi2-sweep-q",
    "aoi2-sweep-alphamax",
    "aoi2-gap-bmax",
    "solve",
    "simulate",
]

SWEPT_FIELD: Dict[str, str] = {
    "aoii-sweep-alpha": "alpha",
    "aoii-sweep-pr": "p_R",
    "aoi2-sweep-q": "q",
    "aoi2-sweep-alphamax": "alpha_max",
    "aoi2-gap-bmax": "q",
}

AOII_FAMILIES = ("aoii-sweep-alpha", "aoii-sweep-pr")
TWO_RATE_FAMILIES = ("aoi2-sweep-q", "aoi2-sweep-alphamax", "aoi2-gap-bmax")
METHODS = ("token", "cmdp", "uniform", "random", "never", "greedy")


class ExperimentSpec(BaseModel):
    """Fully resolved description of one CLI run."""
    family: Family
    model: Optional[Literal["aoii", "two-rate"]] = None
    methods: List[str] = Field(default_factory=list)
    N: int = Field(default=8, ge=2)
    p_R: Optional[float] = None
    p_s: float = 1.0
    alpha: Optional[float] = None
    q: Optional[float] = None
    alpha_min: float = 0.1
    alpha_max: Optional[float] = None
    delta_max: Optional[int] = Field(default=None, ge=1)
    b_max: List[int] = Field(default_factory=list)
    grid: List[float] = Field(default_factory=list)
    eps_v: float = Field(default=0.1, gt=0)
    eps_lambda: float = Field(default=0.1, gt=0)
    gamma: float = Field(default=0.1, gt=0)
    max_iterations: int = Field(default=100_000, ge=1)
    max_outer: int = Field(default=200, ge=1)
    horizon_T: int = Field(default=20_000, ge=1)
    n_runs: int = Field(default=400, ge=1)
    seed: int = Field(default=0, ge=0)
    burn_in: int = Field(default=0, ge=0)
    out: Optional[str] = None
    trace_out: Optional[str] = None
    workers: int = Field(default=1, ge=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("q", "alpha", "alpha_min", "alpha_max", "p_R")
    @classmethod
    def _unit_range(cls, v: Optional[float], info: Any) -> Optional[float]:
        if v is None:
            return v
        return _open_unit(info.field_name, v)

    @field_validator("p_s")
    @classmethod
    def _success_range(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("p_s must satisfy 0 < p_s <= 1")
        return v

    @field_validator("b_max")
    @classmethod
    def _positive_caps(cls, v: List[int]) -> List[int]:
        if any(b < 1 for b in v):
            raise ValueError("every bmax must be >= 1")
        return v

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, v: List[str]) -> List[str]:
        unknown = [m for m in v if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; expected one of {list(METHODS)}")
        return v

    @model_validator(mode="after")
    def _family_requirements(self) -> "ExperimentSpec":
        swept = SWEPT_FIELD.get(self.family)
        if swept is not None:
            if not self.grid:
                raise ValueError(f"grid for {swept} must be nonempty")
            for value in self.grid:
                _open_unit(swept, value)
        if self.model_kind == "aoii":
            required = ["p_R", "alpha"]
        else:
            required = ["q", "alpha_max"]
        for name in required:
            if name != swept and getattr(self, name) is None:
                raise ValueError(f"{name} is required for family {self.family}")
        if self.family in ("solve", "simulate") and self.model is None:
            raise ValueError(f"model is required for family {self.family}")
        if self.alpha_max is not None and self.alpha_min > self.alpha_max:
            raise ValueError("alpha_min must not exceed alpha_max")
        if self.burn_in >= self.horizon_T:
            raise ValueError("burn_in must be smaller than horizon_T")
        return self

    @property
    def model_kind(self) -> str:
        if self.family in AOII_FAMILIES:
            return "aoii"
        if self.family in TWO_RATE_FAMILIES:
            return "two-rate"
        return self.model or "two-rate"

    @property
    def swept_field(self) -> Optional[str]:
        return SWEPT_FIELD.get(self.family)

    @property
    def resolved_delta_max(self) -> int:
        if self.delta_max is not None:
            return self.delta_max
        return 30 if self.model_kind == "aoii" else 20

    @property
    def resolved_b_max(self) -> List[int]:
        if self.b_max:
            return list(self.b_max)
        if self.family == "aoi2-gap-bmax":
            return list(range(1, 16))
        if self.model_kind == "aoii" and self.family in AOII_FAMILIES:
            return [5, 10, 20]
        return [5]

    @property
    def resolved_methods(self) -> List[str]:
        if self.methods:
            return list(self.methods)
        if self.family in AOII_FAMILIES:
            return ["token", "cmdp"]
        if self.family == "solve":
            return ["token"]
        return ["token", "cmdp", "uniform", "random"]

    def solver_config(self) -> SolverConfig:
        return SolverConfig(eps_v=self.eps_v, max_iterations=self.max_iterations)

    def search_config(self) -> SearchConfig:
        return SearchConfig(
            eps_lambda=self.eps_lambda, gamma=self.gamma, max_outer=self.max_outer
        )

    def sim_config(self) -> SimConfig:
        return SimConfig(
            horizon_T=self.horizon_T,
            n_runs=self.n_runs,
            master_seed=self.seed,
            burn_in=self.burn_in,
        )


class DualEvaluation(BaseModel):
    """Outcome of solving the Lagrangian problem at one multiplier.

    ``J`` is the exact average age of ``policy`` without penalties and
    ``constraints`` holds its exact rate slacks.
    """
    lam: Tuple[float, float]
    policy: Optional[np.ndarray] = None
    J: float = 0.0
    constraints: ConstraintEval

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def dual_value(self) -> float:
        """L(lambda, policy) minus the lambda-weighted budgets."""
        return self.J + self.lam[0] * self.constraints.c0 + self.lam[1] * self.constraints.c1
