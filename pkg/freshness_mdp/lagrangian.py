"""
Lagrange multiplier searches for constrained average-cost problems.

A *dual problem* is any callable mapping a multiplier to a
``DualEvaluation``: the lambda-optimal deterministic policy together with
its exact average age and rate slacks. Two-constraint problems take a
``LagrangeVec``; single-constraint problems take a float and report their
slack in ``c0`` unless told otherwise.

The two-constraint search locates the multiplier at which the slack map
passes through the origin by repeated longest-edge bisection of a triangle
in multiplier space, then finds four neighbouring policies with the four
sign patterns of slacks and mixes them so both slacks vanish.
"""
import itertools
import threading
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .exceptions import (
    DegenerateTriangleError,
    InvalidBracketError,
    MaxIterationsError,
    NoSolutionError,
    NotFoundError,
    PatternNotFoundError,
    ValidationError,
)
from .models import (
    SIGN_TOL,
    ConstraintEval,
    DualEvaluation,
    LagrangeVec,
    LambdaTriangle,
    MixedPolicy,
    SearchConfig,
    SolverConfig,
    TwoRateParams,
)
from .utils import MemoCache, get_logger, log_function_call

logger = get_logger("lagrangian")

AREA_TOL = 1e-12
MIX_TOL = 1e-9
MIX_ACCEPT = 1e-6
DUAL_TOL = 1e-6

# order of the four neighbour policies and of the mixture weights
PATTERNS = ("++", "+-", "-+", "--")

DualProblem = Callable[[LagrangeVec], DualEvaluation]


class CachedProblem:
    """
    Memoizing wrapper around a two-constraint dual problem.

    ``best`` holds the evaluation with the largest dual value seen so far.
    """

    def __init__(self, problem: DualProblem):
        self.problem = problem
        self.cache: MemoCache = MemoCache("lambda")
        self.best: Optional[DualEvaluation] = None
        self._lock = threading.Lock()

    def __call__(self, lam: LagrangeVec) -> DualEvaluation:
        evaluation = self.cache.get_or_compute(lam.key(), lambda: self.problem(lam))
        with self._lock:
            if self.best is None or evaluation.dual_value() > self.best.dual_value():
                self.best = evaluation
        return evaluation

    def evaluate_policy(self, policy: np.ndarray) -> DualEvaluation:
        return self.problem.evaluate_policy(policy)  # type: ignore[attr-defined]

    @property
    def n_solves(self) -> int:
        return self.cache.misses


def _cached(problem: DualProblem) -> CachedProblem:
    return problem if isinstance(problem, CachedProblem) else CachedProblem(problem)


def _cross(u: np.ndarray, v: np.ndarray) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def point_in_triangle(
    fa: Sequence[float], fb: Sequence[float], fc: Sequence[float],
    tol: float = AREA_TOL,
) -> bool:
    """
    Whether the origin lies in the closed triangle (fa, fb, fc).

    Raises:
        DegenerateTriangleError: If the triangle's area is at most tol
    """
    a, b, c = (np.asarray(p, dtype=float) for p in (fa, fb, fc))
    if 0.5 * abs(_cross(b - a, c - a)) <= tol:
        raise DegenerateTriangleError(
            "triangle has zero area", details={"vertices": [a.tolist(), b.tolist(), c.tolist()]}
        )
    signs = (_cross(b - a, -a), _cross(c - b, -b), _cross(a - c, -c))
    has_neg = any(s < -tol for s in signs)
    has_pos = any(s > tol for s in signs)
    return not (has_neg and has_pos)


def _segment_contains_origin(points: Sequence[np.ndarray], tol: float = AREA_TOL) -> bool:
    pairs = itertools.combinations(points, 2)
    p, q = max(pairs, key=lambda pq: float(np.linalg.norm(pq[1] - pq[0])))
    d = q - p
    length = float(np.linalg.norm(d))
    if length <= tol:
        return float(np.linalg.norm(p)) <= tol
    if abs(_cross(d, -p)) > tol * max(length, 1.0):
        return False
    t = float(np.dot(-p, d)) / (length * length)
    return -tol <= t <= 1.0 + tol


def _contains_origin(images: Sequence[np.ndarray]) -> bool:
    try:
        return point_in_triangle(*images)
    except DegenerateTriangleError:
        return _segment_contains_origin(images)


class QuadrantPoints(BaseModel):
    """Initial multipliers whose slacks have patterns ++, --, +- and -+."""
    a: DualEvaluation
    b: DualEvaluation
    c: DualEvaluation
    d: DualEvaluation

    model_config = ConfigDict(frozen=True)

    @property
    def lambdas(self) -> Tuple[LagrangeVec, LagrangeVec, LagrangeVec, LagrangeVec]:
        return tuple(LagrangeVec.from_array(e.lam) for e in (self.a, self.b, self.c, self.d))


def _scan_axis(lambda_bar: float, n_scales: int) -> np.ndarray:
    return np.array([0.0] + [lambda_bar * 2.0 ** (-k) for k in range(n_scales, -1, -1)])


@log_function_call
def find_initial_quadrant_points(
    problem: DualProblem, lambda_bar: float, n_scales: int = 12,
) -> QuadrantPoints:
    """
    Scan a log-spaced multiplier grid for the tightest box around the root.

    Each axis takes the values 0 and lambda_bar * 2^-k for k = n_scales..0.
    A box with lower-left corner (i0, j0) and upper-right corner (i1, j1)
    is valid when its corners carry ++ at (i0, j0), -- at (i1, j1), +- at
    (i0, j1) and -+ at (i1, j0). The valid box spanning the fewest grid
    steps is returned; ties go to the box whose corners reach the larger
    dual value.

    Raises:
        NotFoundError: If no valid box exists on the grid
    """
    if lambda_bar <= 0:
        raise ValidationError("lambda_bar must be positive", field="lambda_bar", value=lambda_bar)
    problem = _cached(problem)
    axis = _scan_axis(lambda_bar, n_scales)
    cells = list(itertools.product(range(axis.size), range(axis.size)))
    evaluations = {
        (i, j): problem(LagrangeVec(lambda0=axis[i], lambda1=axis[j])) for i, j in cells
    }
    by_pattern = {
        pattern: [ij for ij in cells if evaluations[ij].constraints.matches(pattern)]
        for pattern in ("++", "--", "+-", "-+")
    }
    plus_minus, minus_plus = set(by_pattern["+-"]), set(by_pattern["-+"])

    best = None
    for i0, j0 in by_pattern["++"]:
        for i1, j1 in by_pattern["--"]:
            if i1 <= i0 or j1 <= j0:
                continue
            if (i0, j1) not in plus_minus or (i1, j0) not in minus_plus:
                continue
            corners = ((i0, j0), (i1, j1), (i0, j1), (i1, j0))
            top = max(evaluations[ij].dual_value() for ij in corners)
            rank = (i1 - i0 + j1 - j0, -top)
            if best is None or rank < best[0]:
                best = (rank, corners)

    if best is None:
        missing = [p for p, found in by_pattern.items() if not found]
        raise NotFoundError(
            "no box on the scan grid carries all four slack sign patterns",
            details={"missing_patterns": missing, "lambda_bar": lambda_bar},
        )
    a, b, c, d = (evaluations[ij] for ij in best[1])
    logger.debug(f"initial box lambda {a.lam} to {b.lam}")
    return QuadrantPoints(a=a, b=b, c=c, d=d)


class SearchTraceRow(BaseModel):
    """One outer iteration of the triangle search, as written to trace files."""
    iteration: int
    lambda_a: Tuple[float, float]
    lambda_b: Tuple[float, float]
    lambda_c: Tuple[float, float]
    lambda_e: Tuple[float, float]
    c_a: Tuple[float, float]
    c_b: Tuple[float, float]
    c_c: Tuple[float, float]
    contains_origin: bool

    model_config = ConfigDict(frozen=True)


class TriangleSearchResult(BaseModel):
    """Converged multiplier of the triangle search and how it got there."""
    lambda_star: LagrangeVec
    evaluation: DualEvaluation
    n_iterations: int
    longest_edges: List[float]
    trace: List[SearchTraceRow]

    model_config = ConfigDict(frozen=True)


def _pair(values: Sequence[float]) -> Tuple[float, float]:
    return (float(values[0]), float(values[1]))


def _longest_edge(tri: LambdaTriangle) -> float:
    verts = [v.as_array() for v in tri.vertices]
    return max(float(np.linalg.norm(verts[(i + 1) % 3] - verts[i])) for i in range(3))


@log_function_call
def triangle_bisection(
    problem: DualProblem,
    initial: QuadrantPoints,
    cfg: Optional[SearchConfig] = None,
) -> TriangleSearchResult:
    """
    Shrink a multiplier triangle around the root of the slack map.

    Starting from R = (A, D, C) and S = (D, B, C), keep the half whose slack
    image contains the origin (or, if neither does, whose image centroid is
    closest to it), rotate it so its longest edge comes first and split
    that edge at its midpoint. The estimate is the kept triangle's centroid;
    iteration stops once it moves less than eps_lambda.

    Raises:
        ValidationError: If an initial point has the wrong sign pattern
        DegenerateTriangleError: If a multiplier triangle collapses
        MaxIterationsError: If max_outer iterations do not converge
    """
    cfg = cfg or SearchConfig()
    problem = _cached(problem)
    A, B, C, D = initial.lambdas
    for lam, pattern, name in zip((A, B, C, D), ("++", "--", "+-", "-+"), "ABCD"):
        if not problem(lam).constraints.matches(pattern):
            raise ValidationError(
                f"initial point {name} must have slack pattern {pattern}",
                field=name, value=lam.as_array().tolist(),
            )

    R = LambdaTriangle(a=A, b=D, c=C)
    S = LambdaTriangle(a=D, b=B, c=C)
    e_new = D.as_array()
    e_old = np.full(2, np.inf)
    trace: List[SearchTraceRow] = []
    edges: List[float] = []
    iteration = 0

    while np.linalg.norm(e_new - e_old) >= cfg.eps_lambda:
        if iteration >= cfg.max_outer:
            raise MaxIterationsError(
                f"triangle search did not converge in {cfg.max_outer} iterations",
                details={"lambda": e_new.tolist()},
            )
        iteration += 1
        if R.area() <= AREA_TOL:
            raise DegenerateTriangleError(
                "multiplier triangle collapsed",
                details={"iteration": iteration, "lambda": e_new.tolist()},
            )

        images_r = [problem(v).constraints.as_array() for v in R.vertices]
        inside = _contains_origin(images_r)
        if inside:
            kept = R
        else:
            images_s = [problem(v).constraints.as_array() for v in S.vertices]
            if _contains_origin(images_s):
                kept = S
            else:
                near_r = np.linalg.norm(np.mean(images_r, axis=0))
                near_s = np.linalg.norm(np.mean(images_s, axis=0))
                kept = R if near_r <= near_s else S

        kept = kept.longest_edge_first()
        edges.append(_longest_edge(kept))
        e_old, e_new = e_new, kept.centroid()
        trace.append(SearchTraceRow(
            iteration=iteration,
            lambda_a=_pair(R.a.as_array()),
            lambda_b=_pair(R.b.as_array()),
            lambda_c=_pair(R.c.as_array()),
            lambda_e=_pair(e_new),
            c_a=_pair(images_r[0]),
            c_b=_pair(images_r[1]),
            c_c=_pair(images_r[2]),
            contains_origin=inside,
        ))

        mid = LagrangeVec.from_array((kept.a.as_array() + kept.b.as_array()) / 2.0)
        R = LambdaTriangle(a=kept.a, b=mid, c=kept.c)
        S = LambdaTriangle(a=mid, b=kept.b, c=kept.c)

    lambda_star = LagrangeVec.from_array(e_new)
    logger.info(
        f"triangle search converged after {iteration} iterations at "
        f"lambda=({lambda_star.lambda0:.6g}, {lambda_star.lambda1:.6g})"
    )
    return TriangleSearchResult(
        lambda_star=lambda_star,
        evaluation=problem(lambda_star),
        n_iterations=iteration,
        longest_edges=edges,
        trace=trace,
    )


class NeighborPolicies(BaseModel):
    """Evaluations with slack patterns ++, +-, -+, -- near the search root.

    ``scalings`` holds, per pattern, how many steps each multiplier
    component took.
    """
    evaluations: Tuple[DualEvaluation, DualEvaluation, DualEvaluation, DualEvaluation]
    scalings: Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int], Tuple[int, int]]

    model_config = ConfigDict(frozen=True)

    def constraint_matrix(self) -> np.ndarray:
        return np.vstack([e.constraints.as_array() for e in self.evaluations])


def _wrong_signs(c: ConstraintEval, pattern: str) -> np.ndarray:
    return np.array([
        not ConstraintEval(c0=value).matches(sign)
        for sign, value in zip(pattern, (c.c0, c.c1))
    ])


@log_function_call
def neighbor_policies(
    problem: DualProblem,
    lambda_star: LagrangeVec,
    gamma: float = 0.1,
    eps_lambda: float = 0.1,
    max_scalings: int = 200,
) -> NeighborPolicies:
    """
    Find one policy per slack sign pattern around lambda_star.

    Component i of the multiplier moves to lambda_i * (1 + gamma)^(-/+k_i):
    a slack that should be nonnegative shrinks its multiplier, one that
    should be nonpositive grows it. Only the components whose slack still
    has the wrong sign take another step, so each k_i stops as soon as its
    own slack is right. A zero component that must grow starts at
    gamma * eps_lambda.

    Raises:
        PatternNotFoundError: If a component needs more than max_scalings steps
    """
    problem = _cached(problem)
    base = lambda_star.as_array()
    found = []
    counts = []
    for pattern in PATTERNS:
        direction = np.array([-1.0 if s == "+" else 1.0 for s in pattern])
        start = base.copy()
        start[(direction > 0) & (start <= 0.0)] = gamma * eps_lambda
        k = np.zeros(2, dtype=int)
        while True:
            lam = np.where(k == 0, base, start * (1.0 + gamma) ** (direction * k))
            evaluation = problem(LagrangeVec.from_array(lam))
            if evaluation.constraints.matches(pattern):
                break
            k += _wrong_signs(evaluation.constraints, pattern)
            if k.max() > max_scalings:
                raise PatternNotFoundError(
                    f"slack pattern {pattern} not reached within {max_scalings} scalings",
                    pattern=pattern,
                )
        found.append(evaluation)
        counts.append((int(k[0]), int(k[1])))
    logger.debug(f"neighbour scalings {dict(zip(PATTERNS, counts))}")
    return NeighborPolicies(evaluations=tuple(found), scalings=tuple(counts))


def _mix_weights(rho0: np.ndarray, rho1: np.ndarray) -> np.ndarray:
    return np.stack([
        rho0 * rho1, rho0 * (1 - rho1), (1 - rho0) * rho1, (1 - rho0) * (1 - rho1)
    ], axis=-1)


def _mix_residual(c: np.ndarray, rho0: np.ndarray, rho1: np.ndarray) -> np.ndarray:
    return _mix_weights(rho0, rho1) @ c


def _mix_jacobian(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    r0, r1 = x
    d0 = r1 * c[0] + (1 - r1) * c[1] - r1 * c[2] - (1 - r1) * c[3]
    d1 = r0 * c[0] - r0 * c[1] + (1 - r0) * c[2] - (1 - r0) * c[3]
    return np.column_stack([d0, d1])


def _newton_mix(c: np.ndarray, max_iter: int = 100) -> Tuple[np.ndarray, float]:
    x = np.array([0.5, 0.5])
    res = float(np.abs(_mix_residual(c, x[0], x[1])).max())
    for _ in range(max_iter):
        if res <= MIX_TOL:
            break
        f = _mix_residual(c, x[0], x[1])
        step = np.linalg.lstsq(_mix_jacobian(c, x), -f, rcond=None)[0]
        t = 1.0
        while t > 1e-4:
            trial = np.clip(x + t * step, 0.0, 1.0)
            trial_res = float(np.abs(_mix_residual(c, trial[0], trial[1])).max())
            if trial_res < res:
                x, res = trial, trial_res
                break
            t /= 2.0
        else:
            break
    return x, res


def _grid_mix(c: np.ndarray) -> Tuple[np.ndarray, float]:
    center = np.array([0.5, 0.5])
    for step, half in ((1e-2, 0.5), (1e-4, 1e-2), (1e-6, 1e-4)):
        axes = [
            np.arange(max(0.0, m - half), min(1.0, m + half) + step / 2, step)
            for m in center
        ]
        r0, r1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        res = np.abs(_mix_residual(c, r0, r1)).max(axis=-1)
        i, j = np.unravel_index(np.argmin(res), res.shape)
        center = np.array([r0[i, j], r1[i, j]])
        best = float(res[i, j])
    return np.clip(center, 0.0, 1.0), best


def solve_mixing(constraints: np.ndarray) -> Tuple[float, float]:
    """
    Mixing probabilities that zero both slacks of a four-policy mixture.

    Args:
        constraints: 4x2 slacks of the (++, +-, -+, --) policies

    Returns:
        (rho0, rho1) in [0, 1]^2

    Raises:
        ValidationError: If the rows do not carry their sign patterns
        NoSolutionError: If no point reaches a residual of 1e-6
    """
    c = np.asarray(constraints, dtype=float)
    if c.shape != (4, 2):
        raise ValidationError("constraints must have shape (4, 2)", field="constraints",
                              value=c.shape)
    for row, pattern in zip(c, PATTERNS):
        if not ConstraintEval(c0=row[0], c1=row[1]).matches(pattern):
            raise ValidationError(f"row {row.tolist()} does not have pattern {pattern}",
                                  field="constraints", value=row.tolist())

    x, res = _newton_mix(c)
    if res > MIX_TOL:
        logger.debug(f"Newton stalled at residual {res:.3g}; refining on a grid")
        grid_x, grid_res = _grid_mix(c)
        if grid_res < res:
            x, res = grid_x, grid_res
    if res > MIX_ACCEPT:
        raise NoSolutionError(
            f"mixing equations unsolved, best residual {res:.3g}", residual=res
        )
    if res > MIX_TOL:
        logger.warning(f"mixing residual {res:.3g} above {MIX_TOL:g}")
    return float(x[0]), float(x[1])


class BisectionResult(BaseModel):
    """Bracketing policies of a single-constraint multiplier search."""
    lambda_star: float
    plus: DualEvaluation
    minus: DualEvaluation
    mu: float
    n_iterations: int

    model_config = ConfigDict(frozen=True)


def mixing_weight(c_plus: float, c_minus: float) -> float:
    """Weight on the violating policy that makes the mixed slack zero."""
    if c_plus == c_minus:
        return 1.0
    return c_minus / (c_minus - c_plus)


def bisection_1d(
    problem: Callable[[float], DualEvaluation],
    lambda_hi: float,
    eps: float = 1e-6,
    component: int = 0,
) -> BisectionResult:
    """
    Bisect a single multiplier until the bracket is narrower than eps.

    The lower end always holds a policy with slack >= 0 and the upper end
    one with slack < 0.

    Raises:
        InvalidBracketError: If c(0) <= 0 or c(lambda_hi) >= 0
    """
    def slack(e: DualEvaluation) -> float:
        return float(e.constraints.as_array()[component])

    plus, minus = problem(0.0), problem(lambda_hi)
    if not slack(plus) > 0:
        raise InvalidBracketError(
            f"slack at lambda=0 is {slack(plus):.6g}, expected positive",
            details={"lambda": 0.0},
        )
    if not slack(minus) < 0:
        raise InvalidBracketError(
            f"slack at lambda={lambda_hi:g} is {slack(minus):.6g}, expected negative",
            details={"lambda": lambda_hi},
        )

    lo, hi = 0.0, float(lambda_hi)
    iterations = 0
    while hi - lo >= eps:
        iterations += 1
        mid = 0.5 * (lo + hi)
        evaluation = problem(mid)
        if slack(evaluation) >= 0:
            lo, plus = mid, evaluation
        else:
            hi, minus = mid, evaluation
    mu = mixing_weight(slack(plus), slack(minus))
    logger.debug(f"1-D bisection: {iterations} steps, bracket [{lo:.6g}, {hi:.6g}], mu={mu:.6g}")
    return BisectionResult(
        lambda_star=0.5 * (lo + hi), plus=plus, minus=minus, mu=mu, n_iterations=iterations
    )


def evaluate_mixed_policy(
    mixed: MixedPolicy, problem: DualProblem,
) -> Tuple[float, float, float]:
    """Exact (J, c0, c1) of a mixture, weighting each component's evaluation."""
    seen = {}
    rows = []
    for policy in mixed.policies:
        key = id(policy)
        if key not in seen:
            seen[key] = problem.evaluate_policy(policy)  # type: ignore[attr-defined]
        e = seen[key]
        rows.append((e.J, e.constraints.c0, e.constraints.c1))
    J, c0, c1 = mixed.weights @ np.array(rows)
    return float(J), float(c0), float(c1)


def dual_value(problem: DualProblem, lam: LagrangeVec) -> float:
    """g(lambda) = min over policies of J + lambda . c, a lower bound on the constrained optimum."""
    return problem(lam).dual_value()


class CmdpSolution(BaseModel):
    """Optimal randomized policy of the two-rate constrained problem."""
    mixed: MixedPolicy
    J: float
    c0: float
    c1: float
    lambda_star: LagrangeVec
    search: Optional[TriangleSearchResult] = None
    n_solves: int = 0

    model_config = ConfigDict(frozen=True)


def _single_constraint_mix(
    problem: CachedProblem,
    lambda_star: LagrangeVec,
    lambda_hi: float,
    eps: float,
) -> Optional[Tuple[MixedPolicy, Tuple[float, float, float]]]:
    best = None
    for index in (0, 1):
        fixed = lambda_star.as_array()

        def along(lam: float, index: int = index, fixed: np.ndarray = fixed) -> DualEvaluation:
            point = fixed.copy()
            point[index] = lam
            return problem(LagrangeVec.from_array(point))

        try:
            bisection = bisection_1d(along, lambda_hi, eps, component=index)
        except InvalidBracketError as e:
            logger.debug(f"constraint {index} has no 1-D bracket: {e}")
            continue
        mixed = MixedPolicy.two_policy(
            bisection.plus.policy, bisection.minus.policy, bisection.mu,
            (bisection.plus.constraints, bisection.minus.constraints),
        )
        values = evaluate_mixed_policy(mixed, problem)
        if values[2 - index] > SIGN_TOL:
            continue
        if best is None or values[0] < best[1][0]:
            best = (mixed, values)
    return best


def _best_multiplier(problem: CachedProblem, search: TriangleSearchResult) -> LagrangeVec:
    """The search root, unless an evaluated multiplier has a larger dual value."""
    found = search.evaluation.dual_value()
    best = problem.best
    if best is None or best.dual_value() <= found + DUAL_TOL * max(1.0, abs(found)):
        return search.lambda_star
    logger.warning(
        f"triangle search root has dual value {found:.6g} below {best.dual_value():.6g} "
        f"at lambda={best.lam}; centring the neighbour search there"
    )
    return LagrangeVec.from_array(np.asarray(best.lam))


@log_function_call
def solve_two_rate_cmdp(
    params: TwoRateParams,
    solver_cfg: Optional[SolverConfig] = None,
    search_cfg: Optional[SearchConfig] = None,
) -> CmdpSolution:
    """
    Optimal randomized policy of the two-rate constrained AoI problem.

    Minimizes the average AoI subject to per-context update rates
    rate((1-r)a) <= (1-q) alpha_min and rate(r a) <= q alpha_max.
    """
    from .two_rate import TwoRateDualProblem

    search_cfg = search_cfg or SearchConfig()
    problem = CachedProblem(TwoRateDualProblem(params, solver_cfg))

    free = problem(LagrangeVec(lambda0=0.0, lambda1=0.0))
    if free.constraints.c0 <= SIGN_TOL and free.constraints.c1 <= SIGN_TOL:
        logger.info("rate constraints not binding; using the lambda=0 policy")
        mixed = MixedPolicy.two_policy(free.policy, free.policy, 1.0)
        return CmdpSolution(
            mixed=mixed, J=free.J, c0=free.constraints.c0, c1=free.constraints.c1,
            lambda_star=LagrangeVec(lambda0=0.0, lambda1=0.0), n_solves=problem.n_solves,
        )

    lambda_bar = search_cfg.lambda_bar or 10.0 * params.delta_max
    quadrants = find_initial_quadrant_points(problem, lambda_bar, search_cfg.n_scales)
    search = triangle_bisection(problem, quadrants, search_cfg)
    centre = _best_multiplier(problem, search)

    try:
        neighbours = neighbor_policies(
            problem, centre, search_cfg.gamma, search_cfg.eps_lambda,
            search_cfg.max_scalings,
        )
    except PatternNotFoundError as e:
        logger.warning(f"{e}; falling back to a single binding constraint")
        fallback = _single_constraint_mix(
            problem, centre, lambda_bar, search_cfg.eps_lambda * 1e-3
        )
        if fallback is None:
            raise
        mixed, (J, c0, c1) = fallback
    else:
        rho0, rho1 = solve_mixing(neighbours.constraint_matrix())
        evals = neighbours.evaluations
        mixed = MixedPolicy(
            policies=tuple(e.policy for e in evals),
            rho0=rho0,
            rho1=rho1,
            lambdas=tuple(LagrangeVec.from_array(e.lam) for e in evals),
            constraints=tuple(e.constraints for e in evals),
        )
        J, c0, c1 = evaluate_mixed_policy(mixed, problem)

    logger.info(
        f"q={params.q}, alpha_max={params.alpha_max}: J={J:.6f}, "
        f"c=({c0:.3g}, {c1:.3g}), {problem.n_solves} Lagrangian solves"
    )
    return CmdpSolution(
        mixed=mixed, J=J, c0=c0, c1=c1, lambda_star=centre,
        search=search, n_solves=problem.n_solves,
    )
