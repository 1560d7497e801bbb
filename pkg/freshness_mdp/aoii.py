"""
Single-rate Age of Incorrect Information models.

The source is an N-state symmetric Markov chain observed over a Bernoulli
channel. Its AoII evolves on {0, ..., delta_max}: it stays at 0 while the
receiver is correct and grows by one per slot otherwise. Two models are
built on top of that chain:

* the Lagrangian model, states delta, cost delta + lambda * a;
* the token model, states (b, delta), where updating spends a token and
  tokens arrive with probability alpha up to b_max.
"""
from typing import Optional, Tuple

import numpy as np

from .exceptions import InvalidBracketError, InvalidParamsError
from .lagrangian import bisection_1d
from .mdp import FiniteMdp, GridLayout, TransitionBuilder, long_run_average, rvia
from .models import (
    AoiiParams,
    ConstraintEval,
    DualEvaluation,
    MixedPolicy,
    SolverConfig,
    TokenParams,
)
from .utils import MemoCache, get_logger

logger = get_logger("aoii")


def derive_chain_params(N: int, p_R: float, p_s: float, delta_max: int) -> AoiiParams:
    """
    Complete the source/channel parameters.

    Args:
        N: Number of source states (at least 2)
        p_R: Probability that the source stays put
        p_s: Channel success probability
        delta_max: AoII cap

    Returns:
        AoiiParams with p_t = (1 - p_R)/(N - 1), p_f = 1 - p_s and
        beta = p_R p_s + p_f p_t

    Raises:
        InvalidParamsError: If the inputs are out of range or p_R <= p_t
    """
    if N < 2:
        raise InvalidParamsError("N must be at least 2", field="N", value=N)
    if not 0.0 < p_R < 1.0:
        raise InvalidParamsError("p_R must satisfy 0 < p_R < 1", field="p_R", value=p_R)
    if not 0.0 < p_s <= 1.0:
        raise InvalidParamsError("p_s must satisfy 0 < p_s <= 1", field="p_s", value=p_s)
    if delta_max < 1:
        raise InvalidParamsError("delta_max must be >= 1", field="delta_max",
                                 value=delta_max)
    p_t = (1.0 - p_R) / (N - 1)
    if not p_R > p_t:
        raise InvalidParamsError(
            f"p_R={p_R} must exceed p_t={p_t:.6g} (requires p_R > 1/N)",
            field="p_R", value=p_R,
        )
    p_f = 1.0 - p_s
    return AoiiParams(
        N=N, p_R=p_R, p_t=p_t, p_s=p_s, p_f=p_f, beta=p_R * p_s + p_f * p_t,
        delta_max=delta_max,
    )


def chain_layout(p: AoiiParams) -> GridLayout:
    return GridLayout([("delta", 0, p.delta_max)])


def token_layout(p: AoiiParams, t: TokenParams) -> GridLayout:
    """(b, delta) row-major; b = 0 has no update decision to verify."""
    return GridLayout(
        [("b", 0, t.b_max), ("delta", 0, p.delta_max)],
        threshold_exclude={"b": 0},
    )


def aoii_successors(p: AoiiParams, delta: int, a: int) -> Tuple[Tuple[int, float], ...]:
    """AoII successors of one slot; delta + 1 saturates at delta_max."""
    grown = min(delta + 1, p.delta_max)
    if delta == 0:
        return ((0, p.p_R), (1, 1.0 - p.p_R))
    if a == 0:
        return ((0, p.p_t), (grown, 1.0 - p.p_t))
    return ((0, p.beta), (grown, 1.0 - p.beta))


def build_aoii_lagrangian_mdp(p: AoiiParams, lam: float) -> FiniteMdp:
    """
    AoII chain with cost delta + lam * a; both actions allowed everywhere.
    """
    if lam < 0:
        raise InvalidParamsError("lambda must be nonnegative", field="lambda", value=lam)
    layout = chain_layout(p)
    n = layout.n_states
    builder = TransitionBuilder(n)
    cost = np.zeros((n, 2))
    for delta in range(p.delta_max + 1):
        for a in (0, 1):
            for succ, prob in aoii_successors(p, delta, a):
                builder.add(delta, a, succ, prob)
            cost[delta, a] = delta + lam * a
    return FiniteMdp(builder.build(), cost, layout=layout, name=f"aoii-lagrangian(lambda={lam:g})")


def build_aoii_token_mdp(p: AoiiParams, t: TokenParams) -> FiniteMdp:
    """
    Token-gated AoII model.

    The token count moves to min(b - a + 1, b_max) on an arrival
    (probability alpha) and to b - a otherwise; the AoII moves as in the
    Lagrangian model. Updating is masked at b = 0 and the cost is delta.
    """
    layout = token_layout(p, t)
    n = layout.n_states
    builder = TransitionBuilder(n)
    cost = np.zeros((n, 2))
    mask = np.ones((n, 2), dtype=bool)
    alpha = t.alpha
    for b in range(t.b_max + 1):
        for delta in range(p.delta_max + 1):
            s = layout.index(b=b, delta=delta)
            cost[s, :] = delta
            for a in (0, 1):
                if a == 1 and b == 0:
                    mask[s, 1] = False
                    continue
                token_moves = ((min(b - a + 1, t.b_max), alpha), (b - a, 1.0 - alpha))
                for succ_delta, p_delta in aoii_successors(p, delta, a):
                    for succ_b, p_b in token_moves:
                        builder.add(s, a, layout.index(b=succ_b, delta=succ_delta),
                                    p_b * p_delta)
    return FiniteMdp(
        builder.build(), cost, mask, layout=layout,
        name=f"aoii-token(alpha={alpha:g}, bmax={t.b_max})",
    )


class AoiiDualProblem:
    """
    lambda -> (lambda-optimal policy, rate slack) for the single-rate model.

    Results are memoized per lambda rounded to 12 digits, so repeated
    queries return the identical policy object.
    """

    def __init__(self, params: AoiiParams, alpha: float,
                 solver_cfg: Optional[SolverConfig] = None):
        self.params = params
        self.alpha = alpha
        self.solver_cfg = solver_cfg or SolverConfig()
        self.base = build_aoii_lagrangian_mdp(params, 0.0)
        self.updates = np.tile([0.0, 1.0], (self.base.n_states, 1))
        self.cache: MemoCache = MemoCache("aoii-dual")

    def __call__(self, lam: float) -> DualEvaluation:
        lam = max(float(lam), 0.0)
        return self.cache.get_or_compute(round(lam, 12), lambda: self._solve(lam))

    def _solve(self, lam: float) -> DualEvaluation:
        result = rvia(build_aoii_lagrangian_mdp(self.params, lam), self.solver_cfg)
        return self.evaluate_policy(result.policy, lam)

    def evaluate_policy(self, policy: np.ndarray, lam: float = 0.0) -> DualEvaluation:
        J = long_run_average(self.base, policy, self.base.cost)
        rate = long_run_average(self.base, policy, self.updates)
        return DualEvaluation(
            lam=(lam, 0.0),
            policy=policy,
            J=J,
            constraints=ConstraintEval(c0=rate - self.alpha),
        )


def find_upper_bracket(problem: AoiiDualProblem, start: float,
                       max_doublings: int = 40) -> float:
    """Smallest start * 2^k whose lambda-optimal policy under-uses the budget."""
    lam = start
    for _ in range(max_doublings + 1):
        if problem(lam).constraints.c0 < 0:
            return lam
        lam *= 2.0
    raise InvalidBracketError(
        f"rate stays above alpha={problem.alpha} up to lambda={lam / 2:g}",
        details={"lambda": lam / 2},
    )


def solve_aoii_cmdp(
    params: AoiiParams,
    alpha: float,
    solver_cfg: Optional[SolverConfig] = None,
    eps: float = 1e-6,
) -> Tuple[MixedPolicy, float, float]:
    """
    Constrained single-rate optimum: minimize AoII subject to rate <= alpha.

    Returns:
        Tuple of (mixed policy on the Lagrangian states, exact J, exact slack)
    """
    problem = AoiiDualProblem(params, alpha, solver_cfg)
    free = problem(0.0)
    if free.constraints.c0 <= 0:
        logger.info(f"rate constraint alpha={alpha} not binding; using lambda=0 policy")
        mixed = MixedPolicy.two_policy(free.policy, free.policy, 1.0)
        return mixed, free.J, free.constraints.c0

    hi = find_upper_bracket(problem, 10.0 * params.delta_max)
    bisection = bisection_1d(problem, hi, eps)
    plus, minus = bisection.plus, bisection.minus
    mu = bisection.mu
    J = mu * plus.J + (1.0 - mu) * minus.J
    slack = mu * plus.constraints.c0 + (1.0 - mu) * minus.constraints.c0
    logger.info(
        f"alpha={alpha}: lambda*={bisection.lambda_star:.6g}, mu={mu:.6g}, J={J:.6f}"
    )
    mixed = MixedPolicy.two_policy(
        plus.policy, minus.policy, mu, (plus.constraints, minus.constraints)
    )
    return mixed, J, slack
