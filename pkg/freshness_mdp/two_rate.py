"""
Two-rate AoI models.

Requests arrive i.i.d. with probability q and the request indicator r of
the current slot is part of the state. Updates sent in slots without a
request are capped at rate (1-q) alpha_min, those sent with a request at
q alpha_max. The AoI lives on {1, ..., delta_max} and drops to 1 one slot
after an update.

State indexing is row-major: (b0, b1, delta, r) for the token model and
(delta, r) for the Lagrangian model, with r varying fastest.
"""
from typing import Optional, Tuple

import numpy as np

from .exceptions import InvalidParamsError
from .mdp import FiniteMdp, GridLayout, TransitionBuilder, rvia, stationary_distribution
from .models import ConstraintEval, DualEvaluation, LagrangeVec, SolverConfig, TwoRateParams
from .utils import get_logger

logger = get_logger("two_rate")


def chain_layout(p: TwoRateParams) -> GridLayout:
    return GridLayout([("delta", 1, p.delta_max), ("r", 0, 1)], context="r")


def token_layout(p: TwoRateParams) -> GridLayout:
    return GridLayout(
        [("b0", 0, p.b_max), ("b1", 0, p.b_max), ("delta", 1, p.delta_max), ("r", 0, 1)],
        context="r",
    )


def _request_moves(p: TwoRateParams) -> Tuple[Tuple[int, float], Tuple[int, float]]:
    return ((0, 1.0 - p.q), (1, p.q))


def _age_after(p: TwoRateParams, delta: int, a: int) -> int:
    return 1 if a == 1 else min(delta + 1, p.delta_max)


def _bucket_moves(b: int, a: int, arrival: float, b_max: int) -> Tuple[Tuple[int, float], ...]:
    return ((min(b - a + 1, b_max), arrival), (b - a, 1.0 - arrival))


def build_two_rate_token_mdp(p: TwoRateParams) -> FiniteMdp:
    """
    Token-gated two-rate model with cost delta.

    Bucket b0 serves slots with r = 0 and refills with probability
    alpha_min in those slots only; b1 does the same for r = 1 with
    alpha_max. Updating is masked when the bucket of the current context
    is empty.
    """
    layout = token_layout(p)
    n = layout.n_states
    builder = TransitionBuilder(n)
    cost = np.zeros((n, 2))
    mask = np.ones((n, 2), dtype=bool)

    for s, (b0, b1, delta, r) in enumerate(layout.values):
        cost[s, :] = delta
        for a in (0, 1):
            if a == 1 and (b1 if r else b0) == 0:
                mask[s, 1] = False
                continue
            if r == 0:
                b0_moves = _bucket_moves(b0, a, p.alpha_min, p.b_max)
                b1_moves = ((b1, 1.0),)
            else:
                b0_moves = ((b0, 1.0),)
                b1_moves = _bucket_moves(b1, a, p.alpha_max, p.b_max)
            next_delta = _age_after(p, delta, a)
            for nb0, p0 in b0_moves:
                for nb1, p1 in b1_moves:
                    for nr, pr in _request_moves(p):
                        succ = layout.index(b0=nb0, b1=nb1, delta=next_delta, r=nr)
                        builder.add(s, a, succ, p0 * p1 * pr)

    return FiniteMdp(
        builder.build(), cost, mask, layout=layout,
        name=f"two-rate-token(q={p.q:g}, alpha_max={p.alpha_max:g}, bmax={p.b_max})",
    )


def build_two_rate_lagrangian_mdp(p: TwoRateParams, lam: LagrangeVec) -> FiniteMdp:
    """
    Token-free (delta, r) model with cost delta + lambda0 (1-r) a + lambda1 r a.
    """
    if lam.lambda0 < 0 or lam.lambda1 < 0:
        raise InvalidParamsError("lambda must be nonnegative", field="lambda",
                                 value=lam.as_array().tolist())
    layout = chain_layout(p)
    n = layout.n_states
    builder = TransitionBuilder(n)
    cost = np.zeros((n, 2))
    for s, (delta, r) in enumerate(layout.values):
        penalty = lam.lambda1 if r else lam.lambda0
        cost[s] = (delta, delta + penalty)
        for a in (0, 1):
            next_delta = _age_after(p, delta, a)
            for nr, pr in _request_moves(p):
                builder.add(s, a, layout.index(delta=next_delta, r=nr), pr)
    return FiniteMdp(
        builder.build(), cost, layout=layout,
        name=f"two-rate-lagrangian(lambda=({lam.lambda0:g}, {lam.lambda1:g}))",
    )


def context_rates(mdp: FiniteMdp, policy: np.ndarray) -> Tuple[float, float, float]:
    """
    Exact (average cost, rate0, rate1) of a deterministic policy.

    rate0 counts updates in slots with r = 0 and rate1 those with r = 1;
    both are fractions of all slots.
    """
    if mdp.layout is None or mdp.layout.context is None:
        raise InvalidParamsError("model has no request context", field="layout")
    policy = mdp.check_policy(policy)
    mu = stationary_distribution(mdp, policy)
    states = np.arange(mdp.n_states)
    r = mdp.layout.contexts
    J = float(mu @ mdp.cost[states, policy])
    rate0 = float(mu @ ((1 - r) * policy))
    rate1 = float(mu @ (r * policy))
    return J, rate0, rate1


def constraint_values(
    p: TwoRateParams, policy: np.ndarray, mdp: Optional[FiniteMdp] = None,
) -> ConstraintEval:
    """Rate slacks (rate0 - alpha0, rate1 - alpha1) of a (delta, r) policy."""
    if mdp is None:
        mdp = build_two_rate_lagrangian_mdp(p, LagrangeVec(lambda0=0.0, lambda1=0.0))
    _, rate0, rate1 = context_rates(mdp, policy)
    return ConstraintEval(c0=rate0 - p.alpha0, c1=rate1 - p.alpha1)


class TwoRateDualProblem:
    """
    lambda -> (lambda-optimal policy, exact AoI, rate slacks).

    Every evaluation solves one Lagrangian model with RVIA; wrap it in
    ``lagrangian.CachedProblem`` to reuse solves.
    """

    def __init__(self, params: TwoRateParams, solver_cfg: Optional[SolverConfig] = None):
        self.params = params
        self.solver_cfg = solver_cfg or SolverConfig()
        self.base = build_two_rate_lagrangian_mdp(params, LagrangeVec(lambda0=0.0, lambda1=0.0))

    def __call__(self, lam: LagrangeVec) -> DualEvaluation:
        result = rvia(build_two_rate_lagrangian_mdp(self.params, lam), self.solver_cfg)
        return self.evaluate_policy(result.policy, lam)

    def evaluate_policy(
        self, policy: np.ndarray, lam: Optional[LagrangeVec] = None,
    ) -> DualEvaluation:
        J, rate0, rate1 = context_rates(self.base, policy)
        lam = lam or LagrangeVec(lambda0=0.0, lambda1=0.0)
        return DualEvaluation(
            lam=(lam.lambda0, lam.lambda1),
            policy=policy,
            J=J,
            constraints=ConstraintEval(c0=rate0 - self.params.alpha0,
                                       c1=rate1 - self.params.alpha1),
        )
