"""
Monte Carlo evaluation of policies on any finite model.

All runs advance together, one slot at a time, as numpy arrays. Each run
owns a Philox stream spawned from the master seed, so a run's trajectory
depends only on (master_seed, run index) and never on chunking or on the
number of runs simulated alongside it.

Per run the first draw picks the component of a mixed policy (it is drawn
for every decision source). Then every slot consumes two uniforms: one
for the transition and one for decision randomness.
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import LayoutMismatchError, ValidationError
from .mdp import FiniteMdp
from .models import BaselineKind, MixedPolicy, SimConfig, SimResult
from .utils import get_logger, log_function_call

logger = get_logger("simulation")

CREDIT_TOL = 1e-9

DecisionSource = Union[np.ndarray, Sequence[int], MixedPolicy, BaselineKind, str]


def spawn_streams(master_seed: int, n_runs: int) -> List[np.random.Generator]:
    """Independent per-run generators derived from one seed."""
    children = np.random.SeedSequence(master_seed).spawn(n_runs)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _baseline_batch(
    kind: BaselineKind,
    ctx: np.ndarray,
    u: np.ndarray,
    rates: Optional[Tuple[float, float]],
    credit: Optional[np.ndarray],
    allowed: np.ndarray,
) -> np.ndarray:
    if kind is BaselineKind.NEVER_UPDATE:
        return np.zeros(ctx.shape, dtype=np.int64)
    if kind is BaselineKind.GREEDY_TOKEN:
        return allowed.astype(np.int64)

    alpha = np.asarray(rates, dtype=float)[ctx]
    if kind is BaselineKind.RANDOM_TWO_RATE:
        return (u < alpha).astype(np.int64)

    runs = np.arange(ctx.size)
    credit[runs, ctx] += alpha
    fire = credit[runs, ctx] >= 1.0 - CREDIT_TOL
    credit[runs[fire], ctx[fire]] -= 1.0
    return fire.astype(np.int64)


def baseline_decision(
    kind: Union[BaselineKind, str],
    r: int,
    rng: np.random.Generator,
    rates: Optional[Tuple[float, float]] = None,
    credit: Optional[np.ndarray] = None,
    allowed: bool = True,
) -> int:
    """
    One action of a reference rule.

    Args:
        kind: Which rule
        r: Request indicator of the current slot (0 for single-rate models)
        rng: Stream supplying the Bernoulli draw of the random rule
        rates: (alpha_min, alpha_max), needed by the uniform and random rules
        credit: Length-2 accumulator of the uniform rule, updated in place
        allowed: Whether the model permits an update in this state

    Returns:
        0 (idle) or 1 (update)
    """
    kind = BaselineKind(kind)
    _require_rates(kind, rates)
    if kind is BaselineKind.UNIFORM_TWO_RATE and credit is None:
        raise ValidationError("uniform rule needs a credit accumulator", field="credit")
    acc = None if credit is None else np.asarray(credit, dtype=float).reshape(1, 2)
    action = _baseline_batch(
        kind, np.array([int(r)]), np.array([rng.random()]), rates, acc, np.array([allowed]),
    )
    if acc is not None:
        credit[:] = acc[0]
    return int(action[0])


def _require_rates(kind: BaselineKind, rates: Optional[Tuple[float, float]]) -> None:
    if kind in (BaselineKind.UNIFORM_TWO_RATE, BaselineKind.RANDOM_TWO_RATE) and rates is None:
        raise ValidationError(f"baseline {kind.value} needs (alpha_min, alpha_max)",
                              field="baseline_rates")


def _policy_stack(mdp: FiniteMdp, source: DecisionSource) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(source, MixedPolicy):
        if source.n_states != mdp.n_states:
            raise LayoutMismatchError(
                f"mixed policy covers {source.n_states} states, model has {mdp.n_states}"
            )
        stack = np.vstack([mdp.check_policy(p) for p in source.policies])
        return stack, np.cumsum(source.weights)
    policy = np.asarray(source)
    if policy.shape != (mdp.n_states,):
        raise LayoutMismatchError(
            f"policy covers {policy.size} states, model has {mdp.n_states}"
        )
    return mdp.check_policy(policy)[None, :], np.array([1.0])


def _baseline_kind(source: DecisionSource) -> Optional[BaselineKind]:
    if isinstance(source, BaselineKind):
        return source
    if isinstance(source, str):
        return BaselineKind(source)
    return None


def _stderr(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


@log_function_call
def simulate(
    mdp: FiniteMdp,
    source: DecisionSource,
    cfg: Optional[SimConfig] = None,
    initial_state: int = 0,
    baseline_rates: Optional[Tuple[float, float]] = None,
) -> SimResult:
    """
    Simulate a policy, a mixed policy or a baseline rule.

    The recorded cost of a slot is the age component of its state (the
    model's cost when it has no layout); updates are split by the request
    context of the slot. Slots before burn_in are simulated but not
    counted. Actions a rule proposes outside the mask become idles.

    Args:
        mdp: Model to run on
        source: Policy array, MixedPolicy or BaselineKind
        cfg: Horizon, runs, seed and tracing settings
        initial_state: Index of the state every run starts in
        baseline_rates: (alpha_min, alpha_max) for the uniform and random rules

    Returns:
        SimResult with run-averaged estimates and standard errors
    """
    cfg = cfg or SimConfig()
    if not 0 <= initial_state < mdp.n_states:
        raise LayoutMismatchError(f"initial state {initial_state} is not in {mdp.name}")

    kind = _baseline_kind(source)
    if kind is None:
        stack, cum_weights = _policy_stack(mdp, source)
    else:
        _require_rates(kind, baseline_rates)
        stack, cum_weights = None, None

    n_runs, T = cfg.n_runs, cfg.horizon_T
    succ, cum = mdp.successor_table()
    mask = mdp.action_mask
    layout = mdp.layout
    ages = layout.delta if layout is not None else None
    contexts = layout.contexts if layout is not None else np.zeros(mdp.n_states, dtype=int)
    runs = np.arange(n_runs)

    streams = spawn_streams(cfg.master_seed, n_runs)
    pick = np.array([g.random() for g in streams])
    if stack is not None:
        component = np.minimum(np.searchsorted(cum_weights, pick, side="right"),
                               stack.shape[0] - 1)
    credit = np.zeros((n_runs, 2))

    state = np.full(n_runs, initial_state, dtype=np.int64)
    cost_sum = np.zeros(n_runs)
    updates = np.zeros((n_runs, 2))
    trace: List[Tuple[int, ...]] = []
    n_traced = min(cfg.trace_runs, n_runs)

    for start in range(0, T, cfg.chunk_size):
        k = min(cfg.chunk_size, T - start)
        draws = np.stack([g.random((k, 2)) for g in streams], axis=1)
        for offset in range(k):
            t = start + offset
            ctx = contexts[state]
            allowed = mask[state, 1]
            if stack is None:
                action = _baseline_batch(kind, ctx, draws[offset, :, 1], baseline_rates,
                                         credit, allowed)
            else:
                action = stack[component, state]
            action = np.where(allowed, action, 0)

            cost = ages[state] if ages is not None else mdp.cost[state, action]
            if t >= cfg.burn_in:
                cost_sum += cost
                updates[runs, ctx] += action
            for run in range(n_traced):
                s = int(state[run])
                where = tuple(layout.values[s]) if layout is not None else (s,)
                trace.append((run, t, *(int(v) for v in where), int(action[run]),
                              float(cost[run])))

            rows = state * mdp.n_actions + action
            slot = (draws[offset, :, 0][:, None] >= cum[rows]).sum(axis=1)
            state = succ[rows, slot]

    counted = T - cfg.burn_in
    avg_cost = cost_sum / counted
    rate0 = updates[:, 0] / counted
    rate1 = updates[:, 1] / counted
    result = SimResult(
        avg_cost=float(avg_cost.mean()),
        rate0=float(rate0.mean()),
        rate1=float(rate1.mean()),
        total_rate=float(rate0.mean() + rate1.mean()),
        stderr_cost=_stderr(avg_cost),
        stderr_rate0=_stderr(rate0),
        stderr_rate1=_stderr(rate1),
        n_runs=n_runs,
        horizon_T=T,
        trace=trace,
    )
    logger.debug(
        f"{mdp.name}: avg_cost={result.avg_cost:.4f} +- {result.stderr_cost:.4f}, "
        f"rates=({result.rate0:.4f}, {result.rate1:.4f})"
    )
    return result


def trace_columns(mdp: FiniteMdp) -> List[str]:
    """Header matching the rows of ``SimResult.trace`` for this model."""
    names = list(mdp.layout.names) if mdp.layout is not None else ["state"]
    return ["run", "t", *names, "action", "cost"]
