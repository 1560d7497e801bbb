"""
Finite average-cost MDPs and their solvers.

A ``FiniteMdp`` stores one sparse transition matrix per action, a cost
table and an action mask. The solvers work on whole arrays: a Bellman
sweep is one sparse matrix-vector product per action.
"""
import itertools
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .exceptions import (
    LayoutMismatchError,
    MultiChainError,
    NonConvergenceError,
    TooLargeError,
    ValidationError,
)
from .models import SolveResult, SolverConfig
from .utils import get_logger, log_function_call

logger = get_logger("mdp")

ROW_SUM_TOL = 1e-12
DENSE_SOLVE_LIMIT = 5000
ENUMERATION_LIMIT = 2 ** 20


class GridLayout:
    """
    Row-major indexing of a product state space.

    Each component has an inclusive integer range; the last component
    varies fastest. One component is the age variable; the optional
    context component is the request indicator r.

    Attributes:
        names: Component names in index order
        lows: Smallest value of each component
        highs: Largest value of each component
        age: Name of the age component
        context: Name of the request-context component, if any
    """

    def __init__(
        self,
        components: Sequence[Tuple[str, int, int]],
        age: str = "delta",
        context: Optional[str] = None,
        threshold_exclude: Optional[Dict[str, int]] = None,
    ):
        self.names = tuple(name for name, _, _ in components)
        self.lows = np.array([lo for _, lo, _ in components], dtype=int)
        self.highs = np.array([hi for _, _, hi in components], dtype=int)
        if np.any(self.highs < self.lows):
            raise ValidationError("component ranges must be nonempty", field="components")
        if age not in self.names:
            raise ValidationError(f"age component {age!r} missing", field="age")
        self.age = age
        self.context = context
        self.threshold_exclude = dict(threshold_exclude or {})
        self.shape = tuple(int(s) for s in self.highs - self.lows + 1)
        self.n_states = int(np.prod(self.shape))

        grids = np.indices(self.shape).reshape(len(self.shape), -1)
        self._values = (grids + self.lows[:, None]).T
        self._values.setflags(write=False)

    def __repr__(self) -> str:
        ranges = ", ".join(
            f"{n}={lo}..{hi}" for n, lo, hi in zip(self.names, self.lows, self.highs)
        )
        return f"GridLayout({ranges})"

    def index(self, **components: int) -> int:
        """Index of the state with the given component values."""
        if set(components) != set(self.names):
            raise ValidationError(
                f"expected components {self.names}", field="components",
                value=sorted(components),
            )
        offsets = []
        for pos, name in enumerate(self.names):
            value = int(components[name])
            if not self.lows[pos] <= value <= self.highs[pos]:
                raise ValidationError(f"{name} out of range", field=name, value=value)
            offsets.append(value - self.lows[pos])
        return int(np.ravel_multi_index(tuple(offsets), self.shape))

    def state(self, index: int) -> Dict[str, int]:
        """Component values of a state index."""
        return {name: int(v) for name, v in zip(self.names, self._values[index])}

    def component(self, name: str) -> np.ndarray:
        """Per-state values of one component."""
        return self._values[:, self.names.index(name)]

    @property
    def values(self) -> np.ndarray:
        """Array of shape (n_states, n_components)."""
        return self._values

    @property
    def delta(self) -> np.ndarray:
        return self.component(self.age)

    @property
    def contexts(self) -> np.ndarray:
        if self.context is None:
            return np.zeros(self.n_states, dtype=int)
        return self.component(self.context)

    def threshold_groups(self) -> Iterator[Tuple[object, np.ndarray, np.ndarray]]:
        """Yield (key, state indices, ages) for every fixed non-age context.

        Indices are ordered by increasing age. The key is the single
        non-age value when there is one, else a tuple in component order.
        """
        age_pos = self.names.index(self.age)
        others = [i for i in range(len(self.names)) if i != age_pos]
        ages = np.arange(self.lows[age_pos], self.highs[age_pos] + 1)
        for combo in itertools.product(
            *(range(self.lows[i], self.highs[i] + 1) for i in others)
        ):
            fixed = {self.names[i]: v for i, v in zip(others, combo)}
            if any(fixed.get(k) == v for k, v in self.threshold_exclude.items()):
                continue
            indices = np.array([self.index(**fixed, **{self.age: int(a)}) for a in ages])
            key = combo[0] if len(combo) == 1 else tuple(combo)
            yield key, indices, ages


class TransitionBuilder:
    """Collects (state, action, successor, probability) entries.

    Repeated (state, action, successor) entries are summed, which is how
    saturating counters merge their branches.
    """

    def __init__(self, n_states: int, n_actions: int = 2):
        self.n_states = n_states
        self.n_actions = n_actions
        self._rows: List[List[int]] = [[] for _ in range(n_actions)]
        self._cols: List[List[int]] = [[] for _ in range(n_actions)]
        self._probs: List[List[float]] = [[] for _ in range(n_actions)]

    def add(self, s: int, a: int, successor: int, p: float) -> None:
        if p == 0.0:
            return
        self._rows[a].append(s)
        self._cols[a].append(successor)
        self._probs[a].append(p)

    def build(self) -> List[sp.csr_matrix]:
        shape = (self.n_states, self.n_states)
        return [
            sp.coo_matrix((self._probs[a], (self._rows[a], self._cols[a])), shape=shape).tocsr()
            for a in range(self.n_actions)
        ]


class FiniteMdp:
    """
    Finite MDP with sparse transitions, a cost table and an action mask.

    Instances are immutable after construction: arrays are read-only and
    the transition matrices are never modified.

    Attributes:
        n_states: Number of states
        n_actions: Number of actions
        transitions: One CSR matrix of shape (n_states, n_states) per action
        cost: Array of shape (n_states, n_actions)
        action_mask: Boolean array of shape (n_states, n_actions)
        layout: Optional state indexing used by verifiers and the simulator
    """

    def __init__(
        self,
        transitions: Sequence[sp.spmatrix],
        cost: np.ndarray,
        action_mask: Optional[np.ndarray] = None,
        layout: Optional[GridLayout] = None,
        name: str = "mdp",
    ):
        self.name = name
        self.transitions: Tuple[sp.csr_matrix, ...] = tuple(
            sp.csr_matrix(P, dtype=float, copy=True) for P in transitions
        )
        for P in self.transitions:
            P.eliminate_zeros()
        self.n_actions = len(self.transitions)
        if self.n_actions < 1:
            raise ValidationError("an MDP needs at least one action", field="transitions")
        self.n_states = self.transitions[0].shape[0]

        cost = np.array(cost, dtype=float)
        mask = (
            np.ones((self.n_states, self.n_actions), dtype=bool)
            if action_mask is None
            else np.array(action_mask, dtype=bool)
        )
        self._validate(cost, mask, layout)
        # masked entries never enter a backup
        cost = np.where(mask, cost, 0.0)

        cost.setflags(write=False)
        mask.setflags(write=False)
        self.cost = cost
        self.action_mask = mask
        self.layout = layout
        self._successor_table: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __repr__(self) -> str:
        return (
            f"FiniteMdp(name={self.name!r}, n_states={self.n_states}, "
            f"n_actions={self.n_actions})"
        )

    def _validate(self, cost: np.ndarray, mask: np.ndarray,
                  layout: Optional[GridLayout]) -> None:
        n, m = self.n_states, self.n_actions
        for P in self.transitions:
            if P.shape != (n, n):
                raise ValidationError("transition matrices must be square and equal-sized",
                                      field="transitions", value=P.shape)
            if P.nnz and (P.data.min() < 0.0 or P.data.max() > 1.0 + ROW_SUM_TOL):
                raise ValidationError("probabilities must lie in [0, 1]", field="transitions")
        if cost.shape != (n, m):
            raise ValidationError("cost must have shape (n_states, n_actions)",
                                  field="cost", value=cost.shape)
        if mask.shape != (n, m):
            raise ValidationError("action_mask must have shape (n_states, n_actions)",
                                  field="action_mask", value=mask.shape)
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            raise ValidationError("every state needs an allowed action",
                                  field="action_mask", value=int(empty[0]))
        allowed_cost = cost[mask]
        if not np.all(np.isfinite(allowed_cost)) or np.any(allowed_cost < 0):
            raise ValidationError("costs must be finite and nonnegative", field="cost")
        for a, P in enumerate(self.transitions):
            sums = np.asarray(P.sum(axis=1)).ravel()
            bad = np.flatnonzero(mask[:, a] & (np.abs(sums - 1.0) > ROW_SUM_TOL))
            if bad.size:
                raise ValidationError(
                    f"row ({int(bad[0])}, {a}) sums to {sums[bad[0]]!r}, not 1",
                    field="transitions",
                )
        if layout is not None and layout.n_states != n:
            raise LayoutMismatchError(
                f"layout has {layout.n_states} states, model has {n}"
            )

    def successors(self, s: int, a: int) -> List[Tuple[int, float]]:
        """Sparse successor list of (state, action)."""
        P = self.transitions[a]
        start, end = P.indptr[s], P.indptr[s + 1]
        return [(int(j), float(p)) for j, p in zip(P.indices[start:end], P.data[start:end])]

    def allowed_actions(self, s: int) -> List[int]:
        return [int(a) for a in np.flatnonzero(self.action_mask[s])]

    def q_values(self, V: np.ndarray) -> np.ndarray:
        """Q(s, a) = C(s, a) + sum_s' P(s'|s, a) V(s'); +inf on masked pairs."""
        Q = np.column_stack([P @ V for P in self.transitions]) + self.cost
        return np.where(self.action_mask, Q, np.inf)

    def with_cost(self, cost: np.ndarray, name: Optional[str] = None) -> "FiniteMdp":
        """Same dynamics, different cost table."""
        return FiniteMdp(self.transitions, cost, self.action_mask, self.layout,
                         name=name or self.name)

    def check_policy(self, policy: np.ndarray) -> np.ndarray:
        policy = np.asarray(policy)
        if policy.shape != (self.n_states,):
            raise LayoutMismatchError(
                f"policy covers {policy.size} states, model has {self.n_states}"
            )
        if policy.min() < 0 or policy.max() >= self.n_actions:
            raise ValidationError("policy selects an unknown action", field="policy")
        policy = policy.astype(int)
        allowed = self.action_mask[np.arange(self.n_states), policy]
        if not allowed.all():
            s = int(np.flatnonzero(~allowed)[0])
            raise ValidationError(
                f"policy selects masked action {int(policy[s])} in state {s}",
                field="policy", value=s,
            )
        return policy

    def policy_matrix(self, policy: np.ndarray) -> sp.csr_matrix:
        """Transition matrix of the chain induced by a deterministic policy."""
        policy = self.check_policy(policy)
        P = sp.csr_matrix((self.n_states, self.n_states))
        for a, Pa in enumerate(self.transitions):
            select = sp.diags((policy == a).astype(float))
            P = P + select @ Pa
        P = sp.csr_matrix(P)
        P.eliminate_zeros()
        return P

    def successor_table(self) -> Tuple[np.ndarray, np.ndarray]:
        """Padded successor and cumulative-probability tables for sampling.

        Row ``s * n_actions + a`` lists the successors of (s, a); padding
        repeats the last successor with cumulative probability +inf.
        """
        if self._successor_table is None:
            width = max(int(np.diff(P.indptr).max(initial=0)) for P in self.transitions)
            width = max(width, 1)
            rows = self.n_states * self.n_actions
            succ = np.zeros((rows, width), dtype=np.int64)
            cum = np.full((rows, width), np.inf)
            for a, P in enumerate(self.transitions):
                for s in range(self.n_states):
                    start, end = P.indptr[s], P.indptr[s + 1]
                    if start == end:
                        succ[s * self.n_actions + a, :] = s
                        continue
                    k = end - start
                    row = s * self.n_actions + a
                    succ[row, :k] = P.indices[start:end]
                    succ[row, k:] = P.indices[end - 1]
                    cum[row, :k] = np.cumsum(P.data[start:end])
                    cum[row, k - 1] = np.inf
            succ.setflags(write=False)
            cum.setflags(write=False)
            self._successor_table = (succ, cum)
        return self._successor_table


def greedy_policy(Q: np.ndarray, tie_tolerance: float = 1e-9) -> np.ndarray:
    """Smallest action index whose Q value is within tolerance of the minimum."""
    best = Q.min(axis=1)
    return np.argmax(Q <= best[:, None] + tie_tolerance, axis=1).astype(int)


def bellman_backup(
    mdp: FiniteMdp,
    V: np.ndarray,
    s: int,
    tie_tolerance: float = 1e-9,
) -> Tuple[float, int]:
    """
    One-state Bellman backup.

    Args:
        mdp: The model
        V: Value for every state
        s: State to back up
        tie_tolerance: Actions within this distance of the minimum count as tied

    Returns:
        Tuple of (minimum expected cost-to-go, minimizing action); ties go
        to the smaller action index
    """
    V = np.asarray(V, dtype=float)
    if V.shape != (mdp.n_states,):
        raise ValidationError("V must have one entry per state", field="V")
    if not 0 <= s < mdp.n_states:
        raise ValidationError("state out of range", field="s", value=s)
    best_value, best_action = np.inf, -1
    for a in mdp.allowed_actions(s):
        value = mdp.cost[s, a] + sum(p * V[j] for j, p in mdp.successors(s, a))
        if value < best_value - tie_tolerance:
            best_value, best_action = value, a
    return float(best_value), best_action


@log_function_call
def rvia(
    mdp: FiniteMdp,
    cfg: Optional[SolverConfig] = None,
    initial_values: Optional[np.ndarray] = None,
) -> SolveResult:
    """
    Relative value iteration for the average-cost criterion.

    Sweeps run on the lazy chain P' = tau I + (1 - tau) P with
    tau = cfg.aperiodicity, which has the same average cost and the same
    optimal policies as P but no periodic classes; its bias is the bias of
    P scaled by 1 / (1 - tau). Each sweep computes v_t = T' W_{t-1} and
    normalizes W_t = v_t - v_t(ref). The loop stops once the span of
    W_t - W_{t-1} drops below eps_v.

    Args:
        mdp: The model
        cfg: Solver settings (defaults if omitted)
        initial_values: Optional V_0; shifted so that V_0(ref) = 0

    Returns:
        SolveResult with J = v_t(ref), V = (1 - tau) W_t and the policy
        greedy for V

    Raises:
        NonConvergenceError: If max_iterations sweeps do not reach eps_v
    """
    cfg = cfg or SolverConfig()
    ref = cfg.ref_state
    if ref >= mdp.n_states:
        raise ValidationError("ref_state out of range", field="ref_state", value=ref)
    tau = cfg.aperiodicity
    scale = 1.0 - tau

    if initial_values is None:
        W = np.zeros(mdp.n_states)
    else:
        W = np.array(initial_values, dtype=float)
        if W.shape != (mdp.n_states,):
            raise ValidationError("initial_values must have one entry per state",
                                  field="initial_values")
        W = (W - W[ref]) / scale

    span = np.inf
    for t in range(1, cfg.max_iterations + 1):
        # C + tau W + (1 - tau) P W, written through the plain backup
        v = (mdp.q_values(scale * W) + tau * W[:, None]).min(axis=1)
        W_new = v - v[ref]
        diff = W_new - W
        span = float(diff.max() - diff.min())
        W = W_new
        if span < cfg.eps_v:
            V = scale * W
            policy = greedy_policy(mdp.q_values(V), cfg.tie_tolerance)
            logger.debug(f"{mdp.name}: converged after {t} sweeps, J={v[ref]:.6f}")
            return SolveResult(
                J=float(v[ref]), V=V, policy=policy, n_iterations=t, residual_span=span
            )

    raise NonConvergenceError(
        f"RVIA on {mdp.name} did not converge in {cfg.max_iterations} sweeps",
        iterations=cfg.max_iterations,
        span=span,
    )


def _closed_classes(graph: sp.csr_matrix) -> Tuple[np.ndarray, np.ndarray]:
    """Strong-component labels and the labels of components with no exit."""
    graph = sp.csr_matrix(graph)
    graph.eliminate_zeros()
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    coo = graph.tocoo()
    crossing = labels[coo.row] != labels[coo.col]
    leaving = np.zeros(n_comp, dtype=bool)
    leaving[labels[coo.row[crossing]]] = True
    return labels, np.flatnonzero(~leaving)


def _solve(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    if A.shape[0] <= DENSE_SOLVE_LIMIT:
        return np.linalg.solve(A.toarray(), b)
    return spla.spsolve(sp.csc_matrix(A), b)


def stationary_distribution(mdp: FiniteMdp, policy: np.ndarray) -> np.ndarray:
    """
    Stationary distribution of the chain induced by a deterministic policy.

    Raises:
        MultiChainError: If the chain has more than one recurrent class
    """
    P = mdp.policy_matrix(policy)
    labels, closed = _closed_classes(P)
    if closed.size != 1:
        raise MultiChainError(
            f"policy on {mdp.name} induces {closed.size} recurrent classes",
            n_classes=int(closed.size),
        )
    recurrent = np.flatnonzero(labels == closed[0])
    m = recurrent.size
    Q = P[recurrent][:, recurrent]
    # mu (Q - I) = 0 with the last balance equation replaced by sum(mu) = 1
    A = sp.vstack([(Q.T - sp.identity(m, format="csr"))[:-1], sp.csr_matrix(np.ones((1, m)))])
    b = np.zeros(m)
    b[-1] = 1.0
    mu_rec = _solve(A, b)
    mu = np.zeros(mdp.n_states)
    mu[recurrent] = mu_rec
    return mu


def _per_state(mdp: FiniteMdp, policy: np.ndarray, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape == (mdp.n_states,):
        return g
    if g.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError("g must have shape (n_states,) or (n_states, n_actions)",
                              field="g", value=g.shape)
    return g[np.arange(mdp.n_states), policy]


def long_run_average(mdp: FiniteMdp, policy: np.ndarray, g: np.ndarray) -> float:
    """
    Exact long-run average of g under a deterministic policy.

    Args:
        mdp: The model
        policy: Action per state
        g: Reward per (state, action), or per state

    Returns:
        sum_s mu(s) g(s, policy(s)) for the stationary distribution mu
    """
    policy = mdp.check_policy(policy)
    mu = stationary_distribution(mdp, policy)
    return float(mu @ _per_state(mdp, policy, g))


def evaluate_policy(
    mdp: FiniteMdp,
    policy: np.ndarray,
    cfg: Optional[SolverConfig] = None,
    g: Optional[np.ndarray] = None,
) -> SolveResult:
    """
    Average cost and bias of a deterministic unichain policy.

    Solves J + V(s) = g(s) + sum_s' P(s'|s) V(s') with V(ref) = 0 directly.
    """
    cfg = cfg or SolverConfig()
    policy = mdp.check_policy(policy)
    P = mdp.policy_matrix(policy)
    _, closed = _closed_classes(P)
    if closed.size != 1:
        raise MultiChainError(
            f"policy on {mdp.name} induces {closed.size} recurrent classes",
            n_classes=int(closed.size),
        )
    c = _per_state(mdp, policy, mdp.cost if g is None else g)
    ref = cfg.ref_state
    # V(ref) = 0, so column ref of (I - P) is free to carry J instead
    A = (sp.identity(mdp.n_states, format="csr") - P).tolil()
    A[:, ref] = 1.0
    x = _solve(A.tocsr(), c)
    J = float(x[ref])
    V = x.copy()
    V[ref] = 0.0
    return SolveResult(J=J, V=V, policy=policy, n_iterations=1, residual_span=0.0)


@log_function_call
def enumerate_optimal_policy(
    mdp: FiniteMdp,
    cfg: Optional[SolverConfig] = None,
    limit: int = ENUMERATION_LIMIT,
) -> SolveResult:
    """
    Brute-force optimum over all deterministic mask-respecting policies.

    Policies are visited in lexicographic order (state 0 most significant,
    actions ascending) and the first minimizer is kept.

    Raises:
        TooLargeError: If the number of policies exceeds ``limit``
        MultiChainError: If any enumerated policy is multichain
    """
    choices = [mdp.allowed_actions(s) for s in range(mdp.n_states)]
    count = 1
    for options in choices:
        count *= len(options)
        if count > limit:
            raise TooLargeError(
                f"{mdp.name} has more than {limit} deterministic policies",
                size=count, limit=limit,
            )

    best_J, best_policy = np.inf, None
    for combo in itertools.product(*choices):
        policy = np.array(combo, dtype=int)
        J = long_run_average(mdp, policy, mdp.cost)
        if J < best_J - 1e-12:
            best_J, best_policy = J, policy

    assert best_policy is not None
    result = evaluate_policy(mdp, best_policy, cfg)
    logger.debug(f"{mdp.name}: enumerated {count} policies, J*={result.J:.9f}")
    return SolveResult(
        J=result.J, V=result.V, policy=result.policy, n_iterations=count,
        residual_span=0.0,
    )


def check_weak_accessibility(mdp: FiniteMdp) -> bool:
    """
    True iff the states that are not transient form a single class.

    Uses the graph of transitions possible under the uniform randomized
    policy over allowed actions.
    """
    graph = sp.csr_matrix((mdp.n_states, mdp.n_states))
    for a, P in enumerate(mdp.transitions):
        graph = graph + sp.diags(mdp.action_mask[:, a].astype(float)) @ P
    _, closed = _closed_classes(sp.csr_matrix(graph))
    return bool(closed.size == 1)

