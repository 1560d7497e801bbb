"""
Structural checks on solved token models: threshold form of a policy and
monotonicity of the update advantage DV.
"""
from typing import Sequence, Union

import numpy as np

from .exceptions import LayoutMismatchError, ValidationError
from .mdp import FiniteMdp, GridLayout
from .models import NotThreshold, SolveResult, ThresholdProfile


def extract_threshold_profile(
    result: Union[SolveResult, np.ndarray],
    layout: GridLayout,
) -> Union[ThresholdProfile, NotThreshold]:
    """
    Read per-context age thresholds off a policy.

    For each context (every combination of the non-age components, minus
    the layout's excluded ones) the policy must update exactly at the ages
    at or above some threshold. A context that never updates gets the
    threshold ``max age + 1``.

    Args:
        result: Solved model or a bare policy array
        layout: Indexing of the model the policy belongs to

    Returns:
        ThresholdProfile, or NotThreshold with the first violating pair
    """
    policy = np.asarray(result.policy if isinstance(result, SolveResult) else result)
    if policy.shape != (layout.n_states,):
        raise LayoutMismatchError(
            f"policy covers {policy.size} states, layout has {layout.n_states}"
        )

    thresholds = {}
    for key, indices, ages in layout.threshold_groups():
        actions = policy[indices]
        updates = np.flatnonzero(actions == 1)
        if updates.size == 0:
            thresholds[key] = int(ages[-1]) + 1
            continue
        first = updates[0]
        idle_after = np.flatnonzero(actions[first:] == 0)
        if idle_after.size:
            return NotThreshold(
                context=key,
                delta_update=int(ages[first]),
                delta_idle=int(ages[first + idle_after[0]]),
            )
        thresholds[key] = int(ages[first])
    return ThresholdProfile(thresholds=thresholds)


def dv_profile(mdp: FiniteMdp, V: np.ndarray, b: int) -> np.ndarray:
    """
    Update advantage DV(b, delta) = V1(b, delta) - V0(b, delta) over all ages.

    V^a is the expected next-slot value after action a; the cost is common
    to both actions and cancels. DV(b, 0) is 0 by construction.

    Args:
        mdp: Single-rate AoII token model (layout components b, delta)
        V: Converged differential values
        b: Token level, at least 1

    Returns:
        Array indexed by delta
    """
    layout = mdp.layout
    if layout is None or layout.names != ("b", "delta"):
        raise LayoutMismatchError("dv_profile needs a (b, delta) token layout")
    if b < 1 or b > layout.highs[0]:
        raise ValidationError("b must lie in [1, b_max]", field="b", value=b)
    V = np.asarray(V, dtype=float)

    delta_max = int(layout.highs[1])
    rows = np.array([layout.index(b=b, delta=d) for d in range(delta_max + 1)])
    v_idle = mdp.transitions[0][rows] @ V
    v_update = mdp.transitions[1][rows] @ V
    dv = v_update - v_idle
    dv[0] = 0.0
    return dv


def is_nonincreasing(values: Sequence[float], tol: float = 1e-8) -> bool:
    """True when every later value is at most any earlier one plus tol."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return True
    running_min = np.minimum.accumulate(values)
    return bool(np.all(values <= running_min + tol))
