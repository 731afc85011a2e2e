"""Cooperative benchmark: one planner controls both forwarders.

The planner minimizes the weighted total cost gamma*J1 + (1-gamma)*J2 by
choosing a joint action per state.  Once a forwarder is alone the weighted
problem is a positive scaling of the single-agent one, so the lone chains
are solved exactly up front; their expectations make the stop-one-side
costs A_i (forwarder 1 stops) and B_j (forwarder 2 stops) fixed numbers,
and the only remaining unknown is the scalar expectation of the two-active
value table under the joint reward draw.  Value iteration therefore runs
on that single scalar.

The simultaneous joint stop is excluded from the minimization: under the
contention tiebreak its cost is the nu-mixture of the two one-sided stops
and can never beat their minimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .cogame import NonConvergenceError, PolicyPairCO, evaluate_policy_pair
from .rewards import RewardModel
from .stopping import GameConfig, solve_threshold

__all__ = ["CoopSolution", "coop_value_iteration", "pareto_sweep"]

ACTION_STOP_CONTINUE = "sc"
ACTION_CONTINUE_STOP = "cs"
ACTION_CONTINUE_BOTH = "cc"


@dataclass(frozen=True)
class CoopSolution:
    gamma: float
    value_two: np.ndarray
    value_lone_1: np.ndarray
    value_lone_2: np.ndarray
    action: np.ndarray
    policy: PolicyPairCO
    cost_pair: Tuple[float, float]
    e_joint: float
    iterations: int
    residual: float


def coop_value_iteration(
    model: RewardModel,
    config: GameConfig,
    gamma: float,
    tol: float = 1e-10,
    max_iters: int = 500_000,
) -> CoopSolution:
    """Optimal joint policy for one weight, with its evaluated cost pair.

    Joint actions on two-active states are restricted to (s,c), (c,s) and
    (c,c); argmin ties resolve in that order.  Lone-chain behavior is the
    single-agent threshold rule for any gamma.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie strictly inside (0, 1)")
    sol_1 = solve_threshold(model.marginal_pmf(1), config, 1)
    sol_2 = solve_threshold(model.marginal_pmf(2), config, 2)
    d1, d2 = sol_1.d_cost, sol_2.d_cost
    tau = config.mean_interarrival_s
    n = model.n
    r = np.concatenate(([0.0], model.feasible_values))

    # Weighted lone-chain values; the sentinel forces the continue branch.
    lone_1 = gamma * np.minimum(-config.tradeoff_1 * r, d1)
    lone_1[0] = gamma * d1
    lone_2 = (1.0 - gamma) * np.minimum(-config.tradeoff_2 * r, d2)
    lone_2[0] = (1.0 - gamma) * d2

    # One-sided stop costs: the stopper collects its weighted reward and
    # the survivor's chain contributes its weighted lone start cost D.
    stop_1 = gamma * (-config.tradeoff_1 * r) + (1.0 - gamma) * d2
    stop_1[0] = np.inf
    stop_2 = gamma * d1 + (1.0 - gamma) * (-config.tradeoff_2 * r)
    stop_2[0] = np.inf

    order = np.argsort(stop_2)
    b_sorted = stop_2[order]
    p_perm = model.joint[:, order]
    prefix_p = np.zeros((n, n + 1))
    prefix_p[:, 1:] = np.cumsum(p_perm, axis=1)
    b_safe = np.where(np.isfinite(b_sorted), b_sorted, 0.0)
    prefix_pb = np.zeros((n, n + 1))
    prefix_pb[:, 1:] = np.cumsum(p_perm * b_safe[None, :], axis=1)
    row_mass = prefix_p[:, -1]
    rows = np.arange(n)

    e_joint = 0.0
    residual = np.inf
    for iteration in range(1, max_iters + 1):
        cont = tau + e_joint
        m = np.minimum(stop_1, cont)
        k = np.searchsorted(b_sorted, m, side="left")
        take_b = prefix_pb[rows, k]
        rest = row_mass - prefix_p[rows, k]
        e_next = float(take_b.sum() + (m * rest).sum())
        residual = abs(e_next - e_joint)
        e_joint = e_next
        if residual <= tol:
            break
    else:
        raise NonConvergenceError(
            "cooperative scalar value iteration did not converge",
            [residual],
        )

    cont = tau + e_joint
    value_two = np.minimum(np.minimum(stop_1[:, None], stop_2[None, :]), cont)
    choose_sc = stop_1[:, None] <= np.minimum(stop_2[None, :], cont)
    choose_cs = ~choose_sc & (stop_2[None, :] <= cont)
    action = np.full((n, n), ACTION_CONTINUE_BOTH, dtype="<U2")
    action[choose_cs] = ACTION_CONTINUE_STOP
    action[choose_sc] = ACTION_STOP_CONTINUE

    lone_stop_1 = np.concatenate(
        ([0.0], (model.feasible_values >= sol_1.alpha).astype(float))
    )
    lone_stop_2 = np.concatenate(
        ([0.0], (model.feasible_values >= sol_2.alpha).astype(float))
    )
    policy = PolicyPairCO(
        stop_prob_1=choose_sc.astype(float),
        stop_prob_2=choose_cs.astype(float),
        lone_stop_1=lone_stop_1,
        lone_stop_2=lone_stop_2,
    )
    values = evaluate_policy_pair(policy, model, config)
    return CoopSolution(
        gamma=gamma,
        value_two=value_two,
        value_lone_1=lone_1,
        value_lone_2=lone_2,
        action=action,
        policy=policy,
        cost_pair=values.cost_pair,
        e_joint=e_joint,
        iterations=iteration,
        residual=residual,
    )


def pareto_sweep(
    model: RewardModel,
    config: GameConfig,
    gamma_grid,
    tol: float = 1e-10,
) -> List[Tuple[float, Tuple[float, float]]]:
    """Cost pairs of the optimal joint policies over a grid of weights.

    Sorted by gamma; points whose cost pair repeats an earlier one are
    dropped.
    """
    grid = [float(g) for g in gamma_grid]
    if not grid:
        raise ValueError("gamma grid must be nonempty")
    if any(not 0.0 < g < 1.0 for g in grid):
        raise ValueError("gamma grid must lie strictly inside (0, 1)")
    points = []
    seen = set()
    for gamma in sorted(grid):
        solution = coop_value_iteration(model, config, gamma, tol=tol)
        if solution.cost_pair in seen:
            continue
        seen.add(solution.cost_pair)
        points.append((gamma, solution.cost_pair))
    return points
