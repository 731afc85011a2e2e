"""Completely observable two-forwarder stochastic game.

Both forwarders see the whole reward pair at every relay arrival.  Each
reward pair (r_i, r_j) induces a 2x2 stage game whose entries are built
from the pair of continuing-together costs C = (C1, C2) and the certified
lone-forwarder costs D = (D1, D2).  The reward plane splits into five
regions by the thresholds

    zeta_rho  = C_rho / (-eta_rho)      alpha_rho = D_rho / (-eta_rho)

and each region pins down the stage-game Nash equilibria: both continue in
R1, one forwarder stops in R2/R3, both stop in R5, and R4 supports two
pure equilibria plus a mixed one.  Sweeping the stage values through the
reward distribution gives the T-map whose fixed point C certifies a Nash
equilibrium policy pair; the three fixed-point families differ only in
which R4 equilibrium they play.

The module also evaluates arbitrary stationary policy pairs (used for the
simple-policy benchmark and the cooperative solutions) and verifies solved
equilibria by solving each opponent's best-response MDP from scratch.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .rewards import INFEASIBLE, RewardModel, is_infeasible
from .stopping import GameConfig, solve_threshold

__all__ = [
    "FAMILIES",
    "NonConvergenceError",
    "Thresholds",
    "StageGame",
    "PureNE",
    "MixedNE",
    "PolicyPairCO",
    "PolicyValues",
    "CoNeppSolution",
    "VerifyReport",
    "contended_stop_cost",
    "build_stage_game",
    "thresholds_from_costs",
    "classify_region",
    "mixed_strategy_probs",
    "region_equilibria",
    "stage_nash_oracle",
    "apply_T",
    "solve_nepp",
    "assemble_solution",
    "evaluate_policy_pair",
    "verify_nepp",
]

FAMILIES = ("SC", "CS", "MIXED")

_CONT, _STOP = 0, 1


class NonConvergenceError(RuntimeError):
    """Fixed-point iteration ran out of iterations.

    Carries the trailing residuals so the caller can see whether the
    iteration was diverging, cycling, or merely slow.
    """

    def __init__(self, message: str, residual_trace):
        self.residual_trace = tuple(residual_trace)
        tail = ", ".join(f"{r:.3e}" for r in self.residual_trace[-5:])
        super().__init__(f"{message} (trailing residuals: {tail})")


def contended_stop_cost(reward: float, d_cost: float, eta: float, win_prob: float) -> float:
    """Expected cost of stopping when the opponent stops too.

    With probability ``win_prob`` the forwarder wins the relay and pays
    -eta*reward; otherwise it continues alone at cost ``d_cost``.
    """
    return win_prob * (-eta * reward) + (1.0 - win_prob) * d_cost


@dataclass(frozen=True)
class Thresholds:
    zeta_1: float
    alpha_1: float
    zeta_2: float
    alpha_2: float

    def for_forwarder(self, index: int) -> Tuple[float, float]:
        if index == 1:
            return self.zeta_1, self.alpha_1
        if index == 2:
            return self.zeta_2, self.alpha_2
        raise ValueError("forwarder index must be 1 or 2")


def thresholds_from_costs(cost_pair, d_costs, config: GameConfig) -> Thresholds:
    return Thresholds(
        zeta_1=cost_pair[0] / -config.tradeoff_1,
        alpha_1=d_costs[0] / -config.tradeoff_1,
        zeta_2=cost_pair[1] / -config.tradeoff_2,
        alpha_2=d_costs[1] / -config.tradeoff_2,
    )


@dataclass(frozen=True)
class StageGame:
    """2x2 cost bimatrix at one reward pair; row/column 0 is c, 1 is s.

    ``cost_1[a1, a2]`` is forwarder 1's expected total cost when the
    players choose actions (a1, a2).  A forwarder whose own reward is
    INFEASIBLE has its stop row/column marked forbidden; the corresponding
    entries are NaN and must never be compared.
    """

    cost_1: np.ndarray
    cost_2: np.ndarray
    stop_forbidden_1: bool
    stop_forbidden_2: bool


def build_stage_game(r_i, r_j, cost_pair, d_costs, config: GameConfig) -> StageGame:
    c1, c2 = float(cost_pair[0]), float(cost_pair[1])
    d1, d2 = float(d_costs[0]), float(d_costs[1])
    forbidden_1 = is_infeasible(r_i)
    forbidden_2 = is_infeasible(r_j)
    stop_1 = np.nan if forbidden_1 else -config.tradeoff_1 * r_i
    stop_2 = np.nan if forbidden_2 else -config.tradeoff_2 * r_j
    e1 = np.nan if forbidden_1 else contended_stop_cost(
        r_i, d1, config.tradeoff_1, config.win_prob_1
    )
    e2 = np.nan if forbidden_2 else contended_stop_cost(
        r_j, d2, config.tradeoff_2, config.win_prob_2
    )
    cost_1 = np.array([[c1, d1], [stop_1, e1]])
    cost_2 = np.array([[c2, stop_2], [d2, e2]])
    return StageGame(
        cost_1=cost_1,
        cost_2=cost_2,
        stop_forbidden_1=forbidden_1,
        stop_forbidden_2=forbidden_2,
    )


def _band(reward, zeta: float, alpha: float) -> int:
    """0 below zeta, 1 on [zeta, alpha], 2 above alpha; sentinel is below."""
    if is_infeasible(reward):
        return 0
    if reward < zeta:
        return 0
    if reward <= alpha:
        return 1
    return 2


_REGION_BY_BAND = (
    ("R1", "R3", "R3"),
    ("R2", "R4", "R3"),
    ("R2", "R2", "R5"),
)


def classify_region(r_i, r_j, thresholds: Thresholds) -> str:
    """Region label R1..R5 of a reward pair under the given thresholds."""
    if thresholds.zeta_1 > thresholds.alpha_1 or thresholds.zeta_2 > thresholds.alpha_2:
        raise ValueError("thresholds unordered: zeta must not exceed alpha")
    band_1 = _band(r_i, thresholds.zeta_1, thresholds.alpha_1)
    band_2 = _band(r_j, thresholds.zeta_2, thresholds.alpha_2)
    return _REGION_BY_BAND[band_1][band_2]


def mixed_strategy_probs(r_i, r_j, cost_pair, d_costs, config: GameConfig):
    """Stop probabilities (Gamma_1, Gamma_2) of the mixed stage equilibrium.

    Gamma_1, forwarder 1's stop probability, is set by forwarder 2's
    indifference and therefore built from forwarder 2 quantities (and vice
    versa).  Numerator and gap are evaluated in the factored forms
    eta * (zeta - r) and nu * eta * (alpha - r), with zeta and alpha
    computed by the same expressions as thresholds_from_costs; both factors
    vanish exactly when r sits on its band edge, so the boundary identities
    Gamma(zeta) = 0 and Gamma(alpha) = 1 are exact in floating point for
    any tradeoff value.
    """
    if is_infeasible(r_i) or is_infeasible(r_j):
        raise ValueError("mixed strategies are undefined at INFEASIBLE rewards")
    num_2 = config.tradeoff_2 * (cost_pair[1] / -config.tradeoff_2 - r_j)
    gap_2 = config.win_prob_2 * config.tradeoff_2 * (
        d_costs[1] / -config.tradeoff_2 - r_j
    )
    den_2 = num_2 - gap_2
    num_1 = config.tradeoff_1 * (cost_pair[0] / -config.tradeoff_1 - r_i)
    gap_1 = config.win_prob_1 * config.tradeoff_1 * (
        d_costs[0] / -config.tradeoff_1 - r_i
    )
    den_1 = num_1 - gap_1
    if den_2 == 0.0 or den_1 == 0.0:
        raise ValueError(
            "degenerate stage game: mixed-strategy denominator vanished "
            "(requires D < C strictly and win_prob_1 in (0, 1))"
        )
    gamma_1 = num_2 / den_2
    gamma_2 = num_1 / den_1
    return min(max(gamma_1, 0.0), 1.0), min(max(gamma_2, 0.0), 1.0)


PureNE = namedtuple("PureNE", ["action_1", "action_2"])
MixedNE = namedtuple("MixedNE", ["stop_prob_1", "stop_prob_2"])

_ACTION_NAME = ("c", "s")


def region_equilibria(r_i, r_j, cost_pair, d_costs, config: GameConfig):
    """Stage-game NE set implied by the region of (r_i, r_j)."""
    thresholds = thresholds_from_costs(cost_pair, d_costs, config)
    region = classify_region(r_i, r_j, thresholds)
    if region == "R1":
        return (PureNE("c", "c"),)
    if region == "R2":
        return (PureNE("s", "c"),)
    if region == "R3":
        return (PureNE("c", "s"),)
    if region == "R5":
        return (PureNE("s", "s"),)
    gamma_1, gamma_2 = mixed_strategy_probs(r_i, r_j, cost_pair, d_costs, config)
    return (PureNE("c", "s"), PureNE("s", "c"), MixedNE(gamma_1, gamma_2))


def _pure_best_responses(costs: np.ndarray, forbidden: bool, axis: int):
    """Best-response action sets of one player against each opponent action.

    ``axis`` is the opponent's axis in that player's cost table.
    """
    table = []
    for opp in (0, 1):
        own = costs[:, opp] if axis == 1 else costs[opp, :]
        if forbidden:
            table.append((_CONT,))
            continue
        if own[_CONT] < own[_STOP]:
            table.append((_CONT,))
        elif own[_STOP] < own[_CONT]:
            table.append((_STOP,))
        else:
            table.append((_CONT, _STOP))
    return table

def stage_nash_oracle(game: StageGame):
    """All Nash equilibria of a 2x2 stage game by direct enumeration.

    Pure equilibria come from tie-aware best-response tables; the strictly
    mixed equilibrium is added when both players' preferences reverse
    across the opponent's actions.  A fully indifferent player yields the
    whole family of pure profiles consistent with the opponent's best
    responses, and no interior point is reported for it.
    """
    br_1 = _pure_best_responses(game.cost_1, game.stop_forbidden_1, axis=1)
    br_2 = _pure_best_responses(game.cost_2, game.stop_forbidden_2, axis=0)
    equilibria = []
    for a1 in (0, 1):
        for a2 in (0, 1):
            if a1 in br_1[a2] and a2 in br_2[a1]:
                equilibria.append(PureNE(_ACTION_NAME[a1], _ACTION_NAME[a2]))

    if not game.stop_forbidden_1 and not game.stop_forbidden_2:
        # Player 1 indifference requires opponent stop-probability q2 with
        # (1-q2)*delta_c = q2*delta_s; interior solutions need both deltas
        # strictly of the same sign.
        d1_c = game.cost_1[_CONT, 0] - game.cost_1[_STOP, 0]
        d1_s = game.cost_1[_STOP, 1] - game.cost_1[_CONT, 1]
        d2_c = game.cost_2[0, _CONT] - game.cost_2[0, _STOP]
        d2_s = game.cost_2[1, _STOP] - game.cost_2[1, _CONT]
        if (d1_c * d1_s > 0.0) and (d2_c * d2_s > 0.0):
            q2 = d1_c / (d1_c + d1_s)
            q1 = d2_c / (d2_c + d2_s)
            if 0.0 < q1 < 1.0 and 0.0 < q2 < 1.0:
                equilibria.append(MixedNE(q1, q2))
    return tuple(equilibria)


class _TContext:
    """Prefix-sum machinery making one T application O(n) instead of O(n^2)."""

    def __init__(self, model: RewardModel, config: GameConfig):
        self.config = config
        self.values = model.feasible_values
        n = model.n
        self.n = n
        joint = model.joint
        self.row_prefix = np.zeros((n, n + 1))
        self.row_prefix[:, 1:] = np.cumsum(joint, axis=1)
        self.col_prefix = np.zeros((n + 1, n))
        self.col_prefix[1:, :] = np.cumsum(joint, axis=0)
        self.r_full = np.concatenate(([0.0], self.values))

    def boundaries(self, thresholds: Thresholds):
        v = self.values
        lo1 = 1 + int(np.searchsorted(v, thresholds.zeta_1, side="left"))
        mid1 = 1 + int(np.searchsorted(v, thresholds.alpha_1, side="right"))
        lo2 = 1 + int(np.searchsorted(v, thresholds.zeta_2, side="left"))
        mid2 = 1 + int(np.searchsorted(v, thresholds.alpha_2, side="right"))
        return lo1, mid1, lo2, mid2

    def apply(self, cost_pair, family: str, d_costs):
        return self.pieces(cost_pair, family, d_costs)[:2]

    def pieces(self, cost_pair, family: str, d_costs):
        """One T application plus the affine decomposition behind it.

        Returns (t1, t2, redraw_mass, stop_mass, bounds, affine), where
        t_rho = tau + c_rho * redraw_mass + intercept_rho with the band
        boundaries frozen at ``bounds``; ``stop_mass`` is the complement of
        the redraw mass accumulated from the stopping side, so dividing by
        it stays well conditioned when stopping is rare.  ``affine`` is
        False when the value depends on the costs beyond that form (mixed
        play inside R4).
        """
        config = self.config
        n = self.n
        d1, d2 = d_costs
        # The region table classifies each state by its stage equilibrium,
        # which presumes competing never beats going it alone (c >= d, so
        # zeta <= alpha).  Transient iterates can dip below that; evaluating
        # the map there would order the band boundaries backwards and turn
        # the prefix-difference masses negative, fabricating value no policy
        # achieves.  Restrict to the valid domain instead: fixed points with
        # c >= d are untouched, and out-of-domain iterates get pushed back
        # because collisions and stolen packets only ever add cost.
        c1 = max(float(cost_pair[0]), d1)
        c2 = max(float(cost_pair[1]), d2)
        lo1, mid1, lo2, mid2 = self.boundaries(
            thresholds_from_costs((c1, c2), d_costs, config)
        )
        eta1, eta2 = config.tradeoff_1, config.tradeoff_2
        nu1, nu2 = config.win_prob_1, config.win_prob_2
        r = self.r_full
        rp, cp = self.row_prefix, self.col_prefix

        def row_mass(j_lo, j_hi):
            return rp[:, j_hi] - rp[:, j_lo]

        def col_mass(i_lo, i_hi):
            return cp[i_hi, :] - cp[i_lo, :]

        in_low2 = row_mass(0, lo2)
        in_mid2 = row_mass(lo2, mid2)
        in_hi2 = row_mass(mid2, n)
        of_low1 = col_mass(0, lo1)
        of_mid1 = col_mass(lo1, mid1)
        of_hi1 = col_mass(mid1, n)

        mass_r1 = float(in_low2[:lo1].sum())
        mass_r3 = float(in_mid2[:lo1].sum() + in_hi2[:lo1].sum() + in_hi2[lo1:mid1].sum())
        mass_r2 = float(in_low2[lo1:].sum() + in_mid2[mid1:].sum())
        mass_r4 = float(in_mid2[lo1:mid1].sum())
        mass_r5 = float(in_hi2[mid1:].sum())

        # F1 stop payoff sum(p * -eta1*r_i) over R2, and E1 over R5.
        stop_r2_1 = float(
            (r[lo1:] * in_low2[lo1:]).sum() + (r[mid1:] * in_mid2[mid1:]).sum()
        )
        r5_weighted_r_i = float((r[mid1:] * in_hi2[mid1:]).sum())
        # F2 stop payoff over R3, and E2 over R5.
        stop_r3_2 = float(
            (r[lo2:mid2] * of_low1[lo2:mid2]).sum()
            + (r[mid2:] * of_low1[mid2:]).sum()
            + (r[mid2:] * of_mid1[mid2:]).sum()
        )
        r5_weighted_r_j = float((r[mid2:] * of_hi1[mid2:]).sum())

        t1 = (
            config.mean_interarrival_s
            + c1 * mass_r1
            + d1 * mass_r3
            + (-eta1) * stop_r2_1
            + nu1 * (-eta1) * r5_weighted_r_i
            + nu2 * d1 * mass_r5
        )
        t2 = (
            config.mean_interarrival_s
            + c2 * mass_r1
            + d2 * mass_r2
            + (-eta2) * stop_r3_2
            + nu2 * (-eta2) * r5_weighted_r_j
            + nu1 * d2 * mass_r5
        )

        if mass_r4 > 0.0:
            if family == "SC":
                t1 += (-eta1) * float((r[lo1:mid1] * in_mid2[lo1:mid1]).sum())
                t2 += d2 * mass_r4
            elif family == "CS":
                t1 += d1 * mass_r4
                t2 += (-eta2) * float((r[lo2:mid2] * of_mid1[lo2:mid2]).sum())
            else:  # MIXED
                ri = r[lo1:mid1]
                num_1 = -eta1 * ri - c1
                den_1 = num_1 - nu1 * (-eta1 * ri - d1)
                if np.any(den_1 == 0.0):
                    raise ValueError(
                        "mixed-strategy denominator vanished inside R4; "
                        "requires D < C strictly"
                    )
                gamma_2 = np.clip(num_1 / den_1, 0.0, 1.0)
                mix_1 = gamma_2 * d1 + (1.0 - gamma_2) * c1
                t1 += float((mix_1 * in_mid2[lo1:mid1]).sum())

                rj = r[lo2:mid2]
                num_2 = -eta2 * rj - c2
                den_2 = num_2 - nu2 * (-eta2 * rj - d2)
                if np.any(den_2 == 0.0):
                    raise ValueError(
                        "mixed-strategy denominator vanished inside R4; "
                        "requires D < C strictly"
                    )
                gamma_1 = np.clip(num_2 / den_2, 0.0, 1.0)
                mix_2 = gamma_1 * d2 + (1.0 - gamma_1) * c2
                t2 += float((mix_2 * of_mid1[lo2:mid2]).sum())

        affine = family != "MIXED" or mass_r4 == 0.0
        stop_mass = mass_r2 + mass_r3 + mass_r4 + mass_r5
        bounds = (lo1, mid1, lo2, mid2)
        return t1, t2, mass_r1, stop_mass, bounds, affine


def apply_T(cost_pair, family: str, model: RewardModel, d_costs, config: GameConfig):
    """One application of the T-map at a cost pair, for one R4 family."""
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    return _TContext(model, config).apply(tuple(cost_pair), family, tuple(d_costs))


@dataclass(frozen=True)
class PolicyPairCO:
    """Stationary policy pair: per-state probabilities of choosing stop.

    ``stop_prob_rho[i, j]`` applies to the two-active state with rewards
    (r_i, r_j); ``lone_stop_rho[i]`` to the state where the opponent has
    already terminated.  Index 0 is the INFEASIBLE sentinel and must carry
    stop probability 0.
    """

    stop_prob_1: np.ndarray
    stop_prob_2: np.ndarray
    lone_stop_1: np.ndarray
    lone_stop_2: np.ndarray

    def __post_init__(self):
        for name in ("stop_prob_1", "stop_prob_2", "lone_stop_1", "lone_stop_2"):
            arr = np.array(getattr(self, name), dtype=float)
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.stop_prob_1[0, :] != 0.0) or np.any(self.lone_stop_1[:1] != 0.0):
            raise ValueError("forwarder 1 must never stop on INFEASIBLE")
        if np.any(self.stop_prob_2[:, 0] != 0.0) or np.any(self.lone_stop_2[:1] != 0.0):
            raise ValueError("forwarder 2 must never stop on INFEASIBLE")


@dataclass(frozen=True)
class PolicyValues:
    two_1: np.ndarray
    two_2: np.ndarray
    lone_1: np.ndarray
    lone_2: np.ndarray
    cost_pair: Tuple[float, float]


def evaluate_policy_pair(
    policy: PolicyPairCO,
    model: RewardModel,
    config: GameConfig,
    tol: float = 1e-12,
) -> PolicyValues:
    """Exact total-cost value tables of an arbitrary stationary policy pair.

    The only coupling between two-active states is the expectation of the
    value table under the joint reward distribution (the both-continue
    redraw), so the policy-evaluation equations reduce to one scalar linear
    equation per player on top of the lone-forwarder chains.  A policy pair
    whose induced chain can fail to reach the absorbing states is rejected.
    """
    n = model.n
    if policy.stop_prob_1.shape != (n, n) or policy.stop_prob_2.shape != (n, n):
        raise ValueError("two-active policy tables must be (n, n)")
    if policy.lone_stop_1.shape != (n,) or policy.lone_stop_2.shape != (n,):
        raise ValueError("lone policy tables must be (n,)")
    tau = config.mean_interarrival_s
    r = np.concatenate(([0.0], model.feasible_values))
    nonterm = 1.0 - max(tol, 1e-15)

    def lone_values(lone_stop: np.ndarray, marginal: np.ndarray, eta: float):
        stop_term = lone_stop * (-eta * r)
        cont_ind = 1.0 - lone_stop
        q = float(marginal @ cont_ind)
        if q >= nonterm:
            raise ValueError(
                "policy never stops on the lone-forwarder chain: "
                "infinite expected delay"
            )
        expectation = (float(marginal @ stop_term) + q * tau) / (1.0 - q)
        table = stop_term + cont_ind * (tau + expectation)
        return table, tau + expectation

    lone_1, v_cont_1 = lone_values(policy.lone_stop_1, model.marginal_1, config.tradeoff_1)
    lone_2, v_cont_2 = lone_values(policy.lone_stop_2, model.marginal_2, config.tradeoff_2)

    s1, s2 = policy.stop_prob_1, policy.stop_prob_2
    both_cont = (1.0 - s1) * (1.0 - s2)
    joint = model.joint
    redraw_mass = float((joint * both_cont).sum())
    if redraw_mass >= nonterm:
        raise ValueError(
            "policy pair never stops from two-active states: infinite expected delay"
        )

    stop_1 = (-config.tradeoff_1 * r)[:, None]
    stop_2 = (-config.tradeoff_2 * r)[None, :]
    base_1 = (
        s1 * s2 * (config.win_prob_1 * stop_1 + config.win_prob_2 * v_cont_1)
        + s1 * (1.0 - s2) * stop_1
        + (1.0 - s1) * s2 * v_cont_1
    )
    base_2 = (
        s1 * s2 * (config.win_prob_1 * v_cont_2 + config.win_prob_2 * stop_2)
        + (1.0 - s1) * s2 * stop_2
        + s1 * (1.0 - s2) * v_cont_2
    )
    u1 = (float((joint * base_1).sum()) + redraw_mass * tau) / (1.0 - redraw_mass)
    u2 = (float((joint * base_2).sum()) + redraw_mass * tau) / (1.0 - redraw_mass)
    two_1 = base_1 + both_cont * (tau + u1)
    two_2 = base_2 + both_cont * (tau + u2)
    return PolicyValues(
        two_1=two_1,
        two_2=two_2,
        lone_1=lone_1,
        lone_2=lone_2,
        cost_pair=(tau + u1, tau + u2),
    )


@dataclass(frozen=True)
class CoNeppSolution:
    family: str
    cost_pair: Tuple[float, float]
    d_costs: Tuple[float, float]
    alpha_1: float
    alpha_2: float
    zeta_1: float
    zeta_2: float
    value_two_1: np.ndarray
    value_two_2: np.ndarray
    value_lone_1: np.ndarray
    value_lone_2: np.ndarray
    policy: PolicyPairCO
    iterations: int
    residual: float

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.zeta_1, self.alpha_1, self.zeta_2, self.alpha_2)


def _region_bands(model: RewardModel, thresholds: Thresholds):
    v = model.feasible_values
    n = model.n
    lo1 = 1 + int(np.searchsorted(v, thresholds.zeta_1, side="left"))
    mid1 = 1 + int(np.searchsorted(v, thresholds.alpha_1, side="right"))
    lo2 = 1 + int(np.searchsorted(v, thresholds.zeta_2, side="left"))
    mid2 = 1 + int(np.searchsorted(v, thresholds.alpha_2, side="right"))
    band_1 = np.zeros(n, dtype=int)
    band_1[lo1:mid1] = 1
    band_1[mid1:] = 2
    band_2 = np.zeros(n, dtype=int)
    band_2[lo2:mid2] = 1
    band_2[mid2:] = 2
    return band_1, band_2


def assemble_solution(
    model: RewardModel,
    config: GameConfig,
    family: str,
    cost_pair,
    d_costs,
    iterations: int = 0,
    residual: float = float("nan"),
) -> CoNeppSolution:
    """Value tables and the induced policy pair implied by a cost pair.

    Used by ``solve_nepp`` at convergence; also handy in tests that need a
    deliberately perturbed solution.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    cost_pair = (float(cost_pair[0]), float(cost_pair[1]))
    d_costs = (float(d_costs[0]), float(d_costs[1]))
    d1, d2 = d_costs
    # Same domain restriction as the map itself: thresholds and feeds come
    # from costs clamped to c >= d, matching what the iteration evaluated.
    c1 = max(cost_pair[0], d1)
    c2 = max(cost_pair[1], d2)
    thresholds = thresholds_from_costs((c1, c2), d_costs, config)
    band_1, band_2 = _region_bands(model, thresholds)
    n = model.n
    r = np.concatenate(([0.0], model.feasible_values))
    eta1, eta2 = config.tradeoff_1, config.tradeoff_2
    nu1, nu2 = config.win_prob_1, config.win_prob_2

    region = np.empty((n, n), dtype="<U2")
    for b1 in range(3):
        for b2 in range(3):
            region[np.ix_(band_1 == b1, band_2 == b2)] = _REGION_BY_BAND[b1][b2]

    stop_1_col = (-eta1 * r)[:, None]
    stop_2_row = (-eta2 * r)[None, :]
    e1_col = (nu1 * (-eta1 * r) + nu2 * d1)[:, None]
    e2_row = (nu1 * d2 + nu2 * (-eta2 * r))[None, :]

    value_1 = np.full((n, n), c1)
    value_2 = np.full((n, n), c2)
    sp1 = np.zeros((n, n))
    sp2 = np.zeros((n, n))

    mask = region == "R2"
    value_1[mask] = np.broadcast_to(stop_1_col, (n, n))[mask]
    value_2[mask] = d2
    sp1[mask] = 1.0
    mask = region == "R3"
    value_1[mask] = d1
    value_2[mask] = np.broadcast_to(stop_2_row, (n, n))[mask]
    sp2[mask] = 1.0
    mask = region == "R5"
    value_1[mask] = np.broadcast_to(e1_col, (n, n))[mask]
    value_2[mask] = np.broadcast_to(e2_row, (n, n))[mask]
    sp1[mask] = 1.0
    sp2[mask] = 1.0

    mask = region == "R4"
    if np.any(mask):
        if family == "SC":
            value_1[mask] = np.broadcast_to(stop_1_col, (n, n))[mask]
            value_2[mask] = d2
            sp1[mask] = 1.0
        elif family == "CS":
            value_1[mask] = d1
            value_2[mask] = np.broadcast_to(stop_2_row, (n, n))[mask]
            sp2[mask] = 1.0
        else:
            num_1 = -eta1 * r - c1
            den_1 = num_1 - nu1 * (-eta1 * r - d1)
            num_2 = -eta2 * r - c2
            den_2 = num_2 - nu2 * (-eta2 * r - d2)
            mid_1 = band_1 == 1
            mid_2 = band_2 == 1
            if np.any(den_1[mid_1] == 0.0) or np.any(den_2[mid_2] == 0.0):
                raise ValueError(
                    "mixed-strategy denominator vanished inside R4; "
                    "requires D < C strictly"
                )
            gamma_2 = np.zeros(n)
            gamma_2[mid_1] = np.clip(num_1[mid_1] / den_1[mid_1], 0.0, 1.0)
            gamma_1 = np.zeros(n)
            gamma_1[mid_2] = np.clip(num_2[mid_2] / den_2[mid_2], 0.0, 1.0)
            value_1[mask] = np.broadcast_to(
                (gamma_2 * d1 + (1.0 - gamma_2) * c1)[:, None], (n, n)
            )[mask]
            value_2[mask] = np.broadcast_to(
                (gamma_1 * d2 + (1.0 - gamma_1) * c2)[None, :], (n, n)
            )[mask]
            sp1[mask] = np.broadcast_to(gamma_1[None, :], (n, n))[mask]
            sp2[mask] = np.broadcast_to(gamma_2[:, None], (n, n))[mask]

    alpha_1, alpha_2 = thresholds.alpha_1, thresholds.alpha_2
    lone_stop_1 = np.concatenate(([0.0], (model.feasible_values >= alpha_1).astype(float)))
    lone_stop_2 = np.concatenate(([0.0], (model.feasible_values >= alpha_2).astype(float)))
    lone_value_1 = np.minimum(-eta1 * r, d1)
    lone_value_1[0] = d1
    lone_value_2 = np.minimum(-eta2 * r, d2)
    lone_value_2[0] = d2

    policy = PolicyPairCO(
        stop_prob_1=sp1,
        stop_prob_2=sp2,
        lone_stop_1=lone_stop_1,
        lone_stop_2=lone_stop_2,
    )
    return CoNeppSolution(
        family=family,
        cost_pair=cost_pair,
        d_costs=d_costs,
        alpha_1=alpha_1,
        alpha_2=alpha_2,
        zeta_1=thresholds.zeta_1,
        zeta_2=thresholds.zeta_2,
        value_two_1=value_1,
        value_two_2=value_2,
        value_lone_1=lone_value_1,
        value_lone_2=lone_value_2,
        policy=policy,
        iterations=iterations,
        residual=residual,
    )


def solve_nepp(
    model: RewardModel,
    config: GameConfig,
    family: str,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    relaxation: float = 1.0,
) -> CoNeppSolution:
    """Fixed point of the T-map for one family, certified at convergence.

    Picard iteration from C(0) = D - (tau, tau); iterates are admitted
    as-is (intermediate cost-ordering violations are legitimate) and the
    ordering D <= C is asserted only at the accepted fixed point.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    if not 0.0 < relaxation <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    sol_1 = solve_threshold(model.marginal_pmf(1), config, 1)
    sol_2 = solve_threshold(model.marginal_pmf(2), config, 2)
    d_costs = (sol_1.d_cost, sol_2.d_cost)
    ctx = _TContext(model, config)
    tau = config.mean_interarrival_s
    cost = (d_costs[0] - tau, d_costs[1] - tau)
    trace = []
    tried_bounds = None
    for iteration in range(1, max_iters + 1):
        t1, t2, redraw_mass, stop_mass, bounds, affine = ctx.pieces(
            cost, family, d_costs
        )
        residual = max(abs(t1 - cost[0]), abs(t2 - cost[1]))
        trace.append(residual)
        # With the band boundaries frozen, T is affine with slope equal to
        # the both-continue redraw mass, so the frozen-boundary fixed point
        # is available in closed form.  A candidate that reproduces its own
        # boundaries is the fixed point of T itself; one that does not is
        # still adopted as a fast-forward step whenever it reduces the
        # residual, which matters when the redraw mass is close to one and
        # plain iteration crawls.
        if affine and stop_mass > 0.0:
            cand = (
                (t1 - cost[0] * redraw_mass) / stop_mass,
                (t2 - cost[1] * redraw_mass) / stop_mass,
            )
            s1, s2, _, _, cand_bounds, cand_affine = ctx.pieces(
                cand, family, d_costs
            )
            cand_residual = max(abs(s1 - cand[0]), abs(s2 - cand[1]))
            if cand_bounds == bounds and cand_affine and cand_residual <= tol:
                cost = cand
                residual = cand_residual
                break
            if bounds != tried_bounds and cand_residual < residual:
                tried_bounds = bounds
                cost = cand
                trace.append(cand_residual)
                continue
            tried_bounds = bounds
        cost = (
            cost[0] + relaxation * (t1 - cost[0]),
            cost[1] + relaxation * (t2 - cost[1]),
        )
        if residual <= tol:
            break
    else:
        raise NonConvergenceError(
            f"T iteration for family {family} did not converge in {max_iters} steps",
            trace,
        )
    if d_costs[0] > cost[0] + 1e-9 or d_costs[1] > cost[1] + 1e-9:
        raise RuntimeError(
            f"cost ordering violated at the fixed point: D={d_costs}, C={cost}"
        )
    return assemble_solution(
        model,
        config,
        family,
        cost,
        d_costs,
        iterations=iteration,
        residual=residual,
    )


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    max_deviation_1: float
    max_deviation_2: float
    worst_state_1: Optional[tuple]
    worst_state_2: Optional[tuple]
    br_cost_1: float
    br_cost_2: float
    stage_failures: tuple
    checked_states: int


def _best_response_values(
    model: RewardModel,
    config: GameConfig,
    opponent_stop: np.ndarray,
    role: int,
    max_iters: int = 2_000_000,
):
    """Optimal values of one forwarder against a fixed opponent policy.

    Value iteration on the two scalar expectations that couple the states
    (the lone-chain expectation and the two-active redraw expectation),
    with each sweep finished by an exact evaluation of the stopping rule
    it induces, so the converged scalars are fixed points to rounding
    accuracy rather than to an iteration tolerance.  Returns (lone value
    table, two-active values on the joint support, support indices,
    best-response start cost).
    """
    eta = config.tradeoff(role)
    tau = config.mean_interarrival_s
    nu_win = config.win_prob(role)
    r = np.concatenate(([0.0], model.feasible_values))
    marginal = model.marginal(role)

    # Lone-chain expectation e: each sweep classifies every reward as stop
    # or redraw, then the induced stationary rule is evaluated in closed
    # form.  The evaluation divides by the stopping mass, accumulated as a
    # direct sum so a tiny stopping tail stays well conditioned; a stable
    # classification means e solves its own Bellman equation exactly.
    stop_lone = -eta * r
    probs = marginal[1:]
    stop_gain = probs * stop_lone[1:]
    e = float(marginal @ np.minimum(stop_lone, tau))
    chosen = -1
    for _ in range(r.size + 2):
        stops = stop_lone[1:] <= tau + e
        if not np.any(stops):
            raise NonConvergenceError(
                "lone best-response rule never stops; chain is not transient", []
            )
        k = int(np.argmax(stops))
        if k == chosen:
            break
        stop_mass = float(probs[k:][::-1].sum())
        cont_mass = float(marginal[0] + probs[:k].sum())
        e = (float(stop_gain[k:][::-1].sum()) + cont_mass * tau) / stop_mass
        chosen = k
    else:
        raise NonConvergenceError("lone best-response evaluation cycled", [])
    lone = np.minimum(stop_lone, tau + e)
    lone[0] = tau + e

    joint = model.joint
    isup, jsup = np.nonzero(joint)
    mass = joint[isup, jsup]
    own = isup if role == 1 else jsup
    sigma = opponent_stop[isup, jsup]

    # Two-active expectation x, same scheme over the joint support.  The
    # denominator 1 - (continue mass weighted by the opponent continuing)
    # is accumulated from the stopping side to avoid cancellation.
    stop_now = -eta * r[own]
    q_stop = sigma * (nu_win * stop_now + (1.0 - nu_win) * (tau + e)) + (1.0 - sigma) * stop_now
    feasible = own != 0
    cont_feed = sigma * (tau + e) + (1.0 - sigma) * tau
    x = float(mass @ np.where(feasible, q_stop, cont_feed))
    prev_mask = None
    for _ in range(max_iters):
        mask = feasible & (q_stop <= sigma * (tau + e) + (1.0 - sigma) * (tau + x))
        if prev_mask is not None and bool(np.all(mask == prev_mask)):
            break
        denom = float((mass * np.where(mask, 1.0, sigma)).sum())
        if denom <= 0.0:
            raise NonConvergenceError(
                "two-active best-response rule never stops; chain is not transient", []
            )
        numer = float((mass * np.where(mask, q_stop, cont_feed)).sum())
        x = numer / denom
        prev_mask = mask
    else:
        raise NonConvergenceError("two-active best-response evaluation cycled", [])
    q_cont = sigma * (tau + e) + (1.0 - sigma) * (tau + x)
    v = np.where(feasible, np.minimum(q_stop, q_cont), q_cont)
    return lone, v, (isup, jsup), tau + x


def verify_nepp(
    solution: CoNeppSolution,
    model: RewardModel,
    config: GameConfig,
    tol: float = 1e-6,
) -> VerifyReport:
    """Certify a solved equilibrium by attacking it from both sides.

    Each forwarder's best-response MDP against the other's fixed policy is
    solved by value iteration and compared with the solution's own value
    tables (states off the joint support never occur and are skipped).  In
    addition, the strategy profile played at every supported reward pair
    must be a Nash equilibrium of the stage game at the converged costs,
    as found by the independent stage_nash_oracle.
    """
    lone_br_1, v_br_1, (isup, jsup), br_cost_1 = _best_response_values(
        model, config, solution.policy.stop_prob_2, 1
    )
    lone_br_2, v_br_2, _, br_cost_2 = _best_response_values(
        model, config, solution.policy.stop_prob_1, 2
    )

    dev_two_1 = solution.value_two_1[isup, jsup] - v_br_1
    dev_two_2 = solution.value_two_2[isup, jsup] - v_br_2
    dev_lone_1 = solution.value_lone_1 - lone_br_1
    dev_lone_2 = solution.value_lone_2 - lone_br_2
    dev_cost_1 = solution.cost_pair[0] - br_cost_1
    dev_cost_2 = solution.cost_pair[1] - br_cost_2

    def worst(dev_two, dev_lone, dev_cost):
        candidates = [(float(dev_cost), ("start",))]
        if dev_two.size:
            k = int(np.argmax(dev_two))
            candidates.append((float(dev_two[k]), (int(isup[k]), int(jsup[k]))))
        k = int(np.argmax(dev_lone))
        candidates.append((float(dev_lone[k]), ("lone", int(k))))
        return max(candidates, key=lambda item: item[0])

    max_dev_1, state_1 = worst(dev_two_1, dev_lone_1, dev_cost_1)
    max_dev_2, state_2 = worst(dev_two_2, dev_lone_2, dev_cost_2)

    stage_failures = []
    for k in range(isup.shape[0]):
        i, j = int(isup[k]), int(jsup[k])
        r_i = INFEASIBLE if i == 0 else float(model.feasible_values[i - 1])
        r_j = INFEASIBLE if j == 0 else float(model.feasible_values[j - 1])
        game = build_stage_game(r_i, r_j, solution.cost_pair, solution.d_costs, config)
        equilibria = stage_nash_oracle(game)
        played = (
            float(solution.policy.stop_prob_1[i, j]),
            float(solution.policy.stop_prob_2[i, j]),
        )
        if not _profile_in_equilibria(played, equilibria, tol):
            stage_failures.append(
                (i, j, f"played profile {played} is not a stage equilibrium")
            )

    passed = (
        max_dev_1 <= tol and max_dev_2 <= tol and not stage_failures
    )
    return VerifyReport(
        passed=passed,
        max_deviation_1=max_dev_1,
        max_deviation_2=max_dev_2,
        worst_state_1=state_1,
        worst_state_2=state_2,
        br_cost_1=br_cost_1,
        br_cost_2=br_cost_2,
        stage_failures=tuple(stage_failures),
        checked_states=int(isup.shape[0]),
    )


def _profile_in_equilibria(played, equilibria, tol: float) -> bool:
    p1, p2 = played
    for ne in equilibria:
        if isinstance(ne, PureNE):
            q1 = 1.0 if ne.action_1 == "s" else 0.0
            q2 = 1.0 if ne.action_2 == "s" else 0.0
        else:
            q1, q2 = ne.stop_prob_1, ne.stop_prob_2
        if abs(p1 - q1) <= tol and abs(p2 - q2) <= tol:
            return True
    return False
