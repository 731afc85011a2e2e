"""Partially observable variant: each forwarder sees only its own reward.

Conditioned on the packet location the two reward draws are independent,
so a forwarder facing an opponent threshold policy summarizes the
opponent by a single number per location: the probability g that the
opponent's draw falls at or below its threshold and it continues.  The
resulting one-sided stage costs C_s and C_c cross at most once in the
reward index, which makes every best response a threshold policy and
makes best responses monotone in the opponent's threshold.  Iterated
elimination over threshold sets then yields the Nash pairs per location,
and a T-bar fixed point over the location mixture certifies the
partially observable equilibrium policy pair.

Thresholds are 1-based counts over the full reward index set (the
INFEASIBLE sentinel is index 1): a forwarder with threshold Phi stops
exactly on indices above Phi.  Phi = 0 stops always, Phi = n continues
always, and no best response ever stops on the sentinel, so computed
thresholds are at least 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .cogame import NonConvergenceError
from .rewards import RewardModel, is_infeasible
from .stopping import GameConfig, solve_threshold

__all__ = [
    "FORBIDDEN",
    "is_forbidden",
    "PO_VARIANTS",
    "ThresholdVector",
    "PoNeppSolution",
    "continue_prob",
    "stage_costs",
    "best_response_threshold",
    "inductive_elimination",
    "exhaustive_ne_oracle",
    "apply_T_bar",
    "solve_po_nepp",
]

PO_VARIANTS = ("NABLA", "DELTA")

_INDEPENDENCE_TOL = 1e-9


class _Forbidden:
    """Marker for a stop cost that must never be chosen.

    Compares greater than every finite value (and equal only to itself),
    so a min over {C_s, C_c} silently picks the continue branch without
    special-casing the sentinel reward.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FORBIDDEN"

    def __gt__(self, other):
        return not isinstance(other, _Forbidden)

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, _Forbidden)

    def __reduce__(self):
        return (_Forbidden, ())


FORBIDDEN = _Forbidden()


def is_forbidden(value) -> bool:
    return value is FORBIDDEN


@dataclass(frozen=True)
class ThresholdVector:
    """One forwarder's policy at one location: stop iff index > threshold."""

    location: int
    threshold: int


def continue_prob(threshold: int, conditional) -> float:
    """Probability that a threshold policy continues: mass at or below it."""
    cond = np.asarray(conditional, dtype=float)
    if not 0 <= int(threshold) <= cond.shape[0]:
        raise ValueError(
            f"threshold {threshold} out of range 0..{cond.shape[0]}"
        )
    return float(cond[: int(threshold)].sum())


def stage_costs(r_i, g_tilde: float, c_bar: float, d: float, config: GameConfig, role: int = 1):
    """One forwarder's expected stop/continue costs against continue prob g.

    Stopping wins outright when the opponent continues; against a
    simultaneous stop the contention tiebreak applies.  Continuing keeps
    the game two-active when the opponent continues and drops to the lone
    chain otherwise.  The stop cost at the INFEASIBLE sentinel is the
    FORBIDDEN marker.
    """
    eta = config.tradeoff(role)
    nu = config.win_prob(role)
    c_c = g_tilde * c_bar + (1.0 - g_tilde) * d
    if is_infeasible(r_i):
        return FORBIDDEN, c_c
    stop_win = -eta * r_i
    contended = nu * stop_win + (1.0 - nu) * d
    c_s = g_tilde * stop_win + (1.0 - g_tilde) * contended
    return c_s, c_c


def best_response_threshold(
    opponent_threshold: int,
    location: int,
    role: int,
    model: RewardModel,
    cost_pair,
    d_costs,
    config: GameConfig,
) -> ThresholdVector:
    """Unique best-response threshold by scanning the stage costs once.

    Counts the indices whose stop cost strictly exceeds the continue
    cost; ties resolve to stopping and the sentinel always counts as a
    continue index, so the result is at least 1.
    """
    opponent_role = 2 if role == 1 else 1
    cond_opp = model.conditional(opponent_role)[location]
    g = continue_prob(opponent_threshold, cond_opp)
    c_bar = float(cost_pair[role - 1])
    d = float(d_costs[role - 1])
    count = 1  # the sentinel index: stopping is forbidden there
    for value in model.feasible_values:
        c_s, c_c = stage_costs(float(value), g, c_bar, d, config, role=role)
        if c_s > c_c:
            count += 1
    return ThresholdVector(location=location, threshold=count)


def _stop_cutoffs(g: np.ndarray, c_bar: float, d: float, eta: float, nu: float):
    """Reward level below which stopping is strictly worse, per continue prob.

    Closed form of C_s > C_c: both sides are affine in the reward, and
    the crossing point moves monotonically from alpha (g=0) down to
    zeta-bar (g=1) when D <= C-bar.
    """
    weight = g + (1.0 - g) * nu
    return -(g * c_bar + (1.0 - g) * nu * d) / (eta * weight)


class _PoContext:
    """Per-model precomputation shared across T-bar iterations."""

    def __init__(self, model: RewardModel, config: GameConfig):
        self.model = model
        self.config = config
        self.values = model.feasible_values
        self.n = model.n
        self.q = model.location_probs
        self.cond_1 = model.conditional_1
        self.cond_2 = model.conditional_2
        length = self.q.shape[0]
        self.g1_table = np.zeros((length, self.n + 1))
        self.g1_table[:, 1:] = np.cumsum(self.cond_1, axis=1)
        self.g2_table = np.zeros((length, self.n + 1))
        self.g2_table[:, 1:] = np.cumsum(self.cond_2, axis=1)

    def br_tables(self, cost_pair, d_costs):
        """Best-response thresholds of each role to every opponent threshold."""
        config = self.config
        cut_1 = _stop_cutoffs(
            self.g2_table, cost_pair[0], d_costs[0],
            config.tradeoff_1, config.win_prob_1,
        )
        cut_2 = _stop_cutoffs(
            self.g1_table, cost_pair[1], d_costs[1],
            config.tradeoff_2, config.win_prob_2,
        )
        shape = cut_1.shape
        br_1 = 1 + np.searchsorted(self.values, cut_1.ravel(), side="left").reshape(shape)
        br_2 = 1 + np.searchsorted(self.values, cut_2.ravel(), side="left").reshape(shape)
        return br_1.astype(np.int64), br_2.astype(np.int64)

    def eliminate(self, br_1_row: np.ndarray, br_2_row: np.ndarray):
        """Iterated best-response images from the full threshold set."""
        a = np.arange(self.n + 1)
        b = br_2_row
        for _ in range(self.n):
            b = np.unique(br_2_row[a])
            a_next = np.unique(br_1_row[b])
            if np.array_equal(a_next, a):
                return a, b
            a = a_next
        return a, b

    def equilibrium_thresholds(self, cost_pair, d_costs, variant: str):
        br_1, br_2 = self.br_tables(cost_pair, d_costs)
        length = self.q.shape[0]
        rows = np.arange(length)
        # The variant's pair is the extreme of the surviving sets, and with
        # nonincreasing best responses that extreme is the orbit limit of
        # the composite map started from the bottom (NABLA) or top (DELTA)
        # of the threshold lattice, which vectorizes across locations.
        if variant == "NABLA":
            phi = np.zeros(length, dtype=np.int64)
        else:
            phi = np.full(length, self.n, dtype=np.int64)
        stable = False
        for _ in range(self.n + 1):
            psi = br_2[rows, phi]
            phi_next = br_1[rows, psi]
            if np.array_equal(phi_next, phi):
                stable = True
                break
            phi = phi_next
        if not stable:
            # Monotonicity can fail while the iterates still violate the
            # cost ordering; fall back to full elimination per location.
            phi = np.empty(length, dtype=np.int64)
            psi = np.empty(length, dtype=np.int64)
            for location in range(length):
                a, b = self.eliminate(br_1[location], br_2[location])
                if variant == "NABLA":
                    phi[location], psi[location] = a[0], b[-1]
                else:
                    phi[location], psi[location] = a[-1], b[0]
        return phi, psi, br_1, br_2

    def _stage_side(self, g, c_bar, d, eta, nu):
        v = self.values
        stop_win = -eta * v
        contended = nu * stop_win + (1.0 - nu) * d
        c_s = g[:, None] * stop_win[None, :] + (1.0 - g)[:, None] * contended[None, :]
        c_c = g * c_bar + (1.0 - g) * d
        stop_sel = c_s <= c_c[:, None]
        return np.where(stop_sel, c_s, c_c[:, None]), c_c, stop_sel

    def stage_value_tables(self, cost_pair, d_costs, phi, psi):
        """Per-location stage values G under the chosen threshold pairs.

        Returns (G1 over feasible rewards, continue cost per location) for
        role 1 and the same for role 2.
        """
        config = self.config
        rows = np.arange(self.q.shape[0])
        g_for_1 = self.g2_table[rows, psi]
        g_for_2 = self.g1_table[rows, phi]
        g1, cc1, _ = self._stage_side(
            g_for_1, cost_pair[0], d_costs[0], config.tradeoff_1, config.win_prob_1
        )
        g2, cc2, _ = self._stage_side(
            g_for_2, cost_pair[1], d_costs[1], config.tradeoff_2, config.win_prob_2
        )
        return g1, cc1, g2, cc2

    def apply(self, cost_pair, d_costs, variant: str):
        return self.pieces(cost_pair, d_costs, variant)[:2]

    def pieces(self, cost_pair, d_costs, variant: str):
        """One T-bar application plus its affine decomposition.

        With the per-location threshold pairs and the per-reward stop
        selections frozen, each component of the map is affine in the own
        cost: t_rho = tau + c_rho * slope_rho + intercept.  The complement
        1 - slope is accumulated from the stopping side ((1 - g) and
        g * stop mass terms), which stays well conditioned when stopping
        is rare.  Returns (t1, t2, slope_1, comp_1, slope_2, comp_2,
        signature) with the frozen selection as the signature.
        """
        config = self.config
        rows = np.arange(self.q.shape[0])
        phi, psi, _, _ = self.equilibrium_thresholds(cost_pair, d_costs, variant)
        g_for_1 = self.g2_table[rows, psi]
        g_for_2 = self.g1_table[rows, phi]
        tau = self.config.mean_interarrival_s

        def one_side(g, c_bar, d, eta, nu, cond):
            table, c_c, stop_sel = self._stage_side(g, c_bar, d, eta, nu)
            per_loc = cond[:, 0] * c_c + np.einsum("li,li->l", cond[:, 1:], table)
            t = tau + float(self.q @ per_loc)
            stop_own = (cond[:, 1:] * stop_sel).sum(axis=1)
            cont_own = cond[:, 0] + (cond[:, 1:] * ~stop_sel).sum(axis=1)
            slope = float(self.q @ (g * cont_own))
            comp = float(self.q @ ((1.0 - g) + g * stop_own))
            return t, slope, comp, stop_sel

        t1, slope_1, comp_1, sel_1 = one_side(
            g_for_1, cost_pair[0], d_costs[0],
            config.tradeoff_1, config.win_prob_1, self.cond_1,
        )
        t2, slope_2, comp_2, sel_2 = one_side(
            g_for_2, cost_pair[1], d_costs[1],
            config.tradeoff_2, config.win_prob_2, self.cond_2,
        )
        signature = (phi, psi, sel_1, sel_2)
        return t1, t2, slope_1, comp_1, slope_2, comp_2, signature


def inductive_elimination(
    location: int,
    model: RewardModel,
    cost_pair,
    d_costs,
    config: GameConfig,
):
    """Surviving threshold sets (A, B) after iterated best-response images.

    Starts from the full threshold set {0..n}, alternates the two
    best-response images n times (stopping early once the sets repeat,
    after which every further image is identical), and returns both sets
    sorted ascending.
    """
    ctx = _PoContext(model, config)
    br_1, br_2 = ctx.br_tables(
        (float(cost_pair[0]), float(cost_pair[1])),
        (float(d_costs[0]), float(d_costs[1])),
    )
    a, b = ctx.eliminate(br_1[location], br_2[location])
    return a, b


def exhaustive_ne_oracle(
    location: int,
    model: RewardModel,
    cost_pair,
    d_costs,
    config: GameConfig,
):
    """All mutually best-responding threshold pairs, by brute force.

    Independent of the elimination path: best responses come from the
    stage-cost scan, and every pair in {0..n}^2 is checked directly.
    """
    n = model.n
    br_1 = [
        best_response_threshold(psi, location, 1, model, cost_pair, d_costs, config).threshold
        for psi in range(n + 1)
    ]
    br_2 = [
        best_response_threshold(phi, location, 2, model, cost_pair, d_costs, config).threshold
        for phi in range(n + 1)
    ]
    pairs = [
        (phi, psi)
        for phi in range(n + 1)
        for psi in range(n + 1)
        if br_1[psi] == phi and br_2[phi] == psi
    ]
    return tuple(sorted(pairs))


def apply_T_bar(cost_pair, variant: str, model: RewardModel, d_costs, config: GameConfig):
    """One application of the partially observable cost map."""
    if variant not in PO_VARIANTS:
        raise ValueError(f"variant must be one of {PO_VARIANTS}, got {variant!r}")
    ctx = _PoContext(model, config)
    return ctx.apply(
        (float(cost_pair[0]), float(cost_pair[1])),
        (float(d_costs[0]), float(d_costs[1])),
        variant,
    )


@dataclass(frozen=True)
class PoNeppSolution:
    variant: str
    cost_pair: Tuple[float, float]
    d_costs: Tuple[float, float]
    phi: np.ndarray
    psi: np.ndarray
    value_1: np.ndarray
    value_2: np.ndarray
    iterations: int
    residual: float

    @property
    def ne_pairs(self):
        return tuple(
            (location, int(self.phi[location]), int(self.psi[location]))
            for location in range(self.phi.shape[0])
        )


def solve_po_nepp(
    model: RewardModel,
    config: GameConfig,
    variant: str,
    tol: float = 1e-10,
    max_iters: int = 100_000,
) -> PoNeppSolution:
    """Fixed point of the partially observable cost map for one variant.

    Refuses reward models whose joint table is not conditionally
    independent given the location; the threshold structure of best
    responses needs that factorization.  Lone-forwarder behavior is the
    single-agent solution, unchanged by partial observability.
    """
    if variant not in PO_VARIANTS:
        raise ValueError(f"variant must be one of {PO_VARIANTS}, got {variant!r}")
    residual_factorization = model.factorization_residual()
    if residual_factorization > _INDEPENDENCE_TOL:
        raise ValueError(
            "joint reward table deviates from conditional independence given "
            f"the location by {residual_factorization:.3e}; the threshold "
            "best-response structure does not apply"
        )
    sol_1 = solve_threshold(model.marginal_pmf(1), config, 1)
    sol_2 = solve_threshold(model.marginal_pmf(2), config, 2)
    d_costs = (sol_1.d_cost, sol_2.d_cost)
    ctx = _PoContext(model, config)
    tau = config.mean_interarrival_s
    cost = (d_costs[0] - tau, d_costs[1] - tau)
    trace = []
    tried_sig = None

    def same_sig(a, b):
        return a is not None and b is not None and all(
            np.array_equal(x, y) for x, y in zip(a, b)
        )

    for iteration in range(1, max_iters + 1):
        t1, t2, slope_1, comp_1, slope_2, comp_2, sig = ctx.pieces(
            cost, d_costs, variant
        )
        residual = max(abs(t1 - cost[0]), abs(t2 - cost[1]))
        trace.append(residual)
        # Frozen-selection closed form, as in the co-solver: a candidate
        # that reproduces its own threshold pairs and stop selections is
        # the exact fixed point; otherwise it still fast-forwards the
        # crawl whenever it improves the residual.
        if comp_1 > 0.0 and comp_2 > 0.0:
            cand = (
                (t1 - cost[0] * slope_1) / comp_1,
                (t2 - cost[1] * slope_2) / comp_2,
            )
            s1, s2, _, _, _, _, cand_sig = ctx.pieces(cand, d_costs, variant)
            cand_residual = max(abs(s1 - cand[0]), abs(s2 - cand[1]))
            if same_sig(cand_sig, sig) and cand_residual <= tol:
                cost = cand
                residual = cand_residual
                break
            if not same_sig(sig, tried_sig) and cand_residual < residual:
                tried_sig = sig
                cost = cand
                trace.append(cand_residual)
                continue
            tried_sig = sig
        cost = (t1, t2)
        if residual <= tol:
            break
    else:
        raise NonConvergenceError(
            f"T-bar iteration for variant {variant} did not converge "
            f"in {max_iters} steps",
            trace,
        )
    if d_costs[0] > cost[0] + 1e-9 or d_costs[1] > cost[1] + 1e-9:
        raise RuntimeError(
            f"cost ordering violated at the fixed point: D={d_costs}, C-bar={cost}"
        )

    phi, psi, br_1, br_2 = ctx.equilibrium_thresholds(cost, d_costs, variant)
    rows = np.arange(phi.shape[0])
    if not (
        np.all(br_1[rows, psi] == phi) and np.all(br_2[rows, phi] == psi)
    ):
        raise RuntimeError(
            "selected threshold pairs are not mutually best-responding "
            "at the fixed point"
        )
    g1, cc1, g2, cc2 = ctx.stage_value_tables(cost, d_costs, phi, psi)
    n = model.n
    length = phi.shape[0]
    value_1 = np.empty((n, length))
    value_1[0, :] = cc1
    value_1[1:, :] = g1.T
    value_2 = np.empty((length, n))
    value_2[:, 0] = cc2
    value_2[:, 1:] = g2
    return PoNeppSolution(
        variant=variant,
        cost_pair=cost,
        d_costs=d_costs,
        phi=phi,
        psi=psi,
        value_1=value_1,
        value_2=value_2,
        iterations=iteration,
        residual=residual,
    )
