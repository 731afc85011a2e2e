"""Lone-forwarder optimal stopping.

With the competitor gone, a forwarder faces a classic asset-selling
problem: wait (paying the mean relay inter-arrival time tau per step) or
forward to the current relay (paying minus eta times its reward).  The
optimal policy is a threshold alpha, the unique fixed point of

    beta(x) = E[max(x, R)] - tau / eta

where the INFEASIBLE sentinel contributes max(x, -inf) = x to the
expectation.  ``solve_threshold`` iterates beta to that fixed point;
``value_iteration_oracle`` runs the underlying value iteration directly and
is used by the tests to certify the threshold independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rewards import RewardPmf

__all__ = [
    "GameConfig",
    "SingleAgentSolution",
    "solve_threshold",
    "value_iteration_oracle",
]


@dataclass(frozen=True)
class GameConfig:
    """Economic and contention parameters of the forwarding game.

    tau is the mean relay inter-arrival time, eta_rho the delay/reward
    trade-off of each forwarder, and win_prob_1 the probability that
    forwarder 1 wins a simultaneous-stop contention (strictly inside (0,1)).
    """

    mean_interarrival_s: float
    tradeoff_1: float
    tradeoff_2: float
    win_prob_1: float

    def __post_init__(self):
        if self.mean_interarrival_s <= 0:
            raise ValueError("mean_interarrival_s must be positive")
        if self.tradeoff_1 <= 0 or self.tradeoff_2 <= 0:
            raise ValueError("tradeoff parameters must be positive")
        if not 0.0 < self.win_prob_1 < 1.0:
            raise ValueError("win_prob_1 must lie strictly inside (0, 1)")

    @property
    def win_prob_2(self) -> float:
        return 1.0 - self.win_prob_1

    def tradeoff(self, forwarder_index: int) -> float:
        if forwarder_index == 1:
            return self.tradeoff_1
        if forwarder_index == 2:
            return self.tradeoff_2
        raise ValueError("forwarder index must be 1 or 2")

    def win_prob(self, forwarder_index: int) -> float:
        if forwarder_index == 1:
            return self.win_prob_1
        if forwarder_index == 2:
            return self.win_prob_2
        raise ValueError("forwarder index must be 1 or 2")


@dataclass(frozen=True)
class SingleAgentSolution:
    alpha: float
    d_cost: float
    iterations: int
    residual: float


def _beta_factory(pmf: RewardPmf, tau_over_eta: float):
    values = pmf.values
    probs = pmf.probs[1:]
    p0 = pmf.infeasible_prob

    def beta(x: float) -> float:
        return float(p0 * x + np.maximum(x, values) @ probs - tau_over_eta)

    return beta


def solve_threshold(
    marginal: RewardPmf,
    config: GameConfig,
    forwarder_index: int,
    tol: float = 1e-10,
    max_iters: int = 1_000_000,
) -> SingleAgentSolution:
    """Threshold alpha as the fixed point of beta, and the cost D = -eta*alpha.

    Iterates x <- beta(x) from x0 = (smallest feasible reward) - tau/eta.
    beta is piecewise linear and each iterate identifies the linear segment
    it lands on, so the segment's own fixed point can be solved in closed
    form.  A solved candidate that falls back into its own segment is the
    fixed point of beta itself and finishes the iteration; candidates that
    cross into a higher segment are lower bounds and only fast-forward the
    iterate.  The returned residual |beta(alpha) - alpha| is the certificate
    and is at rounding level, not merely below tol.
    """
    eta = config.tradeoff(forwarder_index)
    tau_over_eta = config.mean_interarrival_s / eta
    values = marginal.values
    probs = marginal.probs[1:]
    feasible_mass = float(probs.sum())
    if values.size == 0 or feasible_mass <= 0.0:
        raise ValueError("no feasible relay ever: all reward mass is INFEASIBLE")
    beta = _beta_factory(marginal, tau_over_eta)

    # On the segment x <= values[k] (with k the first value above x),
    # beta(x) = (1 - m_k) * x + sum(probs[k:] * values[k:]) - tau/eta where
    # m_k = sum(probs[k:]).  The affine fixed point divides by m_k, so m_k is
    # accumulated as a suffix sum directly; forming it as 1 - prefix would
    # cancel catastrophically when the mass above the threshold is tiny.
    tail_mass = np.concatenate((np.cumsum(probs[::-1])[::-1], [0.0]))
    tail = np.concatenate((np.cumsum((probs * values)[::-1])[::-1], [0.0]))

    x = float(values[np.argmax(probs > 0)]) - tau_over_eta
    iterations = 0
    while iterations < max_iters:
        x_new = beta(x)
        iterations += 1
        # Solve the affine piece the iterate currently sits on.  A candidate
        # is exact, not approximate, precisely when it falls back into the
        # segment it was solved on; a residual bound alone is not enough,
        # because when the mass above the threshold is tiny the map contracts
        # at 1 - mass and |beta(x)-x| <= tol still hides an error of
        # tol / mass.  Inconsistent candidates below the top value are still
        # lower bounds on the fixed point, so they serve as upward jumps.
        segment = int(np.searchsorted(values, x_new, side="left"))
        if segment < values.size:
            stop_mass = tail_mass[segment]
            if stop_mass > 0.0:
                candidate = (tail[segment] - tau_over_eta) / stop_mass
                if (
                    int(np.searchsorted(values, candidate, side="left")) == segment
                    and abs(beta(candidate) - candidate) <= tol
                ):
                    x = candidate
                    iterations += 1
                    break
                if x_new < candidate <= values[-1]:
                    x_new = candidate
        if abs(x_new - x) <= tol:
            x = x_new
            break
        x = x_new
    else:
        raise RuntimeError(
            f"threshold iteration did not converge within {max_iters} iterations "
            f"(last residual {abs(beta(x) - x):.3e})"
        )

    residual = abs(beta(x) - x)
    return SingleAgentSolution(
        alpha=float(x),
        d_cost=float(-eta * x),
        iterations=iterations,
        residual=float(residual),
    )


def value_iteration_oracle(
    marginal: RewardPmf,
    config: GameConfig,
    forwarder_index: int,
    sweeps: int,
) -> np.ndarray:
    """Value table J over all reward indices after a fixed number of sweeps.

    J_k(r) = min(-eta*r, tau + E[J_{k-1}(R)]) from J_0 = 0; the sentinel
    index 0 only ever takes the continuation branch.  Test-only companion
    of ``solve_threshold``: at convergence J(r) = min(-eta*r, -eta*alpha).
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    eta = config.tradeoff(forwarder_index)
    tau = config.mean_interarrival_s
    stop_cost = -eta * marginal.values
    probs = marginal.probs
    J = np.zeros(marginal.n)
    for _ in range(sweeps):
        cont = tau + float(probs @ J)
        J_next = np.empty_like(J)
        J_next[0] = cont
        J_next[1:] = np.minimum(stop_cost, cont)
        J = J_next
    return J
