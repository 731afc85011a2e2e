"""Cooperative benchmark: weighted joint planner and its Pareto sweep."""

import numpy as np
import pytest

from relaygame import (
    ACTION_CONTINUE_BOTH,
    ACTION_CONTINUE_STOP,
    ACTION_STOP_CONTINUE,
    GameConfig,
    coop_value_iteration,
    pareto_sweep,
    solve_nepp,
    solve_po_nepp,
    solve_threshold,
)
from relaygame.cli import simple_policy

from conftest import make_random_model, random_config, zero_diagonal_symmetric_model

ACTIONS = {ACTION_STOP_CONTINUE, ACTION_CONTINUE_STOP, ACTION_CONTINUE_BOTH}


def weighted(gamma, pair):
    return gamma * pair[0] + (1.0 - gamma) * pair[1]


class TestJointPlanner:
    def test_gamma_domain(self):
        rng = np.random.default_rng(41)
        model = make_random_model(rng)
        config = random_config(rng)
        for gamma in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError):
                coop_value_iteration(model, config, gamma)

    def test_action_table_has_no_joint_stop(self):
        """Simultaneous stopping wastes one forwarder's find, so the
        planner's action set simply does not contain it; the table must
        also respect the infeasibility structure."""
        rng = np.random.default_rng(43)
        for _ in range(8):
            model = make_random_model(rng)
            sol = coop_value_iteration(model, random_config(rng), 0.4)
            assert set(np.unique(sol.action)) <= ACTIONS
            assert ACTION_STOP_CONTINUE not in sol.action[0, :]
            assert ACTION_CONTINUE_STOP not in sol.action[:, 0]
            assert sol.action[0, 0] == ACTION_CONTINUE_BOTH

    def test_lone_tails_are_weighted_single_agent_chains(self):
        """After one forwarder stops, the other faces its ordinary lone
        stopping problem; the planner stores that tail scaled by the
        weight, so the policy it induces is weight-independent."""
        rng = np.random.default_rng(47)
        model = make_random_model(rng)
        config = random_config(rng)
        sol_1 = solve_threshold(model.marginal_pmf(1), config, 1)
        sol_2 = solve_threshold(model.marginal_pmf(2), config, 2)
        chain_1 = np.concatenate(
            [[sol_1.d_cost], np.minimum(-config.tradeoff_1 * model.feasible_values, sol_1.d_cost)]
        )
        chain_2 = np.concatenate(
            [[sol_2.d_cost], np.minimum(-config.tradeoff_2 * model.feasible_values, sol_2.d_cost)]
        )
        for gamma in (0.25, 0.75):
            sol = coop_value_iteration(model, config, gamma)
            np.testing.assert_allclose(sol.value_lone_1, gamma * chain_1, atol=1e-12)
            np.testing.assert_allclose(sol.value_lone_2, (1 - gamma) * chain_2, atol=1e-12)

    def test_symmetric_instance_splits_evenly(self):
        # disjoint per-location supports keep tie-breaking out of play, so
        # the even weight must produce exactly even costs
        model = zero_diagonal_symmetric_model()
        config = GameConfig(0.1, 1.0, 1.0, 0.5)
        sol = coop_value_iteration(model, config, 0.5)
        assert abs(sol.cost_pair[0] - sol.cost_pair[1]) <= 1e-9
        assert sol.cost_pair[0] == pytest.approx(-20.333333333333332, abs=1e-9)

    def test_weighted_cost_dominates_equilibria(self):
        """The planner optimizes the weighted objective over all joint
        policies, so no equilibrium or myopic point can beat it."""
        rng = np.random.default_rng(53)
        for _ in range(6):
            model = make_random_model(rng)
            config = random_config(rng)
            competitors = [solve_nepp(model, config, f).cost_pair for f in ("SC", "CS", "MIXED")]
            competitors += [solve_po_nepp(model, config, v).cost_pair for v in ("NABLA", "DELTA")]
            competitors.append(simple_policy(model, config)[1].cost_pair)
            for gamma in (0.2, 0.5, 0.8):
                coop = coop_value_iteration(model, config, gamma)
                bar = weighted(gamma, coop.cost_pair)
                for pair in competitors:
                    assert bar <= weighted(gamma, pair) + 1e-6

    def test_residual_and_iterations_reported(self):
        rng = np.random.default_rng(59)
        sol = coop_value_iteration(make_random_model(rng), random_config(rng), 0.5)
        assert sol.iterations >= 1
        assert 0.0 <= sol.residual <= 1e-10


class TestParetoSweep:
    def test_grid_validation(self):
        rng = np.random.default_rng(61)
        model = make_random_model(rng)
        config = random_config(rng)
        with pytest.raises(ValueError):
            pareto_sweep(model, config, [])
        with pytest.raises(ValueError):
            pareto_sweep(model, config, [0.0, 0.5])

    def test_frontier_is_monotone_and_nondominated(self):
        rng = np.random.default_rng(67)
        grid = [0.1, 0.25, 0.4, 0.55, 0.7, 0.85]
        for _ in range(5):
            model = make_random_model(rng)
            config = random_config(rng)
            frontier = pareto_sweep(model, config, grid)
            assert 1 <= len(frontier) <= len(grid)
            gammas = [g for g, _ in frontier]
            assert gammas == sorted(gammas)
            pairs = [pair for _, pair in frontier]
            assert len(set(pairs)) == len(pairs), "duplicate cost pairs survived"
            for (c1_a, c2_a), (c1_b, c2_b) in zip(pairs, pairs[1:]):
                # growing weight on forwarder 1 trades its cost against 2's
                assert c1_b <= c1_a + 1e-12
                assert c2_b >= c2_a - 1e-12
            for i, p in enumerate(pairs):
                for j, q in enumerate(pairs):
                    if i != j:
                        dominates = q[0] <= p[0] + 1e-12 and q[1] <= p[1] + 1e-12
                        strictly = q[0] < p[0] - 1e-9 or q[1] < p[1] - 1e-9
                        assert not (dominates and strictly)

    def test_singleton_grid(self):
        rng = np.random.default_rng(71)
        model = make_random_model(rng)
        config = random_config(rng)
        frontier = pareto_sweep(model, config, [0.5])
        assert len(frontier) == 1
        gamma, pair = frontier[0]
        assert gamma == 0.5
        assert pair == coop_value_iteration(model, config, 0.5).cost_pair
