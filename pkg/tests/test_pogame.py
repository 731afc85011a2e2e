"""Partially observable game: threshold strategies, elimination, solver."""

import numpy as np
import pytest

from relaygame import (
    FORBIDDEN,
    INFEASIBLE,
    PO_VARIANTS,
    GameConfig,
    RewardModel,
    apply_T_bar,
    best_response_threshold,
    continue_prob,
    exhaustive_ne_oracle,
    inductive_elimination,
    is_forbidden,
    solve_po_nepp,
    solve_threshold,
    stage_costs,
)

from conftest import make_random_model, random_config


def lone_costs(model, config):
    return (
        solve_threshold(model.marginal_pmf(1), config, 1).d_cost,
        solve_threshold(model.marginal_pmf(2), config, 2).d_cost,
    )


class TestForbidden:
    def test_orders_above_every_finite_cost(self):
        assert FORBIDDEN > 0.0
        assert FORBIDDEN > -1e12
        assert FORBIDDEN > 1e12

    def test_predicate(self):
        assert is_forbidden(FORBIDDEN)
        assert not is_forbidden(3.0)
        assert not is_forbidden(INFEASIBLE)


class TestContinueProb:
    COND = np.array([0.1, 0.3, 0.6])

    def test_zero_threshold_never_continues(self):
        assert continue_prob(0, self.COND) == 0.0

    def test_full_threshold_always_continues(self):
        assert continue_prob(3, self.COND) == pytest.approx(1.0)

    def test_partial_threshold(self):
        assert continue_prob(2, self.COND) == pytest.approx(0.4)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            continue_prob(5, self.COND)
        with pytest.raises(ValueError):
            continue_prob(-1, self.COND)


class TestStageCosts:
    CONFIG = GameConfig(0.05, 2.0, 3.0, 0.4)

    def test_opponent_certain_to_continue(self):
        c_s, c_c = stage_costs(3.0, 1.0, -4.0, -5.0, self.CONFIG, role=1)
        assert c_s == pytest.approx(-6.0)  # uncontested stop takes -eta r
        assert c_c == pytest.approx(-4.0)  # both stay active

    def test_opponent_certain_to_stop(self):
        c_s, c_c = stage_costs(3.0, 0.0, -4.0, -5.0, self.CONFIG, role=1)
        # stopping is contended, continuing leaves us alone
        assert c_s == pytest.approx(0.4 * -6.0 + 0.6 * -5.0)
        assert c_c == pytest.approx(-5.0)

    def test_interior_mixture(self):
        c_s, c_c = stage_costs(3.0, 0.6, -4.0, -5.0, self.CONFIG, role=1)
        assert c_s == pytest.approx(0.6 * -6.0 + 0.4 * (0.4 * -6.0 + 0.6 * -5.0))
        assert c_c == pytest.approx(0.6 * -4.0 + 0.4 * -5.0)

    def test_second_role_swaps_tradeoff_and_win_probability(self):
        c_s, _ = stage_costs(3.0, 0.6, -4.0, -5.0, self.CONFIG, role=2)
        assert c_s == pytest.approx(0.6 * -9.0 + 0.4 * (0.6 * -9.0 + 0.4 * -5.0))

    def test_infeasible_reward_forbids_stopping(self):
        c_s, c_c = stage_costs(INFEASIBLE, 0.6, -4.0, -5.0, self.CONFIG, role=1)
        assert is_forbidden(c_s)
        assert c_c == pytest.approx(-4.4)
        assert c_s > c_c


def scan_best_response(psi, location, role, model, cost_pair, d_costs, config):
    """Reference best response: count the rewards where stopping loses."""
    other = 2 if role == 1 else 1
    g = continue_prob(psi, model.conditional(other)[location])
    c_bar = cost_pair[role - 1]
    d = d_costs[role - 1]
    threshold = 1
    for value in model.feasible_values:
        c_s, c_c = stage_costs(value, g, c_bar, d, config, role=role)
        if c_s > c_c:
            threshold += 1
    return threshold


class TestBestResponse:
    def test_matches_reference_scan(self):
        rng = np.random.default_rng(811)
        for _ in range(20):
            model = make_random_model(rng, n_max=8, loc_max=5)
            config = random_config(rng)
            d = lone_costs(model, config)
            cost = (d[0] - float(rng.uniform(0, 1)), d[1] - float(rng.uniform(0, 1)))
            cost = (max(cost[0], d[0] - 0.9), max(cost[1], d[1] - 0.9))
            for location in range(len(model.locations)):
                for psi in range(model.n + 1):
                    for role in (1, 2):
                        got = best_response_threshold(
                            psi, location, role, model, cost, d, config
                        ).threshold
                        want = scan_best_response(
                            psi, location, role, model, cost, d, config
                        )
                        assert got == want

    def test_stop_preference_switches_at_most_once(self):
        """The stop/continue cost difference is affine and decreasing in the
        reward, so the preferred action flips at most once along the list."""
        rng = np.random.default_rng(821)
        for _ in range(50):
            config = random_config(rng)
            g = float(rng.uniform(0, 1))
            d = -float(rng.uniform(2, 8))
            c_bar = d + float(rng.uniform(0, 1.5))
            values = np.sort(rng.uniform(0.5, 50.0, size=8))
            signs = []
            for value in values:
                c_s, c_c = stage_costs(value, g, c_bar, d, config, role=1)
                signs.append(c_s > c_c)
            switches = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
            assert switches <= 1
            if switches == 1:
                assert signs[0] and not signs[-1]

    def test_monotone_in_opponent_threshold(self):
        """A more patient opponent never makes the best response less
        patient: the threshold is nondecreasing in the opponent's."""
        rng = np.random.default_rng(823)
        for _ in range(15):
            model = make_random_model(rng, n_max=8, loc_max=4)
            config = random_config(rng)
            d = lone_costs(model, config)
            cost = (d[0] - 0.4, d[1] - 0.3)
            for location in range(len(model.locations)):
                for role in (1, 2):
                    responses = [
                        best_response_threshold(
                            psi, location, role, model, cost, d, config
                        ).threshold
                        for psi in range(model.n + 1)
                    ]
                    assert responses == sorted(responses), responses

    def test_always_continues_on_the_sentinel(self):
        rng = np.random.default_rng(827)
        model = make_random_model(rng)
        config = random_config(rng)
        d = lone_costs(model, config)
        br = best_response_threshold(0, 0, 1, model, d, d, config)
        assert br.threshold >= 1


class TestElimination:
    def test_agrees_with_exhaustive_oracle(self):
        rng = np.random.default_rng(907)
        for _ in range(60):
            model = make_random_model(rng, n_max=8, loc_max=5)
            config = random_config(rng)
            d = lone_costs(model, config)
            cost = (
                d[0] - float(rng.uniform(0.0, 0.8)),
                d[1] - float(rng.uniform(0.0, 0.8)),
            )
            for location in range(len(model.locations)):
                phis, psis = inductive_elimination(location, model, cost, d, config)
                got = tuple(zip(phis.tolist(), psis.tolist()))
                want = exhaustive_ne_oracle(location, model, cost, d, config)
                assert got == want, (location, got, want)
                assert len(got) >= 1, "equilibrium set must never be empty"

    def test_equilibria_are_mutual_best_responses(self):
        rng = np.random.default_rng(911)
        for _ in range(20):
            model = make_random_model(rng)
            config = random_config(rng)
            d = lone_costs(model, config)
            cost = (d[0] - 0.5, d[1] - 0.4)
            for location in range(len(model.locations)):
                phis, psis = inductive_elimination(location, model, cost, d, config)
                for phi, psi in zip(phis, psis):
                    br_1 = best_response_threshold(
                        int(psi), location, 1, model, cost, d, config
                    ).threshold
                    br_2 = best_response_threshold(
                        int(phi), location, 2, model, cost, d, config
                    ).threshold
                    assert (br_1, br_2) == (int(phi), int(psi))


class TestSolvePoNepp:
    def test_fixed_point_residual(self):
        rng = np.random.default_rng(1009)
        for _ in range(10):
            model = make_random_model(rng)
            config = random_config(rng)
            for variant in PO_VARIANTS:
                sol = solve_po_nepp(model, config, variant)
                again = apply_T_bar(sol.cost_pair, variant, model, sol.d_costs, config)
                assert again[0] == pytest.approx(sol.cost_pair[0], abs=1e-8)
                assert again[1] == pytest.approx(sol.cost_pair[1], abs=1e-8)

    def test_thresholds_are_equilibria_of_the_final_costs(self):
        rng = np.random.default_rng(1013)
        for _ in range(10):
            model = make_random_model(rng)
            config = random_config(rng)
            sol = solve_po_nepp(model, config, "NABLA")
            for location, phi, psi in sol.ne_pairs:
                pairs = exhaustive_ne_oracle(
                    location, model, sol.cost_pair, sol.d_costs, config
                )
                assert (phi, psi) in pairs

    def test_variant_mirror_under_player_swap(self):
        rng = np.random.default_rng(1019)
        for _ in range(8):
            model = make_random_model(rng)
            config = random_config(rng)
            mirror = GameConfig(
                config.mean_interarrival_s,
                config.tradeoff_2,
                config.tradeoff_1,
                1.0 - config.win_prob_1,
            )
            a = solve_po_nepp(model, config, "NABLA")
            b = solve_po_nepp(model.swap_players(), mirror, "DELTA")
            assert a.cost_pair[0] == pytest.approx(b.cost_pair[1], abs=1e-9)
            assert a.cost_pair[1] == pytest.approx(b.cost_pair[0], abs=1e-9)
            swapped = tuple((loc, psi, phi) for loc, phi, psi in b.ne_pairs)
            assert a.ne_pairs == swapped

    def test_competition_never_beats_solitude(self):
        rng = np.random.default_rng(1021)
        for _ in range(10):
            model = make_random_model(rng)
            config = random_config(rng)
            sol = solve_po_nepp(model, config, "DELTA")
            assert sol.d_costs[0] <= sol.cost_pair[0] + 1e-9
            assert sol.d_costs[1] <= sol.cost_pair[1] + 1e-9

    def test_value_table_shapes(self):
        rng = np.random.default_rng(1031)
        model = make_random_model(rng)
        config = random_config(rng)
        sol = solve_po_nepp(model, config, "NABLA")
        L = len(model.locations)
        assert sol.value_1.shape == (model.n, L)
        assert sol.value_2.shape == (L, model.n)
        assert [loc for loc, _, _ in sol.ne_pairs] == list(range(L))

    def test_dependent_joint_rejected(self):
        rng = np.random.default_rng(1033)
        model = make_random_model(rng)
        while model.n < 3:
            model = make_random_model(rng)
        joint = np.array(model.joint)
        joint[0, 0] += 0.01
        joint[1, 1] -= 0.01
        tangled = RewardModel(
            model.feasible_values,
            model.locations,
            model.location_probs,
            model.conditional_1,
            model.conditional_2,
            joint=joint,
        )
        with pytest.raises(ValueError, match="independence"):
            solve_po_nepp(tangled, random_config(rng), "NABLA")

    def test_unknown_variant_rejected(self):
        rng = np.random.default_rng(1039)
        with pytest.raises(ValueError):
            solve_po_nepp(make_random_model(rng), random_config(rng), "SIDEWAYS")
