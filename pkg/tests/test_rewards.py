"""Geometric reward model: link budget, reward scalar, model assembly."""

import numpy as np
import pytest

from relaygame import (
    INFEASIBLE,
    GeoScenario,
    RewardModel,
    RewardPmf,
    build_reward_model,
    compute_progress,
    is_infeasible,
    load_reward_model,
    required_power,
    reward_value,
    save_reward_model,
)
from relaygame.cli import DEFAULT_SPEC, geo_scenario

from conftest import make_random_model


def quiet_build(sc, **kwargs):
    """Build a model ignoring the near-field grid-point warning, which is
    incidental whenever a forwarder sits exactly on a grid point."""
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_reward_model(sc, **kwargs)


def scenario(**overrides):
    base = dict(
        forwarder_1=(0.0, 0.0),
        forwarder_2=(0.0, 0.0),
        sink=(1000.0, 0.0),
        range_m=80.0,
        grid_spacing_m=5.0,
        pathloss_exponent=2.5,
        reference_distance_m=5.0,
        receiver_sensitivity_mw=1e-9,
        max_power_mw=1.0,
        tradeoff_a=0.5,
        gain_table=((1e-3, 1.0),),
    )
    base.update(overrides)
    return GeoScenario(**base)


class TestRequiredPower:
    def test_reference_distance_closed_form(self):
        # at d = d_ref the path-loss ratio is 1, so P = sensitivity / gain
        assert required_power(5.0, 1e-3, scenario()) == pytest.approx(1e-6)

    def test_pathloss_scaling(self):
        sc = scenario()
        p1 = required_power(20.0, 1e-3, sc)
        p2 = required_power(40.0, 1e-3, sc)
        assert p2 / p1 == pytest.approx(2.0**2.5)

    def test_out_of_range_is_infeasible(self):
        assert is_infeasible(required_power(80.0001, 1e-3, scenario()))

    def test_power_budget_is_infeasible(self):
        # tiny gain pushes the required power above the 1 mW budget
        assert is_infeasible(required_power(80.0, 1e-12, scenario()))

    def test_below_reference_distance_rejected(self):
        with pytest.raises(ValueError):
            required_power(4.9, 1e-3, scenario())

    def test_nonpositive_gain_rejected(self):
        with pytest.raises(ValueError):
            required_power(10.0, 0.0, scenario())


class TestRewardValue:
    def test_balanced_tradeoff(self):
        # Z^0.5 / P^0.5 with Z=40, P=1e-3 is sqrt(40000)
        assert reward_value(40.0, 1e-3, scenario()) == pytest.approx(200.0)

    def test_progress_only_tradeoff(self):
        sc = scenario(tradeoff_a=1.0)
        assert reward_value(40.0, 1e-3, sc) == 40.0
        assert reward_value(40.0, 1e-9, sc) == 40.0

    def test_infeasible_power_propagates(self):
        assert is_infeasible(reward_value(40.0, INFEASIBLE, scenario()))

    def test_negative_progress_rejected(self):
        with pytest.raises(ValueError):
            reward_value(-1.0, 1e-3, scenario())


def test_progress_is_distance_saved():
    sc = scenario()
    assert compute_progress((100.0, 0.0), 1, sc) == pytest.approx(100.0)
    assert compute_progress((0.0, 0.0), 1, sc) == 0.0
    assert compute_progress((-50.0, 0.0), 1, sc) == pytest.approx(-50.0)


class TestRewardPmf:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            RewardPmf(np.array([1.0, 2.0]), np.array([0.5, 0.5]))

    def test_unsorted_values(self):
        with pytest.raises(ValueError):
            RewardPmf(np.array([2.0, 1.0]), np.array([0.2, 0.4, 0.4]))

    def test_mass_must_normalize(self):
        with pytest.raises(ValueError):
            RewardPmf(np.array([1.0]), np.array([0.5, 0.6]))

    def test_sentinel_mass_exposed(self):
        pmf = RewardPmf(np.array([1.0, 3.0]), np.array([0.2, 0.3, 0.5]))
        assert pmf.infeasible_prob == 0.2
        assert pmf.n == 3


class TestRewardModel:
    def test_auto_assembled_tables_are_consistent(self):
        rng = np.random.default_rng(101)
        for _ in range(25):
            model = make_random_model(rng)
            assert model.joint.shape == (model.n, model.n)
            assert model.joint.sum() == pytest.approx(1.0)
            np.testing.assert_allclose(model.joint.sum(axis=1), model.marginal_1)
            np.testing.assert_allclose(model.joint.sum(axis=0), model.marginal_2)
            assert model.factorization_residual() < 1e-12

    def test_reward_at_index(self):
        rng = np.random.default_rng(5)
        model = make_random_model(rng)
        assert is_infeasible(model.reward_at(0))
        assert model.reward_at(1) == model.feasible_values[0]

    def test_swap_players_is_involutive(self):
        rng = np.random.default_rng(17)
        model = make_random_model(rng)
        back = model.swap_players().swap_players()
        np.testing.assert_array_equal(back.joint, model.joint)
        np.testing.assert_array_equal(back.conditional_1, model.conditional_1)

    def test_swap_players_transposes_joint(self):
        rng = np.random.default_rng(23)
        model = make_random_model(rng)
        np.testing.assert_array_equal(model.swap_players().joint, model.joint.T)

    def test_conditional_rows_must_normalize(self):
        with pytest.raises(ValueError):
            RewardModel(
                np.array([1.0]),
                (0,),
                np.array([1.0]),
                np.array([[0.5, 0.4]]),
                np.array([[0.5, 0.5]]),
            )


class TestGeoBuilder:
    def test_colocated_forwarders_see_identical_distributions(self):
        sc = geo_scenario(DEFAULT_SPEC, 0.0)
        sc = GeoScenario(**{**sc.__dict__, "grid_spacing_m": 20.0})
        model = quiet_build(sc)
        np.testing.assert_array_equal(model.conditional_1, model.conditional_2)
        np.testing.assert_array_equal(model.joint, model.joint.T)

    def test_separation_breaks_symmetry_but_mirrors(self):
        """At separation the players' roles are mirror images of each other."""
        sc = geo_scenario(DEFAULT_SPEC, 10.0)
        sc = GeoScenario(**{**sc.__dict__, "grid_spacing_m": 20.0})
        model = quiet_build(sc)
        marg_sorted_1 = np.sort(model.marginal_1)
        marg_sorted_2 = np.sort(model.marginal_2)
        np.testing.assert_allclose(marg_sorted_1, marg_sorted_2, atol=1e-12)

    def test_location_pmf_is_uniform(self):
        sc = geo_scenario(DEFAULT_SPEC, 0.0)
        sc = GeoScenario(**{**sc.__dict__, "grid_spacing_m": 25.0})
        model = quiet_build(sc)
        L = len(model.locations)
        np.testing.assert_allclose(model.location_probs, np.full(L, 1.0 / L))

    def test_near_field_grid_points_dropped_with_warning(self):
        sc = scenario(grid_spacing_m=2.0, gain_table=((1e-3, 1.0),))
        with pytest.warns(UserWarning):
            build_reward_model(sc)

    def test_empty_region_rejected(self):
        # sink behind both forwarders at point-blank range: no progress anywhere
        sc = scenario(
            forwarder_1=(0.0, 0.0),
            forwarder_2=(0.0, 0.0),
            sink=(0.0, 0.0),
            grid_spacing_m=40.0,
        )
        with pytest.raises(ValueError):
            build_reward_model(sc)

    def test_negative_merge_tolerance_rejected(self):
        sc = geo_scenario(DEFAULT_SPEC, 0.0)
        with pytest.raises(ValueError):
            quiet_build(sc, merge_tolerance=-1.0)

    def test_merge_tolerance_shrinks_value_list(self):
        sc = geo_scenario(DEFAULT_SPEC, 0.0)
        sc = GeoScenario(**{**sc.__dict__, "grid_spacing_m": 20.0})
        exact = quiet_build(sc)
        merged = quiet_build(sc, merge_tolerance=5.0)
        assert merged.n < exact.n
        assert merged.joint.sum() == pytest.approx(1.0)


class TestDefaultScenarioRegression:
    """Frozen facts about the default sensor scenario at its three
    benchmark separations; any change to the geometry or the link budget
    shows up here first."""

    def test_colocated_model_size(self, sensor_model_0):
        assert sensor_model_0.n == 797
        assert len(sensor_model_0.locations) == 382

    def test_colocated_extreme_values(self, sensor_model_0):
        values = sensor_model_0.feasible_values
        assert values[0] == pytest.approx(31.52669066995961, abs=1e-9)
        assert values[1] == pytest.approx(37.108009673572774, abs=1e-9)
        assert values[2] == pytest.approx(38.61215270998209, abs=1e-9)
        assert values[-1] == pytest.approx(2236.06797749979, abs=1e-8)

    def test_separated_model_sizes(self, sensor_model_5, sensor_model_10):
        assert sensor_model_5.n == 1537
        assert len(sensor_model_5.locations) == 399
        assert sensor_model_10.n == 1533
        assert len(sensor_model_10.locations) == 414

    def test_colocated_model_is_exchangeable(self, sensor_model_0):
        np.testing.assert_array_equal(sensor_model_0.joint, sensor_model_0.joint.T)


class TestSerialization:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(31)
        for k in range(5):
            model = make_random_model(rng)
            path = tmp_path / f"model_{k}.yaml"
            save_reward_model(model, path)
            back = load_reward_model(path)
            np.testing.assert_array_equal(back.feasible_values, model.feasible_values)
            np.testing.assert_array_equal(back.location_probs, model.location_probs)
            np.testing.assert_array_equal(back.conditional_1, model.conditional_1)
            np.testing.assert_array_equal(back.conditional_2, model.conditional_2)
            np.testing.assert_array_equal(back.joint, model.joint)

    def test_unknown_format_version_rejected(self, tmp_path):
        rng = np.random.default_rng(37)
        path = tmp_path / "model.yaml"
        save_reward_model(make_random_model(rng), path)
        text = path.read_text().replace("format_version: 1", "format_version: 99")
        path.write_text(text)
        with pytest.raises(ValueError):
            load_reward_model(path)
