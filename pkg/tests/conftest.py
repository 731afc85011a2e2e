"""Shared model builders and session fixtures.

The geographic fixtures reproduce the default sensor scenario at the three
forwarder separations the benchmarks use; they are session scoped because
enumerating the 5 m grid takes a few seconds and every downstream test
treats the models as read-only.
"""

import warnings

import numpy as np
import pytest

from relaygame import GameConfig, RewardModel, build_reward_model
from relaygame.cli import DEFAULT_SPEC, game_config, geo_scenario


def make_random_model(rng, n_max=6, loc_max=4):
    """Small random reward model with independent location-conditionals."""
    n_vals = int(rng.integers(1, n_max))
    L = int(rng.integers(1, loc_max + 1))
    values = np.sort(rng.uniform(0.5, 50.0, size=n_vals))
    while n_vals > 1 and np.min(np.diff(values)) < 1e-6:
        values = np.sort(rng.uniform(0.5, 50.0, size=n_vals))
    q = rng.dirichlet(np.ones(L))
    conc = float(rng.uniform(0.3, 2.0))
    cond_1 = rng.dirichlet(np.full(n_vals + 1, conc), size=L)
    cond_2 = rng.dirichlet(np.full(n_vals + 1, conc), size=L)
    return RewardModel(values, tuple(range(L)), q, cond_1, cond_2)


def single_location_model(values, probs_1, probs_2=None):
    """One-location model; probs carry the leading infeasible mass."""
    if probs_2 is None:
        probs_2 = probs_1
    return RewardModel(
        np.asarray(values, dtype=float),
        (0,),
        np.array([1.0]),
        np.asarray(probs_1, dtype=float)[None, :],
        np.asarray(probs_2, dtype=float)[None, :],
    )


def random_config(rng):
    return GameConfig(
        mean_interarrival_s=float(rng.uniform(0.01, 0.5)),
        tradeoff_1=float(rng.uniform(0.5, 4.0)),
        tradeoff_2=float(rng.uniform(0.5, 4.0)),
        win_prob_1=float(rng.uniform(0.05, 0.95)),
    )


def zero_diagonal_symmetric_model():
    """Symmetric model whose forwarders never see the same feasible reward.

    Each location gives the two forwarders disjoint feasible supports and
    the two locations swap the roles, so exchanging players maps the model
    onto itself while no state ever offers both forwarders an identical
    reward.  That keeps the cooperative tie-break rule out of play.
    """
    values = np.array([4.0, 9.0, 14.0, 21.0])
    low = np.array([0.1, 0.5, 0.4, 0.0, 0.0])
    high = np.array([0.1, 0.0, 0.0, 0.6, 0.3])
    return RewardModel(
        values,
        (0, 1),
        np.array([0.5, 0.5]),
        np.stack([low, high]),
        np.stack([high, low]),
    )


def mid_band_active_model():
    """Hand-tuned instance whose equilibrium keeps a reward atom strictly
    between the competitive and lone thresholds, so the three equilibrium
    selections genuinely differ."""
    values = np.array([5.0, 12.0, 18.0, 20.59889096, 29.0])
    probs = np.concatenate([[0.02], np.ones(5)]) / 5.02
    return single_location_model(values, probs)


MID_BAND_CONFIG = GameConfig(0.5, 0.3, 0.3, 0.5)


def _default_model(theta):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_reward_model(geo_scenario(DEFAULT_SPEC, theta))


@pytest.fixture(scope="session")
def sensor_config():
    return game_config(DEFAULT_SPEC)


@pytest.fixture(scope="session")
def sensor_model_0():
    return _default_model(0.0)


@pytest.fixture(scope="session")
def sensor_model_5():
    return _default_model(5.0)


@pytest.fixture(scope="session")
def sensor_model_10():
    return _default_model(10.0)
