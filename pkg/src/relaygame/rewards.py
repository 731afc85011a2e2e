"""Geographic reward model for two-forwarder relay selection.

A forwarding scenario (two forwarder positions, a sink, a transmission range,
a candidate-relay grid and a finite channel-gain table) is turned into a
finite probabilistic reward model: a strictly increasing list of reward
values whose first entry is a distinguished INFEASIBLE sentinel, together
with the joint, marginal and location-conditional probability tables that
every solver in this package consumes.

Reward of a candidate relay location for forwarder rho:

    progress  Z_rho = |v_rho - v0| - |location - v0|
    power     P     = (sensitivity / gain) * (distance / d_ref)^xi
    reward    R     = Z^a / P^(1 - a)

A relay is infeasible for a forwarder when it is out of range, when the
required power exceeds the power budget, or when it offers negative
progress.  Infeasibility is carried as an explicit sentinel object, never
as an IEEE infinity, so downstream arithmetic can never silently produce
NaNs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import yaml

__all__ = [
    "INFEASIBLE",
    "GeoScenario",
    "RewardPmf",
    "RewardModel",
    "compute_progress",
    "required_power",
    "reward_value",
    "build_reward_model",
    "save_reward_model",
    "load_reward_model",
]

_PROB_TOL = 1e-12


class _Infeasible:
    """Sentinel for relays that cannot be used at any admissible power."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "INFEASIBLE"

    def __reduce__(self):
        return (_infeasible_instance, ())


def _infeasible_instance() -> "_Infeasible":
    return INFEASIBLE


INFEASIBLE = _Infeasible()


def is_infeasible(value) -> bool:
    return value is INFEASIBLE


@dataclass(frozen=True)
class GeoScenario:
    """Geometry, channel and trade-off parameters of a forwarding scenario.

    Positions are 2-D points in meters. ``gain_table`` is a list of
    (gain value, probability) pairs describing the finite fading state of
    the channel; probabilities must sum to one.
    """

    forwarder_1: Tuple[float, float]
    forwarder_2: Tuple[float, float]
    sink: Tuple[float, float]
    range_m: float
    grid_spacing_m: float
    pathloss_exponent: float
    reference_distance_m: float
    receiver_sensitivity_mw: float
    max_power_mw: float
    tradeoff_a: float
    gain_table: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValueError("range_m must be positive")
        if self.grid_spacing_m <= 0:
            raise ValueError("grid_spacing_m must be positive")
        if self.pathloss_exponent < 2.0:
            raise ValueError("pathloss_exponent must be >= 2")
        if self.reference_distance_m <= 0:
            raise ValueError("reference_distance_m must be positive")
        if self.receiver_sensitivity_mw <= 0:
            raise ValueError("receiver_sensitivity_mw must be positive")
        if self.max_power_mw <= 0:
            raise ValueError("max_power_mw must be positive")
        if not 0.0 <= self.tradeoff_a <= 1.0:
            raise ValueError("tradeoff_a must lie in [0, 1]")
        if not self.gain_table:
            raise ValueError("gain_table must be nonempty")
        object.__setattr__(
            self, "gain_table", tuple((float(g), float(p)) for g, p in self.gain_table)
        )
        if any(g <= 0 for g, _ in self.gain_table):
            raise ValueError("gains must be positive")
        total = sum(p for _, p in self.gain_table)
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"gain probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "forwarder_1", tuple(float(c) for c in self.forwarder_1))
        object.__setattr__(self, "forwarder_2", tuple(float(c) for c in self.forwarder_2))
        object.__setattr__(self, "sink", tuple(float(c) for c in self.sink))

    def forwarder(self, index: int) -> Tuple[float, float]:
        if index == 1:
            return self.forwarder_1
        if index == 2:
            return self.forwarder_2
        raise ValueError("forwarder index must be 1 or 2")


def _dist(p: Sequence[float], q: Sequence[float]) -> float:
    return float(np.hypot(p[0] - q[0], p[1] - q[1]))


def compute_progress(location, forwarder_index: int, scenario: GeoScenario) -> float:
    """Progress toward the sink offered by ``location`` to one forwarder.

    Defined as the forwarder-to-sink distance minus the location-to-sink
    distance; may be negative, in which case the location cannot belong to
    that forwarder's forwarding region.
    """
    v = scenario.forwarder(forwarder_index)
    return _dist(v, scenario.sink) - _dist(location, scenario.sink)


def required_power(distance_m: float, gain: float, scenario: GeoScenario):
    """Transmit power (mW) needed to reach a relay, or INFEASIBLE.

    Log-distance path loss referenced to ``reference_distance_m``:
    P = (sensitivity / gain) * (distance / d_ref)^xi.  Out-of-range relays
    and powers above the budget are infeasible for every gain.  Distances
    below the reference distance violate the far-field assumption and are
    rejected outright.
    """
    if distance_m < scenario.reference_distance_m:
        raise ValueError(
            f"distance {distance_m} m is below the far-field reference "
            f"distance {scenario.reference_distance_m} m"
        )
    if gain <= 0:
        raise ValueError("gain must be positive")
    if distance_m > scenario.range_m:
        return INFEASIBLE
    ratio = distance_m / scenario.reference_distance_m
    power = (scenario.receiver_sensitivity_mw / gain) * ratio**scenario.pathloss_exponent
    if power > scenario.max_power_mw:
        return INFEASIBLE
    return power


def reward_value(progress: float, power, scenario: GeoScenario):
    """Scalar relay merit R = progress^a / power^(1-a), or INFEASIBLE."""
    if is_infeasible(power):
        return INFEASIBLE
    if power <= 0:
        raise ValueError("feasible power must be positive")
    if progress < 0:
        raise ValueError(
            "negative progress with feasible power: location should have been "
            "excluded from the forwarding region"
        )
    a = scenario.tradeoff_a
    if a == 1.0:
        return float(progress)
    return float(progress**a / power ** (1.0 - a))


@dataclass(frozen=True)
class RewardPmf:
    """Reward distribution of one forwarder.

    ``values`` holds the feasible rewards in strictly increasing order;
    ``probs`` has one extra leading entry, the probability of the
    INFEASIBLE sentinel.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (values.shape[0] + 1,):
            raise ValueError("probs must have exactly one more entry than values")
        if values.size > 1 and not np.all(np.diff(values) > 0):
            raise ValueError("reward values must be strictly increasing")
        if np.any(probs < -_PROB_TOL):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")
        values.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @property
    def infeasible_prob(self) -> float:
        return float(self.probs[0])

    @property
    def n(self) -> int:
        """Number of reward indices including the sentinel."""
        return int(self.probs.shape[0])


@dataclass(frozen=True)
class RewardModel:
    """Finite reward model shared by both forwarders.

    Index 0 of every probability axis is the INFEASIBLE sentinel;
    ``feasible_values[k]`` is the reward at index k+1.  The joint table is
    always the location mixture of the per-forwarder conditionals, which is
    exactly the conditional-independence structure the partially observable
    solver requires.
    """

    feasible_values: np.ndarray           # strictly increasing, length n - 1
    locations: Tuple                      # location identifiers, length L
    location_probs: np.ndarray            # (L,)
    conditional_1: np.ndarray             # (L, n)
    conditional_2: np.ndarray             # (L, n)
    joint: np.ndarray = field(default=None)       # (n, n)
    marginal_1: np.ndarray = field(default=None)  # (n,)
    marginal_2: np.ndarray = field(default=None)  # (n,)

    def __post_init__(self):
        values = np.asarray(self.feasible_values, dtype=float)
        q = np.asarray(self.location_probs, dtype=float)
        c1 = np.asarray(self.conditional_1, dtype=float)
        c2 = np.asarray(self.conditional_2, dtype=float)
        n = values.shape[0] + 1
        L = q.shape[0]
        if c1.shape != (L, n) or c2.shape != (L, n):
            raise ValueError("conditional tables must have shape (L, n)")
        if values.size > 1 and not np.all(np.diff(values) > 0):
            raise ValueError("feasible reward values must be strictly increasing")
        if abs(float(q.sum()) - 1.0) > _PROB_TOL:
            raise ValueError("location probabilities must sum to 1")
        for name, table in (("conditional_1", c1), ("conditional_2", c2)):
            sums = table.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > _PROB_TOL):
                raise ValueError(f"{name} rows must each sum to 1")
        joint = self.joint
        if joint is None:
            joint = _assemble_joint(q, c1, c2)
        else:
            joint = np.asarray(joint, dtype=float)
        marginal_1 = self.marginal_1
        marginal_2 = self.marginal_2
        if marginal_1 is None:
            marginal_1 = joint.sum(axis=1)
        else:
            marginal_1 = np.asarray(marginal_1, dtype=float)
        if marginal_2 is None:
            marginal_2 = joint.sum(axis=0)
        else:
            marginal_2 = np.asarray(marginal_2, dtype=float)
        if abs(float(joint.sum()) - 1.0) > _PROB_TOL:
            raise ValueError("joint table must sum to 1")
        for arr in (values, q, c1, c2, joint, marginal_1, marginal_2):
            arr.setflags(write=False)
        object.__setattr__(self, "feasible_values", values)
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "location_probs", q)
        object.__setattr__(self, "conditional_1", c1)
        object.__setattr__(self, "conditional_2", c2)
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "marginal_1", marginal_1)
        object.__setattr__(self, "marginal_2", marginal_2)

    @property
    def n(self) -> int:
        """Number of reward indices including the sentinel at index 0."""
        return int(self.feasible_values.shape[0]) + 1

    def reward_at(self, index: int):
        """Reward value at a 0-based model index (0 is the sentinel)."""
        if index == 0:
            return INFEASIBLE
        return float(self.feasible_values[index - 1])

    def marginal(self, forwarder_index: int) -> np.ndarray:
        if forwarder_index == 1:
            return self.marginal_1
        if forwarder_index == 2:
            return self.marginal_2
        raise ValueError("forwarder index must be 1 or 2")

    def conditional(self, forwarder_index: int) -> np.ndarray:
        if forwarder_index == 1:
            return self.conditional_1
        if forwarder_index == 2:
            return self.conditional_2
        raise ValueError("forwarder index must be 1 or 2")

    def marginal_pmf(self, forwarder_index: int) -> RewardPmf:
        return RewardPmf(self.feasible_values.copy(), self.marginal(forwarder_index).copy())

    def factorization_residual(self) -> float:
        """Max deviation of the joint from its location-mixture factorization."""
        rebuilt = _assemble_joint(self.location_probs, self.conditional_1, self.conditional_2)
        return float(np.max(np.abs(rebuilt - self.joint)))

    def swap_players(self) -> "RewardModel":
        """The same model with the two forwarder roles exchanged."""
        return RewardModel(
            feasible_values=self.feasible_values.copy(),
            locations=self.locations,
            location_probs=self.location_probs.copy(),
            conditional_1=self.conditional_2.copy(),
            conditional_2=self.conditional_1.copy(),
            joint=np.ascontiguousarray(self.joint.T),
            marginal_1=self.marginal_2.copy(),
            marginal_2=self.marginal_1.copy(),
        )


def _assemble_joint(q: np.ndarray, cond1: np.ndarray, cond2: np.ndarray) -> np.ndarray:
    n = cond1.shape[1]
    joint = np.zeros((n, n))
    for ell in range(q.shape[0]):
        joint += q[ell] * np.outer(cond1[ell], cond2[ell])
    return joint


def _grid_locations(scenario: GeoScenario) -> List[Tuple[float, float]]:
    """Candidate grid points within range of either forwarder."""
    s = scenario.grid_spacing_m
    centers = [scenario.forwarder_1, scenario.forwarder_2]
    xs = [c[0] for c in centers]
    ys = [c[1] for c in centers]
    d = scenario.range_m
    kx_lo = int(np.floor((min(xs) - d) / s))
    kx_hi = int(np.ceil((max(xs) + d) / s))
    ky_lo = int(np.floor((min(ys) - d) / s))
    ky_hi = int(np.ceil((max(ys) + d) / s))
    points = []
    for kx in range(kx_lo, kx_hi + 1):
        for ky in range(ky_lo, ky_hi + 1):
            p = (kx * s, ky * s)
            if min(_dist(p, c) for c in centers) <= d:
                points.append(p)
    return points


def _in_region(point, forwarder_index: int, scenario: GeoScenario) -> bool:
    v = scenario.forwarder(forwarder_index)
    return (
        _dist(point, v) <= scenario.range_m
        and compute_progress(point, forwarder_index, scenario) >= 0.0
    )


def _merge_values(values: np.ndarray, tolerance: float) -> Tuple[np.ndarray, np.ndarray]:
    """Collapse sorted values whose consecutive gaps are <= tolerance.

    Returns the merged representatives and, for each input value, the index
    of its representative.
    """
    if tolerance < 0:
        raise ValueError("merge_tolerance must be >= 0")
    if values.size == 0:
        return values, np.zeros(0, dtype=int)
    group = np.zeros(values.shape[0], dtype=int)
    current = 0
    for k in range(1, values.shape[0]):
        if values[k] - values[k - 1] > tolerance:
            current += 1
        group[k] = current
    merged = np.array([values[group == g].mean() for g in range(current + 1)])
    return merged, group


def build_reward_model(scenario: GeoScenario, merge_tolerance: float = 0.0) -> RewardModel:
    """Enumerate the scenario into a finite RewardModel.

    Every (location, gain, gain) triple is evaluated; the distinct feasible
    reward values form the reward list (values closer than
    ``merge_tolerance`` are collapsed; the default keeps the exact set).
    The location pmf is uniform over the combined forwarding region, and
    grid points closer than the far-field reference distance to either
    forwarder are dropped with a warning.
    """
    candidates = _grid_locations(scenario)
    dropped = [
        p
        for p in candidates
        if min(_dist(p, scenario.forwarder_1), _dist(p, scenario.forwarder_2))
        < scenario.reference_distance_m
    ]
    if dropped:
        warnings.warn(
            f"dropping {len(dropped)} grid point(s) closer than the reference "
            f"distance {scenario.reference_distance_m} m to a forwarder",
            stacklevel=2,
        )
    kept = [p for p in candidates if p not in set(dropped)]
    locations = [
        p for p in kept if _in_region(p, 1, scenario) or _in_region(p, 2, scenario)
    ]
    if not locations:
        raise ValueError("combined forwarding region is empty after discretization")

    gains = scenario.gain_table
    # Raw reward of (location, forwarder, gain); None marks infeasibility.
    raw: Dict[Tuple[int, int, int], float] = {}
    pool: List[float] = []
    for li, point in enumerate(locations):
        for rho in (1, 2):
            if not _in_region(point, rho, scenario):
                continue
            distance = _dist(point, scenario.forwarder(rho))
            progress = compute_progress(point, rho, scenario)
            for gi, (gain, _) in enumerate(gains):
                power = required_power(distance, gain, scenario)
                if is_infeasible(power):
                    continue
                r = reward_value(progress, power, scenario)
                raw[(li, rho, gi)] = r
                pool.append(r)

    if not pool:
        raise ValueError("no feasible (location, gain) combination in the region")
    distinct = np.unique(np.asarray(pool, dtype=float))
    merged, group = _merge_values(distinct, merge_tolerance)
    index_of = {float(v): int(group[k]) + 1 for k, v in enumerate(distinct)}

    n = merged.shape[0] + 1
    L = len(locations)
    q = np.full(L, 1.0 / L)
    cond = {1: np.zeros((L, n)), 2: np.zeros((L, n))}
    for li in range(L):
        for rho in (1, 2):
            for gi, (_, gp) in enumerate(gains):
                key = (li, rho, gi)
                if key in raw:
                    cond[rho][li, index_of[float(raw[key])]] += gp
                else:
                    cond[rho][li, 0] += gp

    return RewardModel(
        feasible_values=merged,
        locations=tuple(locations),
        location_probs=q,
        conditional_1=cond[1],
        conditional_2=cond[2],
    )


_MODEL_FORMAT_VERSION = 1


def save_reward_model(model: RewardModel, path) -> None:
    """Write a RewardModel to a versioned YAML document.

    Only the generating tables (rewards, location pmf, sparse conditionals)
    are stored; the joint and marginals are reassembled on load by the same
    accumulation the builder uses, so a round trip is bit-exact.
    """
    def sparse(row: np.ndarray) -> Dict[int, float]:
        return {int(i): float(p) for i, p in enumerate(row) if p != 0.0}

    doc = {
        "format_version": _MODEL_FORMAT_VERSION,
        "feasible_values": [float(v) for v in model.feasible_values],
        "locations": [list(loc) if isinstance(loc, (tuple, list)) else loc
                      for loc in model.locations],
        "location_probs": [float(p) for p in model.location_probs],
        "conditional_1": [sparse(model.conditional_1[k]) for k in range(len(model.locations))],
        "conditional_2": [sparse(model.conditional_2[k]) for k in range(len(model.locations))],
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_reward_model(path) -> RewardModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    version = doc.get("format_version")
    if version != _MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported reward model format version: {version!r}")
    values = np.asarray(doc["feasible_values"], dtype=float)
    q = np.asarray(doc["location_probs"], dtype=float)
    n = values.shape[0] + 1
    L = q.shape[0]

    def dense(rows) -> np.ndarray:
        table = np.zeros((L, n))
        for k, row in enumerate(rows):
            for i, p in row.items():
                table[k, int(i)] = float(p)
        return table

    locations = tuple(
        tuple(loc) if isinstance(loc, list) else loc for loc in doc["locations"]
    )
    return RewardModel(
        feasible_values=values,
        locations=locations,
        location_probs=q,
        conditional_1=dense(doc["conditional_1"]),
        conditional_2=dense(doc["conditional_2"]),
    )
