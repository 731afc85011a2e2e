"""End-to-end duty-cycled relay network simulation.

Nodes are placed uniformly in a square, wake once per period at a random
phase, and forward packets geographically: a packet holder watches its
forwarding-region neighbors wake up one by one, computes a reward for
each (progress toward the sink traded off against the transmit power the
link needs), and hands the packet over the first time a reward clears
the holder's single-agent threshold.  If a full period passes without a
qualifying relay the packet goes to the best feasible relay seen in that
period, at the power recorded when that relay woke.  Several holders
stopping on the same wake instant contend and a uniform winner takes the
relay.  Background packets arrive as a Poisson stream at uniformly
random relay nodes and follow the same policy; only the source's packets
are measured.

The sink is infrastructure, not a node: it is always listening, and a
holder within radio range tries a direct delivery with a fresh gain draw
on acquiring a packet and again at each fallback deadline.

Event-driven implementation notes: only wake events that could trigger
an early stop (neighbors whose best-gain reward clears the holder's
threshold) go on the heap; the remaining neighbors of the period are
sampled lazily when the fallback deadline fires, in slot order, which
draws from the same RNG stream deterministically and leaves the
distribution of the fallback choice unchanged.  Node occupancy over time
is kept as per-node busy intervals so those lazy evaluations can ask
whether a relay was free at its earlier wake instant.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .rewards import is_infeasible, required_power, reward_value
from .stopping import GameConfig, RewardPmf, solve_threshold

__all__ = [
    "NetSimConfig",
    "Network",
    "PacketRecord",
    "NetSimResult",
    "build_network",
    "node_threshold",
    "simulate",
]

_EVENT_WAKE = 0
_EVENT_DEADLINE = 1
_EVENT_BACKGROUND = 2

_DEFAULT_GAIN_TABLE = (
    (0.4e-3, 0.25),
    (0.6e-3, 0.25),
    (0.8e-3, 0.25),
    (1.0e-3, 0.25),
)


@dataclass(frozen=True)
class NetSimConfig:
    """Network, channel, and traffic parameters for one simulation run.

    The channel and power fields carry the same names and meaning as in
    GeoScenario, so this object can be passed wherever those fields are
    read.  The seed is mandatory: runs never draw ambient entropy.
    """

    rng_seed: int
    area_m: float = 1000.0
    node_count: int = 1000
    source_position: Tuple[float, float] = (0.0, 1000.0)
    sink_position: Tuple[float, float] = (1000.0, 0.0)
    duty_period_s: float = 0.1
    packet_rate_hz: float = 0.0
    source_packet_count: int = 100
    eta: float = 100.0
    range_m: float = 80.0
    pathloss_exponent: float = 2.5
    reference_distance_m: float = 5.0
    receiver_sensitivity_mw: float = 1e-9
    max_power_mw: float = 1.0
    tradeoff_a: float = 0.5
    gain_table: Tuple[Tuple[float, float], ...] = _DEFAULT_GAIN_TABLE
    max_hold_periods: int = 10
    literal_interwake: bool = False
    safety_horizon_s: float = 3600.0

    def __post_init__(self):
        if not isinstance(self.rng_seed, int):
            raise TypeError("rng_seed must be an integer (no ambient entropy)")
        for name in (
            "area_m", "duty_period_s", "source_packet_count", "eta", "range_m",
            "pathloss_exponent", "reference_distance_m", "receiver_sensitivity_mw",
            "max_power_mw", "safety_horizon_s",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.node_count <= 0:
            raise ValueError("node_count must be positive")
        if self.packet_rate_hz < 0:
            raise ValueError("packet_rate_hz must be nonnegative")
        if not 0.0 < self.tradeoff_a <= 1.0:
            raise ValueError("tradeoff_a must lie in (0, 1]")
        if self.max_hold_periods < 1:
            raise ValueError("max_hold_periods must be at least 1")
        table = tuple((float(g), float(p)) for g, p in self.gain_table)
        if not table or any(g <= 0 or p < 0 for g, p in table):
            raise ValueError("gain_table entries must have positive gain")
        if abs(sum(p for _, p in table) - 1.0) > 1e-12:
            raise ValueError("gain probabilities must sum to 1")
        object.__setattr__(self, "gain_table", table)


@dataclass
class _NeighborLink:
    """Static per-(holder, neighbor) channel data, one entry per gain."""

    node_id: int
    phase: float
    rewards: List[Optional[float]]
    powers: List[Optional[float]]
    best_reward: float


@dataclass
class Network:
    config: NetSimConfig
    positions: np.ndarray
    phases: np.ndarray
    source_id: int
    neighbor_links: List[List[_NeighborLink]]
    thresholds: np.ndarray
    void: np.ndarray
    sink_distances: np.ndarray
    sink_powers: List[List[Optional[float]]]
    sink_possible: np.ndarray

    @property
    def neighbor_counts(self) -> np.ndarray:
        return np.array([len(links) for links in self.neighbor_links])


def _local_reward_pmf(links: List[_NeighborLink], gain_probs) -> RewardPmf:
    """Reward pmf at a relay arrival: uniform neighbor, independent gain."""
    if not links:
        raise ValueError("node has no forwarding neighbors")
    weight = 1.0 / len(links)
    values = []
    probs = []
    infeasible = 0.0
    for link in links:
        for g_index, g_prob in enumerate(gain_probs):
            mass = weight * g_prob
            reward = link.rewards[g_index]
            if reward is None:
                infeasible += mass
            else:
                values.append(reward)
                probs.append(mass)
    if not values:
        raise ValueError("every neighbor-gain combination is infeasible")
    arr = np.array(values)
    mass = np.array(probs)
    uniq, inverse = np.unique(arr, return_inverse=True)
    merged = np.zeros_like(uniq)
    np.add.at(merged, inverse, mass)
    return RewardPmf(
        values=uniq,
        probs=np.concatenate(([infeasible], merged)),
    )


def node_threshold(node: int, network: Network, config: NetSimConfig) -> float:
    """Single-agent stopping threshold of one node's local reward process.

    Relay arrivals at a holder are its neighbors' wake instants; with N_i
    neighbors waking once per period the mean inter-arrival time is
    T/N_i (or the literal 1/N_i seconds behind the config switch).
    """
    links = network.neighbor_links[node]
    if not links:
        raise ValueError(f"node {node} has no forwarding neighbors")
    gain_probs = [p for _, p in config.gain_table]
    pmf = _local_reward_pmf(links, gain_probs)
    count = len(links)
    tau = (1.0 / count) if config.literal_interwake else (config.duty_period_s / count)
    game = GameConfig(
        mean_interarrival_s=tau,
        tradeoff_1=config.eta,
        tradeoff_2=config.eta,
        win_prob_1=0.5,
    )
    return solve_threshold(pmf, game, 1).alpha


def build_network(config: NetSimConfig) -> Network:
    """Place nodes, draw wake phases, and precompute link tables.

    Node ids 0..node_count-1 are relays; the source gets the last id and
    no wake phase (nothing ever forwards to it).  The sink is a position,
    not a node.  A node whose every neighbor-gain combination is
    infeasible gets threshold +inf (it can never stop early) but is not
    void; void means an empty forwarding region.
    """
    seed_build, _ = np.random.SeedSequence(config.rng_seed).spawn(2)
    rng = np.random.Generator(np.random.PCG64(seed_build))
    count = config.node_count
    relay_positions = rng.uniform(0.0, config.area_m, size=(count, 2))
    phases = rng.uniform(0.0, config.duty_period_s, size=count)
    positions = np.vstack(
        [relay_positions, np.asarray(config.source_position, dtype=float)]
    )
    source_id = count
    sink = np.asarray(config.sink_position, dtype=float)
    sink_distances = np.hypot(positions[:, 0] - sink[0], positions[:, 1] - sink[1])
    gains = [g for g, _ in config.gain_table]

    neighbor_links: List[List[_NeighborLink]] = []
    for i in range(count + 1):
        deltas = relay_positions - positions[i]
        dists = np.hypot(deltas[:, 0], deltas[:, 1])
        progress = sink_distances[i] - sink_distances[:count]
        eligible = (
            (dists >= config.reference_distance_m)
            & (dists <= config.range_m)
            & (progress > 0.0)
        )
        if i < count:
            eligible[i] = False
        links = []
        for j in np.nonzero(eligible)[0]:
            rewards: List[Optional[float]] = []
            powers: List[Optional[float]] = []
            best = -math.inf
            for g in gains:
                power = required_power(float(dists[j]), g, config)
                if is_infeasible(power):
                    rewards.append(None)
                    powers.append(None)
                    continue
                reward = reward_value(float(progress[j]), power, config)
                rewards.append(float(reward))
                powers.append(float(power))
                best = max(best, float(reward))
            links.append(
                _NeighborLink(
                    node_id=int(j),
                    phase=float(phases[j]),
                    rewards=rewards,
                    powers=powers,
                    best_reward=best,
                )
            )
        neighbor_links.append(links)

    void = np.array([len(links) == 0 for links in neighbor_links])

    sink_powers: List[List[Optional[float]]] = []
    sink_possible = np.zeros(count + 1, dtype=bool)
    for i in range(count + 1):
        if sink_distances[i] > config.range_m:
            sink_powers.append([None] * len(gains))
            continue
        dist = max(float(sink_distances[i]), config.reference_distance_m)
        row: List[Optional[float]] = []
        for g in gains:
            power = required_power(dist, g, config)
            row.append(None if is_infeasible(power) else float(power))
        sink_powers.append(row)
        sink_possible[i] = any(p is not None for p in row)

    network = Network(
        config=config,
        positions=positions,
        phases=phases,
        source_id=source_id,
        neighbor_links=neighbor_links,
        thresholds=np.full(count + 1, np.inf),
        void=void,
        sink_distances=sink_distances,
        sink_powers=sink_powers,
        sink_possible=sink_possible,
    )
    for i in range(count + 1):
        if void[i]:
            continue
        try:
            network.thresholds[i] = node_threshold(i, network, config)
        except ValueError:
            network.thresholds[i] = np.inf
    return network


@dataclass(frozen=True)
class PacketRecord:
    packet_id: int
    is_source: bool
    generated_s: float
    delivered: bool
    reason: str
    delay_s: float
    power_mw: float
    hops: int
    contentions: int


@dataclass(frozen=True)
class NetSimResult:
    records: Tuple[PacketRecord, ...]
    mean_delay: float
    se_delay: float
    mean_power: float
    se_power: float
    delivered_count: int
    dropped_count: int
    background_count: int
    partial: bool


class _UniformStream:
    """Buffered uniform(0,1) draws from one generator."""

    def __init__(self, rng: np.random.Generator, block: int = 1 << 14):
        self._rng = rng
        self._block = block
        self._buf = rng.random(block)
        self._pos = 0

    def draw(self) -> float:
        if self._pos == self._block:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        value = self._buf[self._pos]
        self._pos += 1
        return float(value)


class _BusyLog:
    """Per-node occupancy intervals; free exactly at acquire/release instants."""

    def __init__(self, count: int):
        self.hold_count = [0] * count
        self.closed: List[List[Tuple[float, float]]] = [[] for _ in range(count)]
        self.open_start: List[Optional[float]] = [None] * count

    def acquire(self, node: int, t: float):
        if self.hold_count[node] == 0:
            self.open_start[node] = t
        self.hold_count[node] += 1

    def release(self, node: int, t: float):
        self.hold_count[node] -= 1
        if self.hold_count[node] == 0:
            start = self.open_start[node]
            self.open_start[node] = None
            if t > start:
                self.closed[node].append((start, t))

    def busy_at(self, node: int, t: float) -> bool:
        start = self.open_start[node]
        if start is not None and start < t:
            return True
        for lo, hi in reversed(self.closed[node]):
            if hi <= t:
                return False
            if lo < t:
                return True
        return False


@dataclass
class _Packet:
    packet_id: int
    is_source: bool
    generated_s: float
    holder: int = -1
    acquired_s: float = 0.0
    period_start_s: float = 0.0
    deadline_s: float = 0.0
    periods_held: int = 0
    power_mw: float = 0.0
    hops: int = 0
    contentions: int = 0
    best: Dict[int, Tuple[float, float]] = field(default_factory=dict)


def _next_wake(phase: float, after: float, period: float) -> float:
    """First wake instant strictly after a time."""
    k = math.floor((after - phase) / period) + 1
    wake = phase + k * period
    while wake <= after:
        k += 1
        wake = phase + k * period
    return wake


class _Simulation:
    def __init__(self, network: Network, config: NetSimConfig):
        self.network = network
        self.config = config
        _, seed_sim = np.random.SeedSequence(config.rng_seed).spawn(2)
        self.uniforms = _UniformStream(np.random.Generator(np.random.PCG64(seed_sim)))
        self.gain_cum = tuple(
            float(c) for c in np.cumsum([p for _, p in config.gain_table])
        )
        self.events: list = []
        self.serial = 0
        self.busy = _BusyLog(config.node_count + 1)
        self.active: Dict[int, _Packet] = {}
        self.records: List[PacketRecord] = []
        self.last_wake: Dict[int, float] = {}
        self.next_packet_id = 0
        self.source_done = 0
        self.source_remaining = 0
        self.background_count = 0
        self.partial = False
        # Which active packets are waiting on a relay's wake this period,
        # keyed by packet id with the registered (period start, deadline);
        # stale entries are pruned lazily when the relay next wakes.
        self.watchers: List[Dict[int, Tuple[float, float]]] = [
            {} for _ in range(config.node_count + 1)
        ]
        # Stoppable neighbors can clear the holder's threshold at their
        # best gain and get real wake events; the rest only ever matter
        # for the fallback and are sampled lazily at the deadline.  Link
        # data is flattened into tuples to keep the hot loops cheap.
        self.stoppable: List[Dict[int, tuple]] = []
        self.lazy_cold: List[List[tuple]] = []
        for node, links in enumerate(network.neighbor_links):
            alpha = network.thresholds[node]
            hot: Dict[int, tuple] = {}
            cold: List[tuple] = []
            for link in links:
                entry = (link.phase, tuple(link.rewards), tuple(link.powers))
                if link.best_reward >= alpha:
                    hot[link.node_id] = entry
                else:
                    cold.append((link.node_id,) + entry)
            self.stoppable.append(hot)
            self.lazy_cold.append(cold)

    def push(self, time: float, kind: int, key: int):
        heapq.heappush(self.events, (time, kind, key, self.serial))
        self.serial += 1

    def draw_gain_index(self) -> int:
        u = self.uniforms.draw()
        for index, cum in enumerate(self.gain_cum):
            if u < cum:
                return index
        return len(self.gain_cum) - 1

    def spawn_source_packet(self, t: float):
        packet = _Packet(
            packet_id=self.next_packet_id, is_source=True, generated_s=t
        )
        self.next_packet_id += 1
        self.active[packet.packet_id] = packet
        self.busy.acquire(self.network.source_id, t)
        self.arrive(packet, self.network.source_id, t)

    def spawn_background_packet(self, t: float):
        node = min(
            int(self.uniforms.draw() * self.config.node_count),
            self.config.node_count - 1,
        )
        packet = _Packet(
            packet_id=self.next_packet_id, is_source=False, generated_s=t
        )
        self.next_packet_id += 1
        self.background_count += 1
        self.active[packet.packet_id] = packet
        self.busy.acquire(node, t)
        self.arrive(packet, node, t)

    def finalize(self, packet: _Packet, t: float, delivered: bool, reason: str):
        del self.active[packet.packet_id]
        self.records.append(
            PacketRecord(
                packet_id=packet.packet_id,
                is_source=packet.is_source,
                generated_s=packet.generated_s,
                delivered=delivered,
                reason=reason,
                delay_s=t - packet.generated_s,
                power_mw=packet.power_mw,
                hops=packet.hops,
                contentions=packet.contentions,
            )
        )
        if packet.is_source:
            self.source_done += 1
            if self.source_remaining > 0:
                self.source_remaining -= 1
                self.spawn_source_packet(t)

    def try_sink(self, packet: _Packet, t: float) -> bool:
        node = packet.holder
        if not self.network.sink_possible[node]:
            return False
        power = self.network.sink_powers[node][self.draw_gain_index()]
        if power is None:
            return False
        packet.power_mw += power
        packet.hops += 1
        self.busy.release(node, t)
        self.finalize(packet, t, True, "")
        return True

    def arrive(self, packet: _Packet, node: int, t: float):
        """Packet lands on a node: try the sink, then start a waiting period."""
        packet.holder = node
        packet.acquired_s = t
        packet.periods_held = 0
        if self.try_sink(packet, t):
            return
        if self.network.void[node]:
            self.busy.release(node, t)
            self.finalize(packet, t, False, "void")
            return
        self.start_period(packet, t)

    def start_period(self, packet: _Packet, t: float):
        period = self.config.duty_period_s
        packet.period_start_s = t
        packet.deadline_s = t + period
        packet.best = {}
        self.push(packet.deadline_s, _EVENT_DEADLINE, packet.packet_id)
        for relay, (phase, _, _) in self.stoppable[packet.holder].items():
            wake = _next_wake(phase, t, period)
            if wake <= packet.deadline_s:
                self.watchers[relay][packet.packet_id] = (t, packet.deadline_s)
                self.push(wake, _EVENT_WAKE, relay)

    def transmit(self, packet: _Packet, relay: int, power: float, t: float):
        self.busy.release(packet.holder, t)
        packet.power_mw += power
        packet.hops += 1
        self.busy.acquire(relay, t)
        self.arrive(packet, relay, t)

    def handle_wake(self, relay: int, t: float):
        if self.last_wake.get(relay) == t:
            return
        self.last_wake[relay] = t
        if self.busy.hold_count[relay] > 0:
            return
        stoppers = []
        registry = self.watchers[relay]
        for packet_id, window in list(registry.items()):
            packet = self.active.get(packet_id)
            if packet is None or (packet.period_start_s, packet.deadline_s) != window:
                del registry[packet_id]
                continue
            if not packet.period_start_s < t <= packet.deadline_s:
                continue
            holder = packet.holder
            _, rewards, powers = self.stoppable[holder][relay]
            g_index = self.draw_gain_index()
            reward = rewards[g_index]
            if reward is None:
                continue
            power = powers[g_index]
            held = packet.best.get(relay)
            if held is None or reward > held[0]:
                packet.best[relay] = (reward, power)
            if reward >= self.network.thresholds[holder]:
                stoppers.append((packet, power))
        if not stoppers:
            return
        if len(stoppers) == 1:
            winner, power = stoppers[0]
        else:
            for packet, _ in stoppers:
                packet.contentions += 1
            index = min(
                int(self.uniforms.draw() * len(stoppers)), len(stoppers) - 1
            )
            winner, power = stoppers[index]
        self.transmit(winner, relay, power, t)

    def handle_deadline(self, packet_id: int, t: float):
        packet = self.active.get(packet_id)
        if packet is None or packet.deadline_s != t:
            return
        if self.try_sink(packet, t):
            return
        holder = packet.holder
        candidates = dict(packet.best)
        period = self.config.duty_period_s
        for node_id, phase, rewards, powers in self.lazy_cold[holder]:
            wake = _next_wake(phase, packet.period_start_s, period)
            if wake > t or self.busy.busy_at(node_id, wake):
                continue
            g_index = self.draw_gain_index()
            reward = rewards[g_index]
            if reward is None:
                continue
            held = candidates.get(node_id)
            if held is None or reward > held[0]:
                candidates[node_id] = (reward, powers[g_index])
        choice = None
        for relay in sorted(candidates, key=lambda n: (-candidates[n][0], n)):
            if self.busy.hold_count[relay] == 0:
                choice = relay
                break
        if choice is not None:
            self.transmit(packet, choice, candidates[choice][1], t)
            return
        packet.periods_held += 1
        if packet.periods_held >= self.config.max_hold_periods:
            self.busy.release(holder, t)
            self.finalize(packet, t, False, "stuck")
            return
        self.start_period(packet, t)

    def run(self) -> NetSimResult:
        config = self.config
        self.source_remaining = config.source_packet_count - 1
        self.spawn_source_packet(0.0)
        rate = config.packet_rate_hz
        if rate > 0.0:
            first = -math.log(1.0 - self.uniforms.draw()) / rate
            self.push(first, _EVENT_BACKGROUND, 0)
        while self.events and self.source_done < config.source_packet_count:
            time, kind, key, _ = heapq.heappop(self.events)
            if time > config.safety_horizon_s:
                self.partial = True
                break
            if kind == _EVENT_WAKE:
                self.handle_wake(key, time)
            elif kind == _EVENT_DEADLINE:
                self.handle_deadline(key, time)
            else:
                self.spawn_background_packet(time)
                gap = -math.log(1.0 - self.uniforms.draw()) / rate
                self.push(time + gap, _EVENT_BACKGROUND, 0)
        if self.source_done < config.source_packet_count:
            self.partial = True

        source_records = [r for r in self.records if r.is_source]
        delivered = [r for r in source_records if r.delivered]

        def mean_se(values):
            if not values:
                return 0.0, 0.0
            arr = np.array(values)
            mean = float(arr.mean())
            if arr.size < 2:
                return mean, 0.0
            return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))

        mean_delay, se_delay = mean_se([r.delay_s for r in delivered])
        mean_power, se_power = mean_se([r.power_mw for r in delivered])
        return NetSimResult(
            records=tuple(source_records),
            mean_delay=mean_delay,
            se_delay=se_delay,
            mean_power=mean_power,
            se_power=se_power,
            delivered_count=len(delivered),
            dropped_count=len(source_records) - len(delivered),
            background_count=self.background_count,
            partial=self.partial,
        )


def simulate(network: Network, config: NetSimConfig) -> NetSimResult:
    """Run one deterministic simulation of the configured traffic."""
    if network.config is not config and network.config != config:
        raise ValueError("network was built from a different configuration")
    return _Simulation(network, config).run()
