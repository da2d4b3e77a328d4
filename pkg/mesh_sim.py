"""
Discrete-event simulation of the sensor mesh.

Each sensor node is a simpy process that samples its source, runs in-sensor
analytics and pays for radio activity out of a battery ledger kept in whole
picocoulombs. Leakage and per-sample compute drain continuously; the node
only wakes when its source changes, an uplink is due or its battery runs out.
Clustered modes add one process per cluster that runs BLE broadcast rounds,
uplinks a spatially compressed payload and rotates the head role.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Generator, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import simpy

import config
import trace_io
from ci_cas_protocol import (
    BatteryReport,
    BlePacket,
    CasController,
    UplinkPayload,
    broadcast_slot_delay,
    decode_broadcast,
    encode_broadcast,
    form_clusters,
    spatial_compress,
)
from energy_core import CiEnergyParams, leakage_bound_lifetime, lora_airtime, network_lifetime_ci, network_lifetime_ci_cas
from exceptions import RouteUnavailableError, SimulationError, TraceUnderrunError
from isa_codec import (
    AnomalyDetector,
    AnomalyEvent,
    Channel,
    CompressedSeries,
    SensorSample,
    SensorTrace,
    TemporalCompressor,
    detect_anomaly,
    pearson,
)
from scenario import Position, ScenarioConfig, SimMode, UplinkPolicy
from structured_logger import get_logger
from utils import seconds_to_days

logger = logging.getLogger(__name__)
sim_logger = get_logger("mesh_sim")

PICO = 10 ** 12
DEATH_TOLERANCE_S = 1e-6

CATEGORIES = ("lora_tx", "lora_rx", "ble", "compute", "leakage")
KIND_CATEGORY = {
    "lora_tx": "lora_tx",
    "lora_overhead": "lora_tx",
    "lora_rx": "lora_rx",
    "relay_rx": "lora_rx",
    "ble": "ble",
    "handover_announce": "ble",
    "handover_ack": "ble",
    "compute": "compute",
    "leakage": "leakage",
}


class SimEvent(NamedTuple):
    time: float
    node: int
    kind: str
    coulombs: float


@dataclass
class EnergyLedger:
    """Charge drawn per category, in picocoulombs so the books balance exactly."""
    initial_pc: int
    spent_pc: Dict[str, int] = field(default_factory=lambda: {c: 0 for c in CATEGORIES})

    @classmethod
    def from_coulombs(cls, charge: float) -> "EnergyLedger":
        return cls(int(round(charge * PICO)))

    @property
    def remaining_pc(self) -> int:
        return self.initial_pc - sum(self.spent_pc.values())

    @property
    def remaining(self) -> float:
        return self.remaining_pc / PICO

    def charge(self, category: str, amount_pc: int) -> int:
        """Draw up to ``amount_pc``; returns what was actually drawn."""
        drawn = max(0, min(amount_pc, self.remaining_pc))
        self.spent_pc[category] += drawn
        return drawn

    def as_coulombs(self) -> Dict[str, float]:
        return {c: pc / PICO for c, pc in self.spent_pc.items()}


# ==============================================================================
# SAMPLE SOURCES
# ==============================================================================

class SampleSource(ABC):
    """Readings of every channel of one node as a function of time."""

    end_time: Optional[float] = None

    @abstractmethod
    def sample(self, t: float) -> Dict[Channel, float]:
        ...

    @abstractmethod
    def next_change(self, t: float) -> Optional[float]:
        """Earliest sample time after ``t`` at which a reading may differ."""

    def window(self, until: float, sample_period: float = config.SAMPLE_PERIOD_S) -> Dict[Channel, SensorTrace]:
        """Dense traces over [0, until)."""
        times = sample_period * np.arange(int(math.ceil(until / sample_period - 1e-9)))
        columns: Dict[Channel, List[Tuple[float, float]]] = {}
        for t in times:
            for channel, value in self.sample(float(t)).items():
                columns.setdefault(channel, []).append((float(t), value))
        return {ch: SensorTrace.from_samples(ch, rows) for ch, rows in columns.items()}


class TraceReplaySource(SampleSource):
    """Replays recorded traces; past their end an extension source takes over or replay fails."""

    def __init__(self, traces: Mapping[Channel, SensorTrace], sample_period: float = config.SAMPLE_PERIOD_S,
                 extension: Optional[SampleSource] = None) -> None:
        self.traces = {ch: tr for ch, tr in traces.items() if len(tr)}
        if not self.traces:
            raise SimulationError("cannot replay an empty trace set")
        self.extension = extension
        self._times = np.unique(np.concatenate([tr.timestamps for tr in self.traces.values()]))
        last = float(self._times[-1]) + sample_period
        self._replay_end = last
        self.end_time = None if extension is not None else last

    def sample(self, t: float) -> Dict[Channel, float]:
        if t >= self._replay_end:
            if self.extension is None:
                raise TraceUnderrunError("trace replay ran past its last sample",
                                         required_until=t, available_until=self._replay_end)
            return self.extension.sample(t)
        values = {}
        for channel, trace in self.traces.items():
            index = int(np.searchsorted(trace.timestamps, t, side="right")) - 1
            if index >= 0:
                values[channel] = float(trace.values[index])
        return values

    def next_change(self, t: float) -> Optional[float]:
        index = int(np.searchsorted(self._times, t, side="right"))
        if index < len(self._times):
            return float(self._times[index])
        if self.extension is None:
            return None
        if t < self._replay_end:
            return self._replay_end
        return self.extension.next_change(t)


class ScheduledAnomalySource(SampleSource):
    """
    Piecewise-constant readings at channel baselines; the anomaly channel
    toggles between baseline and baseline·(1 + magnitude) every ``cadence``
    seconds. A non-positive cadence gives constant readings.
    """

    def __init__(self, cadence: float = config.ANOMALY_CADENCE_S, magnitude: float = config.ANOMALY_MAGNITUDE,
                 channel: Channel = Channel.TEMPERATURE,
                 baselines: Optional[Mapping[Channel, float]] = None) -> None:
        self.cadence = cadence
        self.magnitude = magnitude
        self.channel = channel
        self.baselines = dict(baselines) if baselines is not None else {c: c.baseline for c in Channel}

    def sample(self, t: float) -> Dict[Channel, float]:
        values = dict(self.baselines)
        if self.cadence > 0 and int(math.floor(t / self.cadence)) % 2 == 1:
            values[self.channel] = self.baselines[self.channel] * (1 + self.magnitude)
        return values

    def next_change(self, t: float) -> Optional[float]:
        if self.cadence <= 0:
            return None
        return (math.floor(t / self.cadence) + 1) * self.cadence


SourceSpec = Union[SampleSource, Mapping[Channel, SensorTrace]]


def default_sources(scenario: ScenarioConfig) -> Dict[int, SampleSource]:
    if scenario.trace_path:
        shared: SampleSource = TraceReplaySource(trace_io.parse(scenario.trace_path), scenario.sample_period_s)
    else:
        shared = ScheduledAnomalySource(scenario.anomaly_cadence_s, scenario.anomaly_magnitude)
    return {i: shared for i in range(scenario.nodes)}


# ==============================================================================
# ROUTING
# ==============================================================================

SOURCE_KEY = "source"
HUB_KEY = "hub"


def _distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def route_multihop(source: Position, hub: Position, relays: Mapping[int, Position], hop_range: float) -> List[int]:
    """Minimum-hop relay chain from ``source`` to ``hub``; empty when the hub is in range."""
    points: Dict[Union[str, int], Position] = {SOURCE_KEY: source}
    points.update({r: relays[r] for r in sorted(relays)})
    points[HUB_KEY] = hub
    keys = list(points)

    graph = nx.Graph()
    graph.add_nodes_from(keys)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            if _distance(points[a], points[b]) <= hop_range:
                graph.add_edge(a, b)
    try:
        path = nx.shortest_path(graph, SOURCE_KEY, HUB_KEY)
    except nx.NetworkXNoPath:
        raise RouteUnavailableError(f"no relay chain within {hop_range:.1f} m hops reaches the hub",
                                    source=source, hub=hub)
    return [int(k) for k in path[1:-1]]


# ==============================================================================
# NODE STATE AND RESULTS
# ==============================================================================

@dataclass
class NodeState:
    node_id: int
    position: Position
    ledger: EnergyLedger
    role: str = "sensor"
    leak_rate: float = 0.0
    compute_rate: float = 0.0
    alive: bool = True
    death_time: Optional[float] = None
    last_settle: float = 0.0
    leak_drawn_pc: int = 0
    compute_drawn_pc: int = 0
    last_uplink: float = 0.0
    detectors: Dict[Channel, AnomalyDetector] = field(default_factory=dict)
    compressors: Dict[Channel, TemporalCompressor] = field(default_factory=dict)
    buffer: Dict[Channel, List[SensorSample]] = field(default_factory=dict)
    pending_events: Dict[Channel, AnomalyEvent] = field(default_factory=dict)
    latest_values: Dict[Channel, float] = field(default_factory=dict)

    @property
    def battery_charge(self) -> float:
        return self.ledger.remaining

    @property
    def drain_rate(self) -> float:
        return self.leak_rate + self.compute_rate

    def predicted_death(self) -> float:
        if not self.alive:
            return self.death_time if self.death_time is not None else 0.0
        if self.drain_rate <= 0:
            return math.inf
        return self.last_settle + self.ledger.remaining_pc / (self.drain_rate * PICO)

    def outbound_series(self, threshold_y: float) -> Dict[Channel, CompressedSeries]:
        return {ch: CompressedSeries(ch, list(samples), len(samples), threshold_y)
                for ch, samples in self.buffer.items() if samples}


@dataclass
class NodeSummary:
    node_id: int
    role: str
    position: Position
    death_time: Optional[float]
    initial_charge: float
    final_charge: float
    ledger: Dict[str, float]


@dataclass
class SimResult:
    scenario: ScenarioConfig
    nodes: List[NodeSummary]
    events: List[SimEvent]
    delivered: Dict[int, Dict[Channel, List[SensorSample]]]
    end_time: float
    uplinks: int = 0
    failed_uplinks: int = 0
    handovers: int = 0
    wall_time: float = 0.0

    @property
    def sensors(self) -> List[NodeSummary]:
        return [n for n in self.nodes if n.role != "relay"]

    @property
    def first_death(self) -> Optional[float]:
        deaths = [n.death_time for n in self.sensors if n.death_time is not None]
        return min(deaths) if deaths else None

    @property
    def last_death(self) -> Optional[float]:
        deaths = [n.death_time for n in self.sensors]
        if any(d is None for d in deaths):
            return None
        return max(d for d in deaths if d is not None)

    @property
    def node_lifetimes(self) -> Dict[int, Optional[float]]:
        return {n.node_id: n.death_time for n in self.nodes}

    def ledger_imbalance(self) -> float:
        """Largest gap between battery drawdown and ledger total over all nodes."""
        return max(abs((n.initial_charge - n.final_charge) - sum(n.ledger.values())) for n in self.nodes)

    def category_total(self, category: str) -> float:
        return sum(n.ledger[category] for n in self.nodes)


@dataclass
class ClusterRuntime:
    controller: CasController
    request: simpy.Event
    reports: Dict[int, BatteryReport] = field(default_factory=dict)
    last_round: float = 0.0
    round_started: float = -1.0
    sequence: int = 0


# ==============================================================================
# SIMULATOR
# ==============================================================================

class MeshSimulator:
    """One simulation run; build a new instance per run."""

    def __init__(self, scenario: ScenarioConfig, sources: Optional[Mapping[int, SourceSpec]] = None) -> None:
        self.scenario = scenario
        self.profile = scenario.energy_profile
        self.lora = scenario.lora_params
        self.mode = scenario.mode
        self.env = simpy.Environment()
        self.events: List[SimEvent] = []
        self.delivered: Dict[int, Dict[Channel, List[SensorSample]]] = {}
        self.uplinks = 0
        self.failed_uplinks = 0
        self.handovers = 0
        self._finished = self.env.event()
        self._routes: Dict[int, Optional[List[int]]] = {}
        self._clusters: Dict[int, ClusterRuntime] = {}

        self.sources = self._resolve_sources(sources)
        self._check_coverage()

        compute = self.profile.compute_cost(self.mode)
        compute_rate = compute.charge / scenario.sample_period_s
        battery = scenario.battery_coulombs
        self.nodes: Dict[int, NodeState] = {
            i: NodeState(i, pos, EnergyLedger.from_coulombs(battery), "sensor",
                         self.profile.leakage_current, compute_rate)
            for i, pos in enumerate(scenario.node_positions())
        }
        self.relays: Dict[int, NodeState] = {
            scenario.nodes + k: NodeState(scenario.nodes + k, pos, EnergyLedger.from_coulombs(battery), "relay",
                                          self.profile.leakage_current, 0.0)
            for k, pos in enumerate(scenario.relay_positions)
        }
        self.hop_range = scenario.hop_range
        self.airtime = lora_airtime(self.lora)

    # --------------------------------------------------------------- setup

    def _resolve_sources(self, sources: Optional[Mapping[int, SourceSpec]]) -> Dict[int, SampleSource]:
        if sources is None:
            return default_sources(self.scenario)
        resolved = {}
        for node_id in range(self.scenario.nodes):
            if node_id not in sources:
                raise SimulationError(f"no sample source for node {node_id}", mode=self.mode.value)
            spec = sources[node_id]
            resolved[node_id] = (spec if isinstance(spec, SampleSource)
                                 else TraceReplaySource(spec, self.scenario.sample_period_s))
        return resolved

    def _check_coverage(self) -> None:
        for node_id, source in self.sources.items():
            if source.end_time is not None and source.end_time < self.scenario.duration_s:
                raise TraceUnderrunError(f"source of node {node_id} ends before the simulated horizon",
                                         required_until=self.scenario.duration_s,
                                         available_until=source.end_time)

    def _form_clusters(self) -> None:
        window = min(config.SIMILARITY_WINDOW_S, self.scenario.duration_s)
        reports = []
        for node_id, source in self.sources.items():
            until = window if source.end_time is None else min(window, source.end_time)
            traces = source.window(until, self.scenario.sample_period_s)
            history = {ch: detect_anomaly(tr, self.scenario.anomaly_x, node_id)
                       for ch, tr in traces.items() if len(tr)}
            reports.append((node_id, history))
        positions = {i: n.position for i, n in self.nodes.items()}
        for cluster in form_clusters(reports, positions, self.scenario.ble_range_m,
                                     similarity_window=config.SIMILARITY_WINDOW_S):
            runtime = ClusterRuntime(CasController(cluster), self.env.event())
            for member in cluster.members:
                self._clusters[member] = runtime
                self.nodes[member].role = "head" if member == cluster.head else "member"
            self.env.process(self._cluster_process(runtime))
        logger.info(f"{len(set(map(id, self._clusters.values())))} clusters formed")

    # --------------------------------------------------------------- energy

    def _log(self, t: float, node_id: int, kind: str, coulombs: float) -> None:
        self.events.append(SimEvent(t, node_id, kind, coulombs))

    def _charge(self, node: NodeState, kind: str, coulombs: float, now: float) -> bool:
        """Discrete charge; returns whether the node survived it."""
        if not node.alive:
            return False
        drawn = node.ledger.charge(KIND_CATEGORY[kind], int(round(coulombs * PICO)))
        self._log(now, node.node_id, kind, drawn / PICO)
        if node.ledger.remaining_pc == 0:
            self._die(node, now)
            return False
        return True

    def _draw_background(self, node: NodeState, leak_pc: int, compute_pc: int, t: float) -> None:
        if leak_pc > 0:
            drawn = node.ledger.charge("leakage", leak_pc)
            node.leak_drawn_pc += drawn
            self._log(t, node.node_id, "leakage", drawn / PICO)
        if compute_pc > 0:
            drawn = node.ledger.charge("compute", compute_pc)
            node.compute_drawn_pc += drawn
            self._log(t, node.node_id, "compute", drawn / PICO)

    def _settle(self, node: NodeState, now: float) -> bool:
        """Accrue continuous drain up to ``now``; returns whether the node is still alive."""
        if not node.alive:
            return False
        if node.drain_rate <= 0 or now <= node.last_settle:
            return True
        death = node.predicted_death()
        if now >= death - DEATH_TOLERANCE_S:
            remaining = node.ledger.remaining_pc
            leak_pc = int(round(remaining * node.leak_rate / node.drain_rate))
            self._draw_background(node, leak_pc, remaining - leak_pc, death)
            node.last_settle = death
            self._die(node, death)
            return False
        leak_target = int(round(node.leak_rate * now * PICO))
        compute_target = int(round(node.compute_rate * now * PICO))
        self._draw_background(node, leak_target - node.leak_drawn_pc, compute_target - node.compute_drawn_pc, now)
        node.last_settle = now
        if node.ledger.remaining_pc == 0:
            self._die(node, now)
            return False
        return True

    def _die(self, node: NodeState, t: float) -> None:
        node.alive = False
        node.death_time = t
        self._log(t, node.node_id, "death", 0.0)
        logger.debug(f"node {node.node_id} ({node.role}) died at {t:.3f}s")
        if node.role == "relay":
            self._routes.clear()
            return
        runtime = self._clusters.get(node.node_id)
        if runtime is not None:
            old_head = runtime.controller.head
            runtime.reports.pop(node.node_id, None)
            if runtime.controller.remove_member(node.node_id, runtime.reports) and runtime.controller.head != old_head:
                self._log(t, runtime.controller.head, "head_change", 0.0)
        if self.scenario.stop_at_first_death or not any(n.alive for n in self.nodes.values()):
            self._finish()

    def _finish(self) -> None:
        if not self._finished.triggered:
            self._finished.succeed()

    def _sleep_until(self, node: NodeState, t_next: float) -> Generator[simpy.Event, None, bool]:
        """Sleep to ``t_next`` unless the battery runs out first."""
        while True:
            wake = min(t_next, node.predicted_death())
            if wake > self.env.now:
                yield self.env.timeout(wake - self.env.now)
            if not self._settle(node, self.env.now):
                return False
            if self.env.now >= t_next:
                return True

    # --------------------------------------------------------------- radio

    def _route(self, node: NodeState) -> Optional[List[int]]:
        if node.node_id not in self._routes:
            relays = {rid: r.position for rid, r in self.relays.items() if r.alive}
            try:
                self._routes[node.node_id] = route_multihop(node.position, self.scenario.hub_position,
                                                            relays, self.hop_range)
            except RouteUnavailableError:
                self._routes[node.node_id] = None
        return self._routes[node.node_id]

    def _transmit_cost(self, node: NodeState, now: float, overhead: bool) -> bool:
        if self.scenario.lora_cost_model == "airtime":
            return self._charge(node, "lora_tx", self.lora.tx_power_consumption / self.profile.supply_voltage
                                * self.airtime, now)
        alive = self._charge(node, "lora_tx", self.profile.lora_tx.charge, now)
        alive = alive and self._charge(node, "lora_rx", self.profile.lora_rx.charge, now)
        if overhead:
            alive = alive and self._charge(node, "lora_overhead", self.profile.lora_overhead_charge, now)
        return alive

    def _relay_receive_cost(self, node: NodeState, now: float) -> bool:
        if self.scenario.lora_cost_model == "airtime":
            return self._charge(node, "relay_rx", self.lora.rx_power_consumption / self.profile.supply_voltage
                                * self.airtime, now)
        return self._charge(node, "relay_rx", self.profile.lora_rx.current * self.profile.lora_tx.duration, now)

    def _lora_uplink(self, sender: NodeState, now: float, overhead: bool = True) -> bool:
        """One packet from ``sender`` to the hub along the current route."""
        route = self._route(sender)
        # Tx is paid before the route is known to work; a packet whose
        # transmitter browns out mid-send is lost
        if not self._transmit_cost(sender, now, overhead) or route is None:
            self._delivery_failure(sender, now)
            return False
        for relay_id in route:
            relay = self.relays[relay_id]
            if not (self._settle(relay, now) and self._relay_receive_cost(relay, now)
                    and self._transmit_cost(relay, now, overhead)):
                self._delivery_failure(relay, now)
                return False
        self.uplinks += 1
        return True

    def _delivery_failure(self, node: NodeState, now: float) -> None:
        self.failed_uplinks += 1
        self._log(now, node.node_id, "delivery_failure", 0.0)

    def _deliver(self, node_id: int, samples: Sequence[SensorSample]) -> None:
        store = self.delivered.setdefault(node_id, {})
        for sample in samples:
            store.setdefault(sample.channel, []).append(sample)

    def _send_payload(self, sender: NodeState, payload: UplinkPayload, now: float,
                      represented: Sequence[int]) -> None:
        delivered = True
        for _ in payload.parts(self.scenario.payload_bytes):
            if not sender.alive or not self._lora_uplink(sender, now):
                delivered = False
                break
        if delivered:
            for node_id in represented:
                self._deliver(node_id, payload.samples)

    # --------------------------------------------------------------- analytics

    def _process_sample(self, node: NodeState, t: float, values: Mapping[Channel, float]) -> Tuple[bool, bool]:
        anomaly = kept = False
        for channel, value in values.items():
            detector = node.detectors.get(channel)
            if detector is None:
                detector = node.detectors[channel] = AnomalyDetector(channel, self.scenario.anomaly_x, node.node_id)
                node.compressors[channel] = TemporalCompressor(channel, self.scenario.compress_y)
            event = detector.push(t, value)
            if event is not None:
                node.pending_events[channel] = event
                anomaly = True
            if node.compressors[channel].push(value):
                node.buffer.setdefault(channel, []).append(SensorSample(t, value, channel))
                kept = True
            node.latest_values[channel] = value
        return anomaly, kept

    def _uplink_own_buffer(self, node: NodeState, now: float) -> None:
        payload = UplinkPayload(node.node_id, [node.node_id], {}, node.outbound_series(self.scenario.compress_y))
        self._send_payload(node, payload, now, [node.node_id])
        node.buffer.clear()
        node.pending_events.clear()
        node.last_uplink = now

    # --------------------------------------------------------------- processes

    def _timer(self) -> Generator[simpy.Event, None, None]:
        yield self.env.timeout(self.scenario.duration_s)
        self._finish()

    def _baseline_process(self, node: NodeState) -> Generator[simpy.Event, None, None]:
        source = self.sources[node.node_id]
        sp = self.scenario.sample_period_s
        if self.scenario.continuous_baseline:
            cycle = self.profile.lora_tx.duration + self.profile.lora_rx.duration
        else:
            cycle = sp
        last_index = -1
        t = 0.0
        while t < self.scenario.duration_s:
            alive = yield from self._sleep_until(node, t)
            if not alive:
                return
            index = int(math.floor(t / sp + 1e-9))
            samples = []
            if index > last_index:
                ts = index * sp
                samples = [SensorSample(ts, v, ch) for ch, v in source.sample(ts).items()]
                last_index = index
            if self._lora_uplink(node, t, overhead=False):
                self._deliver(node.node_id, samples)
            if not node.alive:
                return
            t += cycle

    def _duty_process(self, node: NodeState) -> Generator[simpy.Event, None, None]:
        source = self.sources[node.node_id]
        sp = self.scenario.sample_period_s
        period = self.scenario.duty_period_s
        k = 0
        while k * period < self.scenario.duration_s:
            t = k * period
            alive = yield from self._sleep_until(node, t)
            if not alive:
                return
            ts = math.floor(t / sp + 1e-9) * sp
            samples = [SensorSample(ts, v, ch) for ch, v in source.sample(ts).items()]
            if self._lora_uplink(node, t):
                self._deliver(node.node_id, samples)
            k += 1

    def _isa_process(self, node: NodeState) -> Generator[simpy.Event, None, None]:
        source = self.sources[node.node_id]
        scenario = self.scenario
        heartbeat = scenario.heartbeat_s
        runtime = self._clusters.get(node.node_id)
        t = 0.0
        while t < scenario.duration_s:
            alive = yield from self._sleep_until(node, t)
            if not alive:
                return
            anomaly, kept = self._process_sample(node, t, source.sample(t))
            triggered = ((anomaly and scenario.uplink_policy is UplinkPolicy.EVENT_DRIVEN)
                         or (kept and scenario.uplink_policy is UplinkPolicy.EVERY_EVENT))

            if runtime is not None:
                if triggered:
                    self._request_round(runtime, t)
            else:
                if triggered:
                    self._uplink_own_buffer(node, t)
                if node.alive and heartbeat > 0 and t - node.last_uplink >= heartbeat - 1e-9:
                    self._uplink_own_buffer(node, t)
                if not node.alive:
                    return

            candidates = [scenario.duration_s]
            change = source.next_change(t)
            if change is not None:
                candidates.append(change)
            if runtime is None and heartbeat > 0:
                candidates.append(node.last_uplink + heartbeat)
            t = min(candidates)
        yield from self._sleep_until(node, scenario.duration_s)

    # --------------------------------------------------------------- clusters

    def _request_round(self, runtime: ClusterRuntime, t: float) -> None:
        if runtime.round_started == t or runtime.request.triggered:
            return
        runtime.request.succeed()

    def _cluster_process(self, runtime: ClusterRuntime) -> Generator[simpy.Event, None, None]:
        heartbeat = self.scenario.heartbeat_s
        while runtime.controller.cluster.members:
            waits = [runtime.request]
            if heartbeat > 0:
                waits.append(self.env.timeout(max(runtime.last_round + heartbeat - self.env.now, 0.0)))
            yield self.env.any_of(waits)
            if self.env.now >= self.scenario.duration_s:
                return
            if runtime.request.triggered:
                runtime.request = self.env.event()
            yield from self._cluster_round(runtime)

    def _cluster_round(self, runtime: ClusterRuntime) -> Generator[simpy.Event, None, None]:
        controller = runtime.controller
        cluster = controller.cluster
        ble = self.profile.ble_event
        t_round = self.env.now
        runtime.round_started = t_round
        runtime.sequence += 1
        members = cluster.sorted_members()

        for member in members:
            slot_time = t_round + broadcast_slot_delay(member)
            if slot_time > self.env.now:
                yield self.env.timeout(slot_time - self.env.now)
            node = self.nodes[member]
            now = self.env.now
            if not self._settle(node, now) or not self._charge(node, "ble", ble.charge, now):
                continue
            packets = encode_broadcast(node.pending_events, BatteryReport(member, node.battery_charge, now),
                                       runtime.sequence, node.latest_values)
            received = [BlePacket.decode(p.encode()) for p in packets]
            _, report = decode_broadcast(received, now)
            runtime.reports[member] = report
            node.pending_events.clear()

        collect_until = t_round + max(broadcast_slot_delay(m) for m in members) + ble.duration
        if collect_until > self.env.now:
            yield self.env.timeout(collect_until - self.env.now)
        now = self.env.now

        while cluster.members and not self._settle(self.nodes[cluster.head], now):
            pass
        if not cluster.members:
            return
        head = self.nodes[cluster.head]

        batteries = {m: r.charge_remaining for m, r in runtime.reports.items() if m in cluster.members}
        series = {m: self.nodes[m].outbound_series(self.scenario.compress_y) for m in cluster.members}
        payload = spatial_compress(cluster, series, batteries)
        self._send_payload(head, payload, now, cluster.sorted_members())
        for m in members:
            self.nodes[m].buffer.clear()
            self.nodes[m].last_uplink = now
        runtime.last_round = t_round

        if self.mode is not SimMode.ISA_CI_CAS or not head.alive or head.node_id != cluster.head:
            return
        runtime.reports[head.node_id] = BatteryReport(head.node_id, head.battery_charge, now)
        message = controller.step(runtime.reports, now)
        if message is None:
            return
        if not self._charge(head, "handover_announce", ble.charge, now):
            return
        ack_time = now + ble.duration + broadcast_slot_delay(message.next_head)
        yield self.env.timeout(ack_time - self.env.now)
        successor = self.nodes[message.next_head]
        now = self.env.now
        if (controller.pending is message and self._settle(successor, now)
                and self._charge(successor, "handover_ack", ble.charge, now)):
            if controller.acknowledge(successor.node_id):
                self.handovers += 1
                self.nodes[message.from_head].role = "member"
                successor.role = "head"
                self._log(now, successor.node_id, "head_change", 0.0)
        elif controller.pending is message:
            controller.pending = None

    # --------------------------------------------------------------- run

    def run(self) -> SimResult:
        started = time.perf_counter()
        with sim_logger.performance("simulation", mode=self.mode.value, nodes=self.scenario.nodes):
            if self.mode.uses_clusters:
                self._form_clusters()
            for node in self.nodes.values():
                if self.mode is SimMode.LORA_EVERY_SECOND:
                    self.env.process(self._baseline_process(node))
                elif self.mode is SimMode.DUTY_CYCLED_LORA:
                    self.env.process(self._duty_process(node))
                else:
                    self.env.process(self._isa_process(node))
            self.env.process(self._timer())
            self.env.run(until=self._finished)

            end_time = min(self.env.now, self.scenario.duration_s)
            for node in list(self.nodes.values()) + list(self.relays.values()):
                self._settle(node, end_time)

        self.events.sort(key=lambda e: e.time)
        result = SimResult(
            scenario=self.scenario,
            nodes=[self._summary(n) for n in list(self.nodes.values()) + list(self.relays.values())],
            events=self.events,
            delivered=self.delivered,
            end_time=end_time,
            uplinks=self.uplinks,
            failed_uplinks=self.failed_uplinks,
            handovers=self.handovers,
            wall_time=time.perf_counter() - started,
        )
        sim_logger.log_sim_summary(self.mode.value, self.scenario.nodes, result.first_death,
                                   result.last_death, len(self.events))
        return result

    def _summary(self, node: NodeState) -> NodeSummary:
        return NodeSummary(node.node_id, node.role, node.position, node.death_time,
                           node.ledger.initial_pc / PICO, node.ledger.remaining, node.ledger.as_coulombs())


def run(scenario: ScenarioConfig, sources: Optional[Mapping[int, SourceSpec]] = None) -> SimResult:
    """Run one scenario; identical inputs give identical event logs."""
    return MeshSimulator(scenario, sources).run()


# ==============================================================================
# RETENTION
# ==============================================================================

@dataclass
class RetentionReport:
    per_node_correlation: Dict[int, float]
    per_node_sample_fraction: Dict[int, float]
    network_correlation: float
    network_sample_fraction: float
    value: float


def _node_retention(original: SensorTrace, delivered: List[SensorSample]) -> Tuple[float, float]:
    if not delivered or len(original) == 0:
        return 0.0, 0.0
    unique: Dict[float, float] = {}
    for sample in sorted(delivered, key=lambda s: s.timestamp):
        unique[sample.timestamp] = sample.value
    times = np.array(list(unique), dtype=float)
    values = np.array(list(unique.values()), dtype=float)

    index = np.clip(np.searchsorted(times, original.timestamps, side="right") - 1, 0, None)
    rebuilt = values[index]
    fraction = float(np.isin(original.timestamps, times).sum()) / len(original)
    if np.array_equal(rebuilt, original.values):
        return 1.0, fraction
    correlation = pearson(original.values, rebuilt)
    return (correlation if correlation is not None else 0.0), fraction


def info_retention(result: SimResult, originals: Mapping[int, Mapping[Channel, SensorTrace]]) -> RetentionReport:
    """
    Correlation between each node's original traces and what the hub can
    rebuild from delivered payloads, plus the fraction of samples delivered.
    Duty-cycled runs report the sample fraction as their retention value.
    """
    correlations: Dict[int, float] = {}
    fractions: Dict[int, float] = {}
    for node in result.sensors:
        traces = originals.get(node.node_id)
        if not traces:
            continue
        delivered = result.delivered.get(node.node_id, {})
        node_corr, node_frac = [], []
        for channel, trace in traces.items():
            window = trace.timestamps < result.end_time
            clipped = SensorTrace(channel, trace.timestamps[window], trace.values[window])
            corr, frac = _node_retention(clipped, delivered.get(channel, []))
            node_corr.append(corr)
            node_frac.append(frac)
        fractions[node.node_id] = min(node_frac) if node_frac else 0.0
        if delivered:
            correlations[node.node_id] = min(node_corr) if node_corr else 0.0

    network_corr = min(correlations.values()) if correlations else 0.0
    network_frac = min(fractions.values()) if fractions else 0.0
    value = network_frac if result.scenario.mode is SimMode.DUTY_CYCLED_LORA else network_corr
    return RetentionReport(correlations, fractions, network_corr, network_frac, value)


def source_traces(scenario: ScenarioConfig, sources: Optional[Mapping[int, SampleSource]] = None,
                  until: Optional[float] = None) -> Dict[int, Dict[Channel, SensorTrace]]:
    """Dense original traces of every node, for retention audits."""
    sources = sources if sources is not None else default_sources(scenario)
    horizon = until if until is not None else scenario.duration_s
    return {i: src.window(horizon, scenario.sample_period_s) for i, src in sources.items()}


# ==============================================================================
# CLOSED-FORM CROSS-CHECK
# ==============================================================================

class CrosscheckResult(NamedTuple):
    simulated: float
    closed_form: float
    relative_error: float


def closed_form_params(scenario: ScenarioConfig, n: int) -> CiEnergyParams:
    """Per-cycle energies of the scenario's profile; leakage is folded into the compute term."""
    profile = scenario.energy_profile
    v = profile.supply_voltage
    cycle = scenario.anomaly_cadence_s
    per_second = 1.0 / scenario.sample_period_s
    return CiEnergyParams(
        e_long_range=profile.lora_event_charge * v,
        e_short_range=profile.ble_event.charge * v,
        e_compute_ci=(profile.isa_ci_compute.charge * per_second + profile.leakage_current) * cycle * v,
        e_compute_ci_cas=(profile.isa_ci_cas_compute.charge * per_second + profile.leakage_current) * cycle * v,
        battery_energy=scenario.battery_coulombs * v,
        cluster_size=n,
    )


def lifetime_crosscheck(scenario: ScenarioConfig) -> CrosscheckResult:
    """Simulated first-death lifetime of one cluster against its closed form."""
    reasons = []
    if not scenario.mode.uses_clusters:
        reasons.append("mode must be isa_ci or isa_ci_cas")
    if scenario.trace_path:
        reasons.append("trace replay is not a stationary anomaly schedule")
    if scenario.anomaly_cadence_s <= 0:
        reasons.append("a positive anomaly cadence is required")
    if scenario.uplink_policy is not UplinkPolicy.EVENT_DRIVEN:
        reasons.append("uplinks must be event driven")
    if scenario.relay_positions:
        reasons.append("relays add per-hop costs outside the closed form")
    if scenario.nodes > config.MAX_CLUSTER_MEMBERS + 1:
        reasons.append("all nodes must fit one cluster")
    if reasons:
        raise SimulationError("scenario is not stationary: " + "; ".join(reasons), mode=scenario.mode.value)

    result = run(replace(scenario, stop_at_first_death=True))
    if result.first_death is None:
        raise SimulationError("no node died within the simulated horizon", mode=scenario.mode.value,
                              sim_time=result.end_time)
    params = closed_form_params(scenario, scenario.nodes)
    if scenario.mode is SimMode.ISA_CI_CAS:
        expected = network_lifetime_ci_cas(params, scenario.anomaly_cadence_s)
    else:
        expected = network_lifetime_ci(params, scenario.anomaly_cadence_s)
    error = abs(result.first_death - expected) / expected
    sim_logger.log_metric("crosscheck_relative_error", error, mode=scenario.mode.value, nodes=scenario.nodes)
    return CrosscheckResult(result.first_death, expected, error)


# ==============================================================================
# LADDER AND COMPARISONS
# ==============================================================================

class LadderRow(NamedTuple):
    rung: int
    mode: str
    first_death_s: Optional[float]
    first_death_days: Optional[float]
    last_death_s: Optional[float]
    improvement_vs_baseline: Optional[float]
    leakage_bound_days: float


def _ladder_worker(scenario: ScenarioConfig) -> Tuple[Optional[float], Optional[float]]:
    result = run(scenario)
    return result.first_death, result.last_death


def run_ladder(scenarios: Sequence[ScenarioConfig], workers: int = 1) -> List[LadderRow]:
    """Run every rung; rows come back in rung order whatever the completion order."""
    with sim_logger.performance("lifetime_ladder", rungs=len(scenarios), workers=workers):
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_ladder_worker, scenarios))
        else:
            outcomes = [_ladder_worker(s) for s in scenarios]

    baseline = outcomes[0][0] if outcomes else None
    rows = []
    for rung, (scenario, (first, last)) in enumerate(zip(scenarios, outcomes), start=1):
        bound = seconds_to_days(leakage_bound_lifetime(scenario.battery_mah, scenario.leakage_current))
        improvement = first / baseline if first is not None and baseline else None
        rows.append(LadderRow(rung, scenario.mode.value, first,
                              seconds_to_days(first) if first is not None else None,
                              last, improvement, bound))
        if first is not None:
            sim_logger.log_metric("first_death", seconds_to_days(first), unit="days", mode=scenario.mode.value)
    return rows


class TransmissionComparison(NamedTuple):
    periodic_uplinks: int
    isa_uplinks: int
    ratio: float


def transmission_comparison(duration: float = 3600.0, periodic_s: float = 5.0,
                            anomaly_every_s: float = 60.0) -> TransmissionComparison:
    """LoRa transmissions of a fixed-period node against an ISA node seeing one anomaly per period."""
    base = ScenarioConfig(nodes=1, duration_s=duration, anomaly_cadence_s=anomaly_every_s)
    periodic = run(replace(base, mode=SimMode.DUTY_CYCLED_LORA, duty_period_s=periodic_s))
    isa = run(replace(base, mode=SimMode.ISA))
    ratio = periodic.uplinks / isa.uplinks if isa.uplinks else math.inf
    return TransmissionComparison(periodic.uplinks, isa.uplinks, ratio)
