"""
Short-range collaboration between neighbouring nodes.

Covers the 39-byte BLE broadcast codec, time-multiplexed broadcast slots,
cluster formation over a similarity graph, spatially compressed uplink
payloads and the context-aware cluster-head handover.
"""

import binascii
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import networkx as nx

import config
from exceptions import CodecError, InvalidParameterError
from isa_codec import AnomalyEvent, Channel, CompressedSeries, SensorSample, relative_change
from utils import COULOMBS_PER_UAH

logger = logging.getLogger(__name__)

# ==============================================================================
# BLE PACKET CODEC
# ==============================================================================

PACKET_MAGIC = 0x4D45
HEADER_FORMAT = "<HBBHH"
PAYLOAD_FORMAT = "<BdQd"
HEADER_BYTES = struct.calcsize(HEADER_FORMAT)
BATTERY_BYTES = 6
PAYLOAD_BYTES = struct.calcsize(PAYLOAD_FORMAT) + BATTERY_BYTES
PACKET_BYTES = HEADER_BYTES + PAYLOAD_BYTES
NO_EVENT_TIME = 0xFFFF_FFFF_FFFF_FFFF
MAX_BATTERY_UAH = (1 << 48) - 1
MAX_DEVICE_ID = 0xFF

FLAG_EVENT = 0x01


@dataclass(frozen=True)
class BatteryReport:
    node_id: int
    charge_remaining: float
    reported_at: float = 0.0

    def __post_init__(self) -> None:
        if self.charge_remaining < 0:
            raise InvalidParameterError("charge_remaining must be non-negative",
                                        param_name="charge_remaining", param_value=self.charge_remaining)


def battery_to_uah(charge: float) -> int:
    """Charge in whole microampere-hours, saturated to the 48-bit field."""
    uah = int(round(charge / COULOMBS_PER_UAH))
    if uah > MAX_BATTERY_UAH:
        logger.warning(f"battery charge {charge} C exceeds the 48-bit field; saturating")
        return MAX_BATTERY_UAH
    return max(uah, 0)


@dataclass(frozen=True)
class BlePacket:
    """One 39-byte broadcast packet: 8-byte header and 31-byte payload."""
    channel: Channel
    device_id: int
    value_before: float
    anomaly_time: Optional[int]
    value_after: float
    battery_uah: int
    sequence: int = 0

    @property
    def has_event(self) -> bool:
        return self.anomaly_time is not None

    def payload(self) -> bytes:
        if not 0 <= self.device_id <= MAX_DEVICE_ID:
            raise CodecError(f"device id {self.device_id} does not fit one byte", field_name="device_id")
        if self.anomaly_time is not None and not 0 <= self.anomaly_time < NO_EVENT_TIME:
            raise CodecError(f"anomaly time {self.anomaly_time} out of range", field_name="anomaly_time")
        anomaly_time = NO_EVENT_TIME if self.anomaly_time is None else self.anomaly_time
        battery = min(max(self.battery_uah, 0), MAX_BATTERY_UAH)
        return (struct.pack(PAYLOAD_FORMAT, self.device_id, self.value_before, anomaly_time, self.value_after)
                + battery.to_bytes(BATTERY_BYTES, "little"))

    def encode(self) -> bytes:
        payload = self.payload()
        flags = FLAG_EVENT if self.has_event else 0
        header = struct.pack(HEADER_FORMAT, PACKET_MAGIC, self.channel.index, flags,
                             self.sequence & 0xFFFF, binascii.crc_hqx(payload, 0xFFFF))
        return header + payload

    @classmethod
    def decode(cls, raw: bytes) -> "BlePacket":
        if len(raw) != PACKET_BYTES:
            raise CodecError(f"packet must be {PACKET_BYTES} bytes, got {len(raw)}",
                             field_name="length", raw_hex=raw.hex())
        magic, channel_index, flags, sequence, crc = struct.unpack(HEADER_FORMAT, raw[:HEADER_BYTES])
        payload = raw[HEADER_BYTES:]
        if magic != PACKET_MAGIC:
            raise CodecError(f"bad magic 0x{magic:04x}", field_name="magic", raw_hex=raw.hex())
        if binascii.crc_hqx(payload, 0xFFFF) != crc:
            raise CodecError("payload checksum mismatch", field_name="crc", raw_hex=raw.hex())
        if channel_index >= len(Channel):
            raise CodecError(f"unknown channel index {channel_index}", field_name="channel", raw_hex=raw.hex())

        fixed = struct.calcsize(PAYLOAD_FORMAT)
        device_id, before, anomaly_time, after = struct.unpack(PAYLOAD_FORMAT, payload[:fixed])
        battery = int.from_bytes(payload[fixed:], "little")
        if bool(flags & FLAG_EVENT) != (anomaly_time != NO_EVENT_TIME):
            raise CodecError("event flag disagrees with anomaly time", field_name="flags", raw_hex=raw.hex())
        return cls(Channel.from_index(channel_index), device_id, before,
                   None if anomaly_time == NO_EVENT_TIME else anomaly_time, after, battery, sequence)


def encode_broadcast(events: Mapping[Channel, AnomalyEvent], battery: BatteryReport, sequence: int = 0,
                     latest_values: Optional[Mapping[Channel, float]] = None) -> List[BlePacket]:
    """
    One packet per channel. A channel without an event carries the sentinel
    anomaly time and its latest reading in both value fields.
    """
    latest_values = latest_values or {}
    battery_uah = battery_to_uah(battery.charge_remaining)
    packets = []
    for channel in Channel:
        event = events.get(channel)
        if event is not None:
            if event.channel is not channel:
                raise InvalidParameterError("event filed under the wrong channel",
                                            param_name="events", param_value=channel.value)
            packets.append(BlePacket(channel, battery.node_id, event.value_before,
                                     int(event.anomaly_time), event.value_after, battery_uah, sequence))
        else:
            value = latest_values.get(channel, 0.0)
            packets.append(BlePacket(channel, battery.node_id, value, None, value, battery_uah, sequence))
    return packets


def decode_broadcast(packets: Sequence[BlePacket],
                     received_at: float = 0.0) -> Tuple[Dict[Channel, AnomalyEvent], BatteryReport]:
    """Events and battery report carried by one broadcast."""
    if len(packets) != len(Channel):
        raise CodecError(f"a broadcast has {len(Channel)} packets, got {len(packets)}", field_name="packets")
    device_ids = {p.device_id for p in packets}
    if len(device_ids) != 1 or len({p.channel for p in packets}) != len(Channel):
        raise CodecError("packets do not form one broadcast", field_name="packets")
    node_id = device_ids.pop()
    events = {
        p.channel: AnomalyEvent(node_id, p.channel, p.value_before, float(p.anomaly_time), p.value_after)
        for p in packets if p.anomaly_time is not None
    }
    battery = BatteryReport(node_id, packets[0].battery_uah * COULOMBS_PER_UAH, received_at)
    return events, battery


def packets_to_hex(packets: Iterable[BlePacket]) -> str:
    """One lowercase hex packet per line."""
    return "\n".join(p.encode().hex() for p in packets)


def packets_from_hex(text: str) -> List[BlePacket]:
    packets = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            raw = bytes.fromhex(line)
        except ValueError as e:
            raise CodecError("invalid hex dump line", field_name="hex", raw_hex=line, original_error=e)
        packets.append(BlePacket.decode(raw))
    return packets


def broadcast_slot_delay(device_id: int, slot: float = config.BLE_SLOT_S,
                         max_nodes: int = config.BLE_MAX_NODES) -> float:
    """Hard-coded broadcast offset of a device inside each broadcast round."""
    if not 0 <= device_id < max_nodes:
        raise InvalidParameterError(f"device_id must be in 0..{max_nodes - 1}",
                                    param_name="device_id", param_value=device_id)
    return device_id * slot


# ==============================================================================
# CLUSTERS
# ==============================================================================

@dataclass
class ClusterState:
    members: Set[int]
    head: int
    formed_at: float = 0.0
    similarity_window: float = config.SIMILARITY_WINDOW_S

    def __post_init__(self) -> None:
        self.members = set(self.members)
        if self.head not in self.members:
            raise InvalidParameterError("head must be a member", param_name="head", param_value=self.head)
        if len(self.members) > config.MAX_CLUSTER_MEMBERS + 1:
            raise InvalidParameterError("cluster exceeds the head fan-out",
                                        param_name="members", param_value=len(self.members))

    @property
    def size(self) -> int:
        return len(self.members)

    def sorted_members(self) -> List[int]:
        return sorted(self.members)


EventHistory = Mapping[Channel, Sequence[AnomalyEvent]]


def histories_match(a: EventHistory, b: EventHistory, tau: float = config.SIMILARITY_TIME_TOLERANCE_S,
                    delta: float = config.SIMILARITY_VALUE_TOLERANCE) -> bool:
    """Every channel has the same number of events, pairwise close in time and value."""
    for channel in Channel:
        events_a = list(a.get(channel, ()))
        events_b = list(b.get(channel, ()))
        if len(events_a) != len(events_b):
            return False
        for ea, eb in zip(events_a, events_b):
            if abs(ea.anomaly_time - eb.anomaly_time) > tau:
                return False
            if relative_change(eb.value_after, ea.value_after, channel) > delta:
                return False
    return True


def similarity_graph(reports: Sequence[Tuple[int, EventHistory]], positions: Mapping[int, Tuple[float, float]],
                     ble_range: float = config.BLE_RANGE_M, tau: float = config.SIMILARITY_TIME_TOLERANCE_S,
                     delta: float = config.SIMILARITY_VALUE_TOLERANCE) -> nx.Graph:
    graph = nx.Graph()
    ordered = sorted(reports, key=lambda r: r[0])
    graph.add_nodes_from(node_id for node_id, _ in ordered)
    for i, (id_a, hist_a) in enumerate(ordered):
        xa, ya = positions[id_a]
        for id_b, hist_b in ordered[i + 1:]:
            xb, yb = positions[id_b]
            if ((xa - xb) ** 2 + (ya - yb) ** 2) ** 0.5 > ble_range:
                continue
            if histories_match(hist_a, hist_b, tau, delta):
                graph.add_edge(id_a, id_b)
    return graph


def form_clusters(reports: Sequence[Tuple[int, EventHistory]], positions: Mapping[int, Tuple[float, float]],
                  ble_range: float = config.BLE_RANGE_M, tau: float = config.SIMILARITY_TIME_TOLERANCE_S,
                  delta: float = config.SIMILARITY_VALUE_TOLERANCE,
                  max_members: int = config.MAX_CLUSTER_MEMBERS, formed_at: float = 0.0,
                  similarity_window: float = config.SIMILARITY_WINDOW_S) -> List[ClusterState]:
    """
    Connected components of the similarity graph, each split into breadth-first
    chunks of at most ``max_members`` members plus a head. The lowest id of a
    chunk is its initial head.
    """
    if not reports:
        return []
    graph = similarity_graph(reports, positions, ble_range, tau, delta)
    components = sorted((sorted(c) for c in nx.connected_components(graph)), key=lambda c: c[0])

    chunk_size = max_members + 1
    clusters = []
    for component in components:
        order = list(nx.bfs_tree(graph.subgraph(component), component[0]))
        for start in range(0, len(order), chunk_size):
            chunk = order[start:start + chunk_size]
            clusters.append(ClusterState(set(chunk), min(chunk), formed_at, similarity_window))
    logger.debug(f"formed {len(clusters)} clusters from {len(reports)} nodes")
    return clusters


# ==============================================================================
# CONTEXT-AWARE SWITCHING
# ==============================================================================

@dataclass(frozen=True)
class HandoverMessage:
    from_head: int
    next_head: int
    announced_at: float = 0.0


def elect_head(cluster: ClusterState, latest: Mapping[int, BatteryReport]) -> int:
    """Member with the most remaining charge; ties go to the lowest id."""
    candidates = []
    for member in cluster.sorted_members():
        if member in latest:
            candidates.append(member)
        else:
            logger.warning(f"no battery report from node {member}; excluded from election")
    if not candidates:
        logger.warning("no member reported a battery level; keeping the current head")
        return cluster.head
    return max(candidates, key=lambda m: (latest[m].charge_remaining, -m))


def cas_step(cluster: ClusterState, latest: Mapping[int, BatteryReport],
             now: float = 0.0) -> Optional[HandoverMessage]:
    """Announce a handover iff some member holds more charge than the head."""
    best = elect_head(cluster, latest)
    if best == cluster.head:
        return None
    head_report = latest.get(cluster.head)
    if head_report is not None and head_report.charge_remaining >= latest[best].charge_remaining:
        return None
    return HandoverMessage(cluster.head, best, now)


@dataclass
class CasController:
    """
    Two-phase head rotation for one cluster: the head announces its successor
    and keeps the role until the successor acknowledges.
    """
    cluster: ClusterState
    pending: Optional[HandoverMessage] = None
    handovers: int = 0

    @property
    def head(self) -> int:
        return self.cluster.head

    def step(self, latest: Mapping[int, BatteryReport], now: float = 0.0) -> Optional[HandoverMessage]:
        if self.pending is not None:
            return None
        self.pending = cas_step(self.cluster, latest, now)
        return self.pending

    def acknowledge(self, node_id: int) -> bool:
        if self.pending is None or self.pending.next_head != node_id or node_id not in self.cluster.members:
            return False
        self.cluster.head = node_id
        self.pending = None
        self.handovers += 1
        return True

    def remove_member(self, node_id: int, latest: Mapping[int, BatteryReport]) -> bool:
        """Drop a dead member; returns False once the cluster is empty."""
        self.cluster.members.discard(node_id)
        if not self.cluster.members:
            self.pending = None
            return False
        if self.pending is not None and node_id in (self.pending.next_head, self.pending.from_head):
            self.pending = None
        if node_id == self.cluster.head:
            self.cluster.head = min(self.cluster.members)
            self.cluster.head = elect_head(self.cluster, latest)
            logger.warning(f"head {node_id} died; node {self.cluster.head} takes over")
        return True


# ==============================================================================
# SPATIAL COMPRESSION
# ==============================================================================

UPLINK_HEADER_BYTES = 4
UPLINK_MEMBER_BYTES = 7
UPLINK_SAMPLE_BYTES = 17


@dataclass
class UplinkPart:
    head_id: int
    index: int
    member_batteries: Dict[int, float]
    samples: List[SensorSample]

    @property
    def size_bytes(self) -> int:
        return (UPLINK_HEADER_BYTES + UPLINK_MEMBER_BYTES * len(self.member_batteries)
                + UPLINK_SAMPLE_BYTES * len(self.samples))


@dataclass
class UplinkPayload:
    """The head's own series plus the member roster; member series are redundant and dropped."""
    head_id: int
    member_ids: List[int]
    member_batteries: Dict[int, float]
    series: Dict[Channel, CompressedSeries] = field(default_factory=dict)

    @property
    def series_count(self) -> int:
        return 1 if self.series else 0

    @property
    def samples(self) -> List[SensorSample]:
        merged = [s for channel in Channel if channel in self.series for s in self.series[channel].kept]
        return sorted(merged, key=lambda s: (s.timestamp, s.channel.index))

    @property
    def size_bytes(self) -> int:
        return (UPLINK_HEADER_BYTES + UPLINK_MEMBER_BYTES * len(self.member_batteries)
                + UPLINK_SAMPLE_BYTES * len(self.samples))

    def parts(self, max_payload: int = config.LORA_PAYLOAD_BYTES) -> List[UplinkPart]:
        """Split into LoRa-sized parts; the roster travels in the first part only."""
        first_room = (max_payload - UPLINK_HEADER_BYTES
                      - UPLINK_MEMBER_BYTES * len(self.member_batteries)) // UPLINK_SAMPLE_BYTES
        room = (max_payload - UPLINK_HEADER_BYTES) // UPLINK_SAMPLE_BYTES
        if first_room < 0 or room < 1:
            raise InvalidParameterError("LoRa payload too small for the uplink framing",
                                        param_name="max_payload", param_value=max_payload)
        samples = self.samples
        parts = [UplinkPart(self.head_id, 0, dict(self.member_batteries), samples[:first_room])]
        rest = samples[first_room:]
        while rest:
            parts.append(UplinkPart(self.head_id, len(parts), {}, rest[:room]))
            rest = rest[room:]
        return parts


MemberSeries = Union[CompressedSeries, Mapping[Channel, CompressedSeries]]


def _as_channel_map(series: MemberSeries) -> Dict[Channel, CompressedSeries]:
    if isinstance(series, CompressedSeries):
        return {series.channel: series}
    return dict(series)


def spatial_compress(cluster: ClusterState, member_series: Mapping[int, MemberSeries],
                     member_batteries: Optional[Mapping[int, float]] = None) -> UplinkPayload:
    """Uplink payload for a cluster: one series transmitted instead of one per member."""
    head_series = member_series.get(cluster.head)
    if head_series is None:
        logger.warning(f"head {cluster.head} has no series for this window")
    batteries = {}
    if member_batteries is not None:
        batteries = {m: member_batteries[m] for m in cluster.sorted_members()
                     if m != cluster.head and m in member_batteries}
    return UplinkPayload(
        head_id=cluster.head,
        member_ids=cluster.sorted_members(),
        member_batteries=batteries,
        series=_as_channel_map(head_series) if head_series is not None else {},
    )
