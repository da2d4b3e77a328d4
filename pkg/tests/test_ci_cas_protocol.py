"""
Tests for ci_cas_protocol.py - BLE broadcast codec, clustering, head switching and spatial compression
"""

import pytest

from ci_cas_protocol import (
    MAX_BATTERY_UAH,
    PACKET_BYTES,
    UPLINK_HEADER_BYTES,
    UPLINK_MEMBER_BYTES,
    UPLINK_SAMPLE_BYTES,
    BatteryReport,
    BlePacket,
    CasController,
    ClusterState,
    battery_to_uah,
    broadcast_slot_delay,
    cas_step,
    decode_broadcast,
    elect_head,
    encode_broadcast,
    form_clusters,
    histories_match,
    packets_from_hex,
    packets_to_hex,
    spatial_compress,
)
from exceptions import CodecError, InvalidParameterError
from isa_codec import AnomalyEvent, Channel, CompressedSeries, SensorSample

GOLDEN_PAYLOAD_HEX = "05" "0000000000003440" "1c00000000000000" "0000000000803640" "708203000000"


def _event(node, channel=Channel.TEMPERATURE, t=28.0, before=20.0, after=22.5):
    return AnomalyEvent(node, channel, before, t, after)


def _series(channel, n, start=0.0):
    kept = [SensorSample(start + i, 20.0 + i, channel) for i in range(n)]
    return CompressedSeries(channel, kept, n)


class TestBlePacket:
    """Tests for the 39-byte broadcast packet."""

    def setup_method(self):
        self.packet = BlePacket(Channel.TEMPERATURE, 5, 20.0, 28, 22.5, 230_000, sequence=3)

    def test_size(self):
        assert PACKET_BYTES == 39
        assert len(self.packet.encode()) == 39

    def test_golden_payload(self):
        assert self.packet.payload().hex() == GOLDEN_PAYLOAD_HEX

    def test_header_layout(self):
        assert self.packet.encode()[:6].hex() == "454d00010300"

    def test_decode_round_trip(self):
        assert BlePacket.decode(self.packet.encode()) == self.packet

    def test_no_event_sentinel(self):
        quiet = BlePacket(Channel.HUMIDITY, 1, 55.0, None, 55.0, 10)
        decoded = BlePacket.decode(quiet.encode())
        assert decoded.anomaly_time is None
        assert not decoded.has_event
        assert quiet.payload()[9:17] == b"\xff" * 8

    def test_corrupted_payload_rejected(self):
        raw = bytearray(self.packet.encode())
        raw[20] ^= 0x01
        with pytest.raises(CodecError) as exc_info:
            BlePacket.decode(bytes(raw))
        assert exc_info.value.context["field_name"] == "crc"

    def test_bad_magic_rejected(self):
        raw = b"\x00\x00" + self.packet.encode()[2:]
        with pytest.raises(CodecError):
            BlePacket.decode(raw)

    def test_short_packet_rejected(self):
        with pytest.raises(CodecError):
            BlePacket.decode(self.packet.encode()[:-1])

    def test_device_id_must_fit_byte(self):
        with pytest.raises(CodecError):
            BlePacket(Channel.TEMPERATURE, 256, 20.0, None, 20.0, 0).encode()

    def test_battery_saturates(self):
        assert battery_to_uah(1e12) == MAX_BATTERY_UAH
        assert battery_to_uah(828.0) == 230_000

    def test_many_round_trips(self, rng):
        for i in range(10_000):
            channel = Channel.from_index(int(rng.integers(3)))
            has_event = bool(rng.integers(2))
            packet = BlePacket(
                channel,
                int(rng.integers(256)),
                float(rng.normal(50, 30)),
                int(rng.integers(0, 2 ** 40)) if has_event else None,
                float(rng.normal(50, 30)),
                int(rng.integers(0, MAX_BATTERY_UAH)),
                i & 0xFFFF,
            )
            assert BlePacket.decode(packet.encode()) == packet


class TestBroadcast:
    """Tests for whole-broadcast encoding."""

    def test_one_packet_per_channel(self):
        packets = encode_broadcast({Channel.TEMPERATURE: _event(5)}, BatteryReport(5, 828.0))
        assert [p.channel for p in packets] == list(Channel)
        assert [p.has_event for p in packets] == [True, False, False]

    def test_decode_restores_events_and_battery(self):
        packets = encode_broadcast({Channel.NITRATE: _event(2, Channel.NITRATE, 10.0, 250.0, 300.0)},
                                   BatteryReport(2, 1.8), latest_values={Channel.TEMPERATURE: 20.0})
        events, battery = decode_broadcast(packets, received_at=15.0)
        assert list(events) == [Channel.NITRATE]
        assert events[Channel.NITRATE].value_after == 300.0
        assert battery.node_id == 2
        assert battery.charge_remaining == pytest.approx(1.8)
        assert battery.reported_at == 15.0

    def test_fractional_anomaly_time_floors(self):
        packets = encode_broadcast({Channel.TEMPERATURE: _event(1, t=28.9)}, BatteryReport(1, 1.0))
        assert packets[0].anomaly_time == 28

    def test_hex_dump_round_trip(self):
        packets = encode_broadcast({}, BatteryReport(7, 3.0), sequence=9)
        text = packets_to_hex(packets)
        assert len(text.splitlines()) == 3
        assert packets_from_hex(text + "\n\n") == packets

    def test_bad_hex_line(self):
        with pytest.raises(CodecError):
            packets_from_hex("zz")

    def test_mixed_devices_rejected(self):
        a = encode_broadcast({}, BatteryReport(1, 1.0))
        b = encode_broadcast({}, BatteryReport(2, 1.0))
        with pytest.raises(CodecError):
            decode_broadcast([a[0], b[1], a[2]])

    def test_slot_delay(self):
        assert broadcast_slot_delay(0) == 0.0
        assert broadcast_slot_delay(10) == pytest.approx(0.2)
        with pytest.raises(InvalidParameterError):
            broadcast_slot_delay(256)


class TestClustering:
    """Tests for similarity and cluster formation."""

    def setup_method(self):
        self.same = {Channel.TEMPERATURE: [_event(0)]}
        self.shifted = {Channel.TEMPERATURE: [_event(0, t=31.0, after=22.6)]}
        self.other = {Channel.TEMPERATURE: [_event(0, t=100.0)]}

    def test_histories_match_within_tolerance(self):
        assert histories_match(self.same, self.shifted)
        assert not histories_match(self.same, self.other)
        assert not histories_match(self.same, {})

    def test_empty_histories_match(self):
        assert histories_match({}, {})

    def test_two_close_similar_nodes_cluster(self):
        clusters = form_clusters([(0, self.same), (1, self.shifted)], {0: (0.0, 0.0), 1: (5.0, 0.0)})
        assert len(clusters) == 1
        assert clusters[0].members == {0, 1}
        assert clusters[0].head == 0

    def test_out_of_range_nodes_stay_apart(self):
        clusters = form_clusters([(0, self.same), (1, self.same)], {0: (0.0, 0.0), 1: (50.0, 0.0)})
        assert [c.members for c in clusters] == [{0}, {1}]

    def test_dissimilar_nodes_stay_apart(self):
        clusters = form_clusters([(0, self.same), (1, self.other)], {0: (0.0, 0.0), 1: (1.0, 0.0)})
        assert len(clusters) == 2

    def test_large_component_split_by_fan_out(self):
        reports = [(i, self.same) for i in range(10)]
        positions = {i: (float(i), 0.0) for i in range(10)}
        clusters = form_clusters(reports, positions, max_members=7)
        assert [c.size for c in clusters] == [8, 2]
        assert set().union(*(c.members for c in clusters)) == set(range(10))

    def test_no_reports(self):
        assert form_clusters([], {}) == []

    def test_head_must_be_member(self):
        with pytest.raises(InvalidParameterError):
            ClusterState({1, 2}, head=3)


class TestContextAwareSwitching:
    """Tests for head election and two-phase handover."""

    def setup_method(self):
        self.cluster = ClusterState({1, 2, 3}, head=1)

    def test_elects_fullest_battery(self):
        latest = {1: BatteryReport(1, 10.0), 2: BatteryReport(2, 12.0), 3: BatteryReport(3, 11.0)}
        assert elect_head(self.cluster, latest) == 2

    def test_tie_goes_to_lowest_id(self):
        latest = {1: BatteryReport(1, 5.0), 2: BatteryReport(2, 9.0), 3: BatteryReport(3, 9.0)}
        assert elect_head(self.cluster, latest) == 2

    def test_missing_reports_excluded(self):
        assert elect_head(self.cluster, {3: BatteryReport(3, 1.0)}) == 3
        assert elect_head(self.cluster, {}) == 1

    def test_no_handover_when_head_is_fullest(self):
        latest = {1: BatteryReport(1, 12.0), 2: BatteryReport(2, 12.0), 3: BatteryReport(3, 1.0)}
        assert cas_step(self.cluster, latest) is None

    def test_election_is_argmax(self, rng):
        for _ in range(10_000):
            size = int(rng.integers(1, 9))
            ids = [int(i) for i in rng.choice(200, size=size, replace=False)]
            latest = {m: BatteryReport(m, float(rng.integers(0, 5))) for m in ids}
            best = max(report.charge_remaining for report in latest.values())
            elected = elect_head(ClusterState(ids, head=ids[int(rng.integers(size))]), latest)
            assert latest[elected].charge_remaining == best
            assert elected == min(m for m in ids if latest[m].charge_remaining == best)

            shuffled = [ids[i] for i in rng.permutation(size)]
            reordered = {m: latest[m] for m in shuffled}
            assert elect_head(ClusterState(shuffled, head=shuffled[0]), reordered) == elected

    def test_two_phase_handover(self):
        controller = CasController(self.cluster)
        latest = {1: BatteryReport(1, 1.0), 2: BatteryReport(2, 5.0), 3: BatteryReport(3, 2.0)}
        message = controller.step(latest, now=60.0)
        assert (message.from_head, message.next_head, message.announced_at) == (1, 2, 60.0)
        assert controller.head == 1
        assert controller.step(latest) is None
        assert not controller.acknowledge(3)
        assert controller.acknowledge(2)
        assert controller.head == 2
        assert controller.handovers == 1

    def test_head_death_promotes_fullest(self):
        controller = CasController(self.cluster)
        latest = {2: BatteryReport(2, 1.0), 3: BatteryReport(3, 4.0)}
        assert controller.remove_member(1, latest)
        assert controller.head == 3

    def test_last_member_death_empties_cluster(self):
        controller = CasController(ClusterState({4}, head=4))
        assert not controller.remove_member(4, {})


class TestSpatialCompression:
    """Tests for the head's uplink payload."""

    def setup_method(self):
        self.cluster = ClusterState({1, 2, 3}, head=2)

    def test_only_head_series_is_sent(self):
        series = {m: _series(Channel.TEMPERATURE, 5) for m in (1, 2, 3)}
        payload = spatial_compress(self.cluster, series, {1: 3.0, 2: 4.0, 3: 5.0})
        assert payload.head_id == 2
        assert payload.series_count == 1
        assert payload.member_ids == [1, 2, 3]
        assert payload.member_batteries == {1: 3.0, 3: 5.0}
        assert len(payload.samples) == 5

    def test_size_accounting(self):
        payload = spatial_compress(self.cluster, {2: _series(Channel.HUMIDITY, 3)}, {1: 1.0, 3: 1.0})
        assert payload.size_bytes == UPLINK_HEADER_BYTES + 2 * UPLINK_MEMBER_BYTES + 3 * UPLINK_SAMPLE_BYTES

    def test_missing_head_series(self):
        payload = spatial_compress(self.cluster, {1: _series(Channel.TEMPERATURE, 2)})
        assert payload.series_count == 0
        assert payload.samples == []

    def test_samples_merged_in_time_order(self):
        series = {Channel.HUMIDITY: _series(Channel.HUMIDITY, 2), Channel.TEMPERATURE: _series(Channel.TEMPERATURE, 2)}
        payload = spatial_compress(self.cluster, {2: series})
        assert [(s.timestamp, s.channel) for s in payload.samples] == [
            (0.0, Channel.TEMPERATURE), (0.0, Channel.HUMIDITY), (1.0, Channel.TEMPERATURE), (1.0, Channel.HUMIDITY)]

    def test_parts_fit_payload(self):
        payload = spatial_compress(self.cluster, {2: _series(Channel.TEMPERATURE, 40)}, {1: 1.0, 3: 1.0})
        parts = payload.parts(240)
        assert all(p.size_bytes <= 240 for p in parts)
        assert sum(len(p.samples) for p in parts) == 40
        assert parts[0].member_batteries == {1: 1.0, 3: 1.0}
        assert all(p.member_batteries == {} for p in parts[1:])
        assert [p.index for p in parts] == list(range(len(parts)))

    def test_empty_payload_is_one_part(self):
        payload = spatial_compress(self.cluster, {})
        assert len(payload.parts()) == 1

    def test_tiny_payload_rejected(self):
        payload = spatial_compress(self.cluster, {2: _series(Channel.TEMPERATURE, 1)})
        with pytest.raises(InvalidParameterError):
            payload.parts(10)
