"""
Tests for isa_codec.py - anomaly detection, compression, reconstruction and calibration
"""

import numpy as np
import pytest

from exceptions import InvalidParameterError
from isa_codec import (
    AnomalyDetector,
    Channel,
    CompressedSeries,
    SensorSample,
    SensorTrace,
    TemporalCompressor,
    Thresholds,
    calibrate_thresholds,
    compress,
    detect_anomaly,
    fidelity_metrics,
    kmeans_1d,
    pearson,
    reconstruct,
    relative_change,
    thresholds_from_changes,
    tradeoff_sweep,
)

GOLDEN_KEPT_AT_002 = [0, 24, 25, 26, 27, 28, 29, 31, 32, 33, 35, 39]


class TestSensorTrace:

    def test_rejects_non_increasing_timestamps(self):
        with pytest.raises(InvalidParameterError):
            SensorTrace(Channel.TEMPERATURE, [0.0, 1.0, 1.0], [20.0, 20.0, 20.0])

    def test_rejects_nan(self):
        with pytest.raises(InvalidParameterError):
            SensorTrace.from_values(Channel.HUMIDITY, [55.0, float("nan")])

    def test_iterates_samples(self):
        trace = SensorTrace.from_values(Channel.NITRATE, [250.0, 251.0], sample_period=2.0, start=10.0)
        assert list(trace) == [SensorSample(10.0, 250.0, Channel.NITRATE),
                               SensorSample(12.0, 251.0, Channel.NITRATE)]

    def test_channel_lookup(self):
        assert Channel.parse(" Humidity ") is Channel.HUMIDITY
        assert Channel.from_index(2) is Channel.NITRATE
        with pytest.raises(InvalidParameterError):
            Channel.parse("pressure")


class TestRelativeChange:

    def test_against_reference(self):
        assert relative_change(22.0, 20.0, Channel.TEMPERATURE) == pytest.approx(0.1)

    def test_zero_reference_uses_full_scale(self):
        assert relative_change(5.0, 0.0, Channel.TEMPERATURE) == pytest.approx(0.05)


class TestAnomalyDetection:

    def test_first_sample_sets_reference(self):
        detector = AnomalyDetector(Channel.TEMPERATURE)
        assert detector.push(0.0, 100.0) is None
        assert detector.reference == 100.0

    def test_golden_events(self, golden_trace):
        events = detect_anomaly(golden_trace, 0.10, node_id=3)
        assert [e.anomaly_time for e in events] == [28.0, 38.0]
        onset, recovery = events
        assert onset.is_onset
        assert (onset.value_before, onset.value_after) == (20.0, 22.5)
        assert not recovery.is_onset
        assert recovery.value_before == 22.5
        assert recovery.value_after == pytest.approx(20.2085)
        assert all(e.node_id == 3 for e in events)

    def test_constant_trace_has_no_events(self, constant_trace):
        assert detect_anomaly(constant_trace) == []

    def test_step_fires_once(self, step_trace):
        events = detect_anomaly(step_trace, 0.10)
        assert len(events) == 1
        assert events[0].anomaly_time == 10.0

    def test_change_equal_to_threshold_does_not_fire(self):
        trace = SensorTrace.from_values(Channel.HUMIDITY, [50.0, 55.0])
        assert detect_anomaly(trace, 0.10) == []

    def test_empty_trace_rejected(self):
        with pytest.raises(InvalidParameterError):
            detect_anomaly(SensorTrace.from_values(Channel.TEMPERATURE, []))

    def test_events_exceed_threshold_on_random_walks(self, rng):
        for _ in range(20):
            values = 20.0 * np.cumprod(1 + rng.normal(0, 0.05, 200))
            trace = SensorTrace.from_values(Channel.TEMPERATURE, values)
            for event in detect_anomaly(trace, 0.1):
                assert relative_change(event.value_after, event.value_before, Channel.TEMPERATURE) > 0.1


class TestCompression:

    def test_golden_trace_at_two_percent(self, golden_trace):
        series = compress(golden_trace, 0.02)
        assert [int(t) for t in series.kept_timestamps] == GOLDEN_KEPT_AT_002
        assert series.compression_ratio == pytest.approx(100 / 12)

    def test_golden_trace_at_three_percent(self, golden_trace):
        series = compress(golden_trace, 0.03)
        assert len(series.kept) == 7
        assert series.compression_ratio == pytest.approx(100 / 7)

    def test_constant_trace_keeps_first_only(self, constant_trace):
        series = compress(constant_trace)
        assert len(series.kept) == 1
        assert series.compression_ratio == 50.0

    def test_streaming_matches_batch(self, golden_trace):
        compressor = TemporalCompressor(Channel.TEMPERATURE, 0.02)
        flags = [compressor.push(v) for v in golden_trace.values]
        assert sum(flags) == len(compress(golden_trace, 0.02).kept)

    def test_non_positive_threshold_rejected(self):
        with pytest.raises(InvalidParameterError):
            TemporalCompressor(Channel.TEMPERATURE, 0.0)

    def test_reconstruction_error_bounded_by_y(self, rng):
        for y in (0.01, 0.02, 0.05):
            values = 20.0 + rng.normal(0, 0.5, 300)
            trace = SensorTrace.from_values(Channel.TEMPERATURE, values)
            series = compress(trace, y)
            assert series.kept[0].timestamp == 0.0
            rebuilt = reconstruct(series, trace.timestamps)
            error = np.abs(trace.values - rebuilt.values) / np.abs(rebuilt.values)
            assert np.all(error <= y + 1e-12)

    def test_compression_postconditions_on_random_traces(self):
        rng = np.random.default_rng(2024)
        channels = list(Channel)
        zero_references = 0
        for trial in range(10_000):
            channel = channels[trial % len(channels)]
            y = float(rng.uniform(0.005, 0.1))
            base = float(rng.uniform(1.0, 50.0))
            values = base + np.cumsum(rng.normal(0.0, base * y, int(rng.integers(2, 40))))
            if trial % 3 == 0:
                values[rng.random(len(values)) < 0.3] = 0.0
            trace = SensorTrace.from_values(channel, values)
            series = compress(trace, y)
            kept_times = set(series.kept_timestamps.tolist())

            last = None
            for sample in trace:
                if sample.timestamp in kept_times:
                    last = sample.value
                else:
                    assert relative_change(sample.value, last, channel) <= y, f"trial {trial}"
            for before, after in zip(series.kept[:-1], series.kept[1:]):
                assert relative_change(after.value, before.value, channel) > y, f"trial {trial}"
                zero_references += before.value == 0.0

            rebuilt = reconstruct(series, trace.timestamps).values
            errors = [relative_change(v, r, channel) for v, r in zip(trace.values, rebuilt)]
            assert max(errors) <= y, f"trial {trial}"
        assert zero_references > 0


class TestReconstruction:

    def test_zero_order_hold(self):
        series = CompressedSeries(Channel.TEMPERATURE, [SensorSample(0.0, 20.0, Channel.TEMPERATURE),
                                                        SensorSample(5.0, 23.0, Channel.TEMPERATURE)], 10)
        rebuilt = reconstruct(series, [0.0, 4.9, 5.0, 9.0])
        assert list(rebuilt.values) == [20.0, 20.0, 23.0, 23.0]

    def test_timestamp_before_first_kept_rejected(self):
        series = CompressedSeries(Channel.TEMPERATURE, [SensorSample(5.0, 23.0, Channel.TEMPERATURE)], 1)
        with pytest.raises(InvalidParameterError):
            reconstruct(series, [4.0, 5.0])

    def test_empty_series_rejected(self):
        with pytest.raises(InvalidParameterError):
            reconstruct(CompressedSeries(Channel.TEMPERATURE), [0.0])


class TestFidelity:

    def test_golden_correlation(self, golden_trace):
        metrics = fidelity_metrics(golden_trace, compress(golden_trace, 0.02))
        assert metrics.pearson_correlation == pytest.approx(0.9916, abs=1e-3)
        assert not metrics.constant_signal

    def test_correlation_drops_with_coarser_y(self, golden_trace):
        rows = tradeoff_sweep(golden_trace, [0.02, 0.03])
        assert rows[0].correlation > rows[1].correlation
        assert rows[1].correlation == pytest.approx(0.926, abs=2e-3)
        assert rows[1].kept == 7

    def test_constant_signal_flagged(self, constant_trace):
        metrics = fidelity_metrics(constant_trace, compress(constant_trace))
        assert metrics.pearson_correlation is None
        assert metrics.constant_signal

    def test_pearson_constant_reconstruction(self):
        assert pearson(np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0, 1.0])) == 0.0

    def test_channel_mismatch_rejected(self, golden_trace):
        with pytest.raises(InvalidParameterError):
            fidelity_metrics(golden_trace, CompressedSeries(Channel.HUMIDITY,
                                                            [SensorSample(0.0, 55.0, Channel.HUMIDITY)], 1))


class TestCalibration:

    def test_kmeans_two_groups(self):
        centroids, labels = kmeans_1d([1.0, 1.0, 1.0, 10.0, 10.0, 10.0], 2)
        assert list(centroids) == [1.0, 10.0]
        assert list(labels) == [0, 0, 0, 1, 1, 1]

    def test_kmeans_needs_k_values(self):
        with pytest.raises(InvalidParameterError):
            kmeans_1d([1.0], 2)

    def test_thresholds_from_bimodal_changes(self):
        changes = [0.01] * 20 + [0.012] * 20 + [0.3] * 5
        thresholds = thresholds_from_changes(changes)
        assert thresholds.anomaly_x == pytest.approx((0.011 + 0.3) / 2)
        assert thresholds.compress_y == pytest.approx(0.012)
        assert thresholds.compress_y < thresholds.anomaly_x

    def test_compress_y_is_low_centroid_plus_spread(self):
        low = [0.01, 0.01, 0.01, 0.05]
        thresholds = thresholds_from_changes(low + [0.5, 0.5])
        assert thresholds.anomaly_x == pytest.approx((0.02 + 0.5) / 2)
        assert thresholds.compress_y == pytest.approx(0.02 + np.std(low))
        assert thresholds.compress_y < max(low)

    def test_degenerate_history_falls_back(self):
        assert thresholds_from_changes([0.01] * 10) == Thresholds()

    def test_calibrate_from_trace(self, golden_trace):
        thresholds = calibrate_thresholds(golden_trace)
        assert 0 < thresholds.anomaly_x < 1
        assert thresholds.compress_y > 0

    def test_calibration_is_deterministic(self, rng):
        values = 20.0 * np.cumprod(1 + rng.normal(0, 0.02, 500))
        trace = SensorTrace.from_values(Channel.TEMPERATURE, values)
        assert calibrate_thresholds(trace, seed=7) == calibrate_thresholds(trace, seed=7)

    def test_short_history_rejected(self):
        with pytest.raises(InvalidParameterError):
            calibrate_thresholds(SensorTrace.from_values(Channel.TEMPERATURE, [20.0, 21.0, 22.0]))
