"""
In-sensor analytics: anomaly detection and temporal compression of sensor
streams, zero-order-hold reconstruction, fidelity metrics and k-means
threshold calibration.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import config
from exceptions import InvalidParameterError
from validators import ThresholdValidator, raise_if_invalid

logger = logging.getLogger(__name__)


class Channel(Enum):
    """Sensor channels carried by every node."""
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    NITRATE = "nitrate"

    @property
    def index(self) -> int:
        return list(Channel).index(self)

    @property
    def full_scale(self) -> float:
        return config.CHANNEL_FULL_SCALE[self.value]

    @property
    def baseline(self) -> float:
        return config.CHANNEL_BASELINES[self.value]

    @classmethod
    def from_index(cls, index: int) -> "Channel":
        channels = list(cls)
        if not 0 <= index < len(channels):
            raise InvalidParameterError(f"unknown channel index {index}",
                                        param_name="channel", param_value=index)
        return channels[index]

    @classmethod
    def parse(cls, name: str) -> "Channel":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidParameterError(f"unknown channel '{name}'", param_name="channel", param_value=name)


class SensorSample(NamedTuple):
    timestamp: float
    value: float
    channel: Channel


@dataclass
class SensorTrace:
    """Timestamped readings of one channel; timestamps strictly increase."""
    channel: Channel
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.timestamps.shape != self.values.shape or self.timestamps.ndim != 1:
            raise InvalidParameterError("timestamps and values must be 1-D arrays of equal length",
                                        param_name="timestamps")
        if not np.all(np.isfinite(self.values)) or not np.all(np.isfinite(self.timestamps)):
            raise InvalidParameterError("trace contains non-finite entries", param_name="values")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            bad = int(np.argmax(np.diff(self.timestamps) <= 0)) + 1
            raise InvalidParameterError(f"timestamps not strictly increasing at index {bad}",
                                        param_name="timestamps", param_value=float(self.timestamps[bad]))

    def __len__(self) -> int:
        return len(self.timestamps)

    def __iter__(self) -> Iterator[SensorSample]:
        for t, v in zip(self.timestamps, self.values):
            yield SensorSample(float(t), float(v), self.channel)

    @classmethod
    def from_samples(cls, channel: Channel, samples: Iterable[Tuple[float, float]]) -> "SensorTrace":
        pairs = list(samples)
        return cls(channel, np.array([p[0] for p in pairs], dtype=float),
                   np.array([p[1] for p in pairs], dtype=float))

    @classmethod
    def from_values(cls, channel: Channel, values: Sequence[float], sample_period: float = 1.0,
                    start: float = 0.0) -> "SensorTrace":
        values = np.asarray(values, dtype=float)
        return cls(channel, start + sample_period * np.arange(len(values)), values)

    def equals(self, other: "SensorTrace") -> bool:
        return (self.channel is other.channel
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class Thresholds:
    """Relative-change thresholds for anomaly detection (x) and compression (y)."""
    anomaly_x: float = config.DEFAULT_ANOMALY_X
    compress_y: float = config.DEFAULT_COMPRESS_Y

    def __post_init__(self) -> None:
        raise_if_invalid(ThresholdValidator.validate_thresholds(self.anomaly_x, self.compress_y), logger)


@dataclass(frozen=True)
class AnomalyEvent:
    node_id: int
    channel: Channel
    value_before: float
    anomaly_time: float
    value_after: float

    @property
    def is_onset(self) -> bool:
        return self.value_after > self.value_before


@dataclass
class CompressedSeries:
    """Samples kept by temporal compression of one channel."""
    channel: Channel
    kept: List[SensorSample] = field(default_factory=list)
    source_count: int = 0
    threshold_y: float = config.DEFAULT_COMPRESS_Y

    @property
    def compression_ratio(self) -> float:
        if not self.kept:
            return 1.0
        return self.source_count / len(self.kept)

    @property
    def kept_timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.kept], dtype=float)

    @property
    def kept_values(self) -> np.ndarray:
        return np.array([s.value for s in self.kept], dtype=float)


class FidelityMetrics(NamedTuple):
    compression_ratio: float
    pearson_correlation: Optional[float]
    constant_signal: bool


class TradeoffRow(NamedTuple):
    y: float
    kept: int
    compression_ratio: float
    correlation: Optional[float]
    constant_signal: bool


def relative_change(value: float, reference: float, channel: Channel) -> float:
    """|v - ref| / |ref|, or against the channel full scale when ref is exactly 0."""
    if reference == 0:
        return abs(value) / channel.full_scale
    return abs(value - reference) / abs(reference)


# ==============================================================================
# STREAMING STATE MACHINES
# ==============================================================================

@dataclass
class AnomalyDetector:
    """Push-based anomaly detector; the first sample only sets the reference."""
    channel: Channel
    threshold_x: float = config.DEFAULT_ANOMALY_X
    node_id: int = 0
    reference: Optional[float] = None

    def __post_init__(self) -> None:
        if self.threshold_x <= 0:
            raise InvalidParameterError("anomaly threshold must be positive",
                                        param_name="anomaly_x", param_value=self.threshold_x)

    def push(self, timestamp: float, value: float) -> Optional[AnomalyEvent]:
        if self.reference is None:
            self.reference = value
            return None
        if relative_change(value, self.reference, self.channel) > self.threshold_x:
            event = AnomalyEvent(self.node_id, self.channel, self.reference, timestamp, value)
            self.reference = value
            return event
        return None


@dataclass
class TemporalCompressor:
    """Push-based compressor; keeps a sample that moved more than y from the last kept one."""
    channel: Channel
    threshold_y: float = config.DEFAULT_COMPRESS_Y
    last_kept: Optional[float] = None

    def __post_init__(self) -> None:
        if self.threshold_y <= 0:
            raise InvalidParameterError("compression threshold must be positive",
                                        param_name="compress_y", param_value=self.threshold_y)

    def push(self, value: float) -> bool:
        if self.last_kept is None or relative_change(value, self.last_kept, self.channel) > self.threshold_y:
            self.last_kept = value
            return True
        return False


# ==============================================================================
# PURE OPERATIONS
# ==============================================================================

def _require_samples(stream: SensorTrace) -> None:
    if len(stream) == 0:
        raise InvalidParameterError("trace is empty", param_name="stream", param_value=0)


def detect_anomaly(stream: SensorTrace, x: float = config.DEFAULT_ANOMALY_X,
                   node_id: int = 0) -> List[AnomalyEvent]:
    """Anomaly events of a whole trace, in order."""
    _require_samples(stream)
    detector = AnomalyDetector(stream.channel, x, node_id)
    events = []
    for sample in stream:
        event = detector.push(sample.timestamp, sample.value)
        if event is not None:
            events.append(event)
    return events


def compress(stream: SensorTrace, y: float = config.DEFAULT_COMPRESS_Y) -> CompressedSeries:
    """Temporal compression of a whole trace."""
    _require_samples(stream)
    compressor = TemporalCompressor(stream.channel, y)
    kept = [sample for sample in stream if compressor.push(sample.value)]
    return CompressedSeries(stream.channel, kept, len(stream), y)


def reconstruct(c: CompressedSeries, timestamps: Sequence[float]) -> SensorTrace:
    """Zero-order-hold reconstruction at the requested timestamps."""
    if not c.kept:
        raise InvalidParameterError("cannot reconstruct from an empty series", param_name="kept")
    timestamps = np.asarray(timestamps, dtype=float)
    index = np.searchsorted(c.kept_timestamps, timestamps, side="right") - 1
    if np.any(index < 0):
        first_bad = float(timestamps[np.argmax(index < 0)])
        raise InvalidParameterError("timestamp precedes the first kept sample",
                                    param_name="timestamps", param_value=first_bad)
    return SensorTrace(c.channel, timestamps, c.kept_values[index])


def pearson(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Pearson correlation; None when ``a`` is constant, 0.0 when only ``b`` is."""
    if np.ptp(a) == 0:
        return None
    if np.ptp(b) == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def fidelity_metrics(original: SensorTrace, c: CompressedSeries) -> FidelityMetrics:
    """Compression ratio and correlation between the original and its reconstruction."""
    if original.channel is not c.channel:
        raise InvalidParameterError("series and trace are on different channels",
                                    param_name="channel", param_value=c.channel.value)
    rebuilt = reconstruct(c, original.timestamps)
    correlation = pearson(original.values, rebuilt.values)
    return FidelityMetrics(c.compression_ratio, correlation, correlation is None)


def tradeoff_sweep(trace: SensorTrace, y_values: Iterable[float]) -> List[TradeoffRow]:
    """Compression ratio and correlation for each y."""
    rows = []
    for y in y_values:
        series = compress(trace, y)
        metrics = fidelity_metrics(trace, series)
        rows.append(TradeoffRow(y, len(series.kept), metrics.compression_ratio,
                                metrics.pearson_correlation, metrics.constant_signal))
    return rows


# ==============================================================================
# THRESHOLD CALIBRATION
# ==============================================================================

def kmeans_1d(values: Sequence[float], k: int = 2, max_iterations: int = config.KMEANS_MAX_ITERATIONS,
              seed: int = config.DEFAULT_SEED) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lloyd's k-means on a 1-D sample.

    Centroids are seeded evenly between the minimum and the maximum; an empty
    cluster is re-seeded from a seeded random sample. Returns centroids in
    ascending order and the label of every value.
    """
    data = np.asarray(values, dtype=float)
    if k < 1 or len(data) < k:
        raise InvalidParameterError("need at least k values", param_name="k", param_value=k)
    rng = np.random.default_rng(seed)
    centroids = np.linspace(data.min(), data.max(), k)
    labels = np.zeros(len(data), dtype=int)

    for _ in range(max_iterations):
        labels = np.argmin(np.abs(data[:, None] - centroids[None, :]), axis=1)
        updated = centroids.copy()
        for j in range(k):
            members = data[labels == j]
            updated[j] = members.mean() if len(members) else data[rng.integers(len(data))]
        if np.array_equal(updated, centroids):
            break
        centroids = updated

    order = np.argsort(centroids)
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    return centroids[order], remap[labels]


def successive_changes(history: SensorTrace) -> np.ndarray:
    """Absolute relative change between consecutive samples."""
    values = history.values
    return np.array([relative_change(b, a, history.channel) for a, b in zip(values[:-1], values[1:])])


def thresholds_from_changes(changes: Sequence[float], k: int = 2,
                            seed: int = config.DEFAULT_SEED) -> Thresholds:
    """Thresholds from a set of relative changes via k-means."""
    data = np.asarray(changes, dtype=float)
    if len(data) < k or np.ptp(data) == 0:
        logger.warning("degenerate calibration history; using default thresholds")
        return Thresholds()

    centroids, labels = kmeans_1d(data, k, seed=seed)
    low = data[labels == 0]
    anomaly_x = float((centroids[0] + centroids[1]) / 2)
    compress_y = float(centroids[0] + low.std())

    if not 0 < anomaly_x < 1:
        logger.warning(f"calibrated anomaly_x {anomaly_x:.4f} out of range; using default thresholds")
        return Thresholds()
    if compress_y <= 0:
        compress_y = min(config.DEFAULT_COMPRESS_Y, anomaly_x)
        logger.warning(f"low-change cluster has no spread; compress_y set to {compress_y}")
    return Thresholds(anomaly_x, compress_y)


def calibrate_thresholds(history: SensorTrace, k: int = 2, seed: int = config.DEFAULT_SEED) -> Thresholds:
    """Calibrate x and y from a history of readings."""
    if k < 2:
        raise InvalidParameterError("k must be at least 2", param_name="k", param_value=k)
    if len(history) < 2 * k:
        raise InvalidParameterError(f"history needs at least {2 * k} samples",
                                    param_name="history", param_value=len(history))
    return thresholds_from_changes(successive_changes(history), k, seed)
