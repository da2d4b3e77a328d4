"""
Sensor-trace CSV ingestion, synthetic trace generation and golden fixtures.

Trace files have a mandatory header ``timestamp_s,channel,value`` and one
reading per row. Channels may be interleaved; timestamps must strictly
increase within each channel.
"""

import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Union

import numpy as np
import pandas as pd

import config
from exceptions import InvalidParameterError, TraceFormatError
from isa_codec import Channel, SensorTrace

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["timestamp_s", "channel", "value"]
TraceSource = Union[str, Path, TextIO]


def _source_name(source: TraceSource) -> str:
    return str(source) if isinstance(source, (str, Path)) else getattr(source, "name", "<stream>")


def parse(source: TraceSource) -> Dict[Channel, SensorTrace]:
    """Read a trace CSV into one SensorTrace per channel present."""
    name = _source_name(source)
    try:
        df = pd.read_csv(source, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise TraceFormatError("trace file has no header", line_number=1, source=name)
    except pd.errors.ParserError as e:
        raise TraceFormatError(f"malformed trace file: {e}", source=name, original_error=e)

    if list(df.columns) != TRACE_COLUMNS:
        raise TraceFormatError(f"expected header {','.join(TRACE_COLUMNS)}, got {','.join(df.columns)}",
                               line_number=1, source=name)
    if df.empty:
        return {}

    # Row i of the frame is line i + 2 of the file
    line_numbers = np.arange(len(df)) + 2
    timestamps = pd.to_numeric(df["timestamp_s"], errors="coerce")
    values = pd.to_numeric(df["value"], errors="coerce")
    bad = ~(np.isfinite(timestamps) & np.isfinite(values))
    if bad.any():
        first = int(np.argmax(bad.to_numpy()))
        raise TraceFormatError(f"non-numeric timestamp or value: {','.join(df.iloc[first])}",
                               line_number=int(line_numbers[first]), source=name)

    known = {c.value for c in Channel}
    channels = df["channel"].str.strip().str.lower()
    unknown = ~channels.isin(known)
    if unknown.any():
        first = int(np.argmax(unknown.to_numpy()))
        raise TraceFormatError(f"unknown channel '{df['channel'].iloc[first]}'",
                               line_number=int(line_numbers[first]), source=name)

    frame = pd.DataFrame({"t": timestamps, "channel": channels, "v": values, "line": line_numbers})
    offending = []
    for channel_name, group in frame.groupby("channel", sort=False):
        steps = np.diff(group["t"].to_numpy())
        if np.any(steps <= 0):
            offending.append(int(group["line"].to_numpy()[int(np.argmax(steps <= 0)) + 1]))
    if offending:
        raise TraceFormatError("timestamps not strictly increasing", line_number=min(offending), source=name)

    traces = {}
    for channel in Channel:
        group = frame[frame["channel"] == channel.value]
        if len(group):
            traces[channel] = SensorTrace(channel, group["t"].to_numpy(), group["v"].to_numpy())
    logger.debug(f"parsed {len(frame)} readings on {len(traces)} channels from {name}")
    return traces


def serialize(traces: Dict[Channel, SensorTrace], destination: Optional[TraceSource] = None) -> str:
    """Write traces as CSV, ordered by channel then time. Returns the CSV text."""
    rows = []
    for channel in Channel:
        trace = traces.get(channel)
        if trace is None:
            continue
        for t, v in zip(trace.timestamps, trace.values):
            rows.append((config.CSV_TIME_FORMAT % t, channel.value, config.CSV_VALUE_FORMAT % v))
    df = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    text = df.to_csv(index=False, lineterminator="\n")

    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    elif destination is not None:
        destination.write(text)
    return text


def parse_text(text: str) -> Dict[Channel, SensorTrace]:
    return parse(io.StringIO(text))


# ==============================================================================
# SYNTHETIC GENERATION
# ==============================================================================

ANOMALY_SHAPES = ("step", "ramp")


@dataclass(frozen=True)
class AnomalySpec:
    """
    One excursion of ``magnitude`` (relative to baseline) held for ``duration``
    seconds from ``start``, then exponential recovery with time constant
    ``tau`` (0 recovers instantly).

    A ``step`` is at full magnitude from the first sample at ``start``; a
    ``ramp`` climbs linearly and reaches it one sample before ``start + duration``.
    """
    start: float
    duration: float
    magnitude: float
    tau: float = 0.0
    channel: Channel = Channel.TEMPERATURE
    shape: str = "step"

    def excess(self, t: np.ndarray, sample_period: float) -> np.ndarray:
        end = self.start + self.duration
        out = np.zeros_like(t)
        active = (t >= self.start) & (t <= end)
        if self.shape == "ramp":
            out[active] = self.magnitude * np.minimum(1.0, (t[active] - self.start + sample_period) / self.duration)
        else:
            out[active] = self.magnitude
        if self.tau > 0:
            decay = t > end
            out[decay] = self.magnitude * np.exp(-(t[decay] - end) / self.tau)
        return out


@dataclass(frozen=True)
class SynthSpec:
    baselines: Dict[Channel, float] = field(
        default_factory=lambda: {c: c.baseline for c in Channel}
    )
    noise_amplitude: float = 0.0
    anomalies: List[AnomalySpec] = field(default_factory=list)
    duration: float = 100.0
    sample_period: float = config.SAMPLE_PERIOD_S
    seed: int = config.DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.duration <= 0 or self.sample_period <= 0:
            raise InvalidParameterError("duration and sample_period must be positive",
                                        param_name="duration", param_value=self.duration)
        if self.noise_amplitude < 0:
            raise InvalidParameterError("noise_amplitude must be non-negative",
                                        param_name="noise_amplitude", param_value=self.noise_amplitude)
        for anomaly in self.anomalies:
            if anomaly.shape not in ANOMALY_SHAPES:
                raise InvalidParameterError(f"anomaly shape must be one of {', '.join(ANOMALY_SHAPES)}",
                                            param_name="shape", param_value=anomaly.shape)
            if not math.isfinite(anomaly.magnitude):
                raise InvalidParameterError("anomaly magnitude must be finite",
                                            param_name="magnitude", param_value=anomaly.magnitude)
            if anomaly.duration <= 0 or anomaly.tau < 0:
                raise InvalidParameterError("anomaly duration must be positive and tau non-negative",
                                            param_name="duration", param_value=anomaly.duration)
            if anomaly.start < 0 or anomaly.start + anomaly.duration > self.duration:
                raise InvalidParameterError("anomaly lies outside the trace duration",
                                            param_name="start", param_value=anomaly.start)

    @property
    def sample_count(self) -> int:
        return int(round(self.duration / self.sample_period))


def generate(spec: SynthSpec) -> Dict[Channel, SensorTrace]:
    """Render a SynthSpec; identical specs (seed included) give identical traces."""
    rng = np.random.default_rng(spec.seed)
    t = spec.sample_period * np.arange(spec.sample_count)
    traces = {}
    for channel in Channel:
        if channel not in spec.baselines:
            continue
        excess = np.zeros_like(t)
        for anomaly in spec.anomalies:
            if anomaly.channel is channel:
                excess += anomaly.excess(t, spec.sample_period)
        noise = (rng.uniform(-spec.noise_amplitude, spec.noise_amplitude, len(t))
                 if spec.noise_amplitude > 0 else np.zeros_like(t))
        traces[channel] = SensorTrace(channel, t.copy(), spec.baselines[channel] * (1 + excess + noise))
    return traces


def fig9_spec(noise: float = 0.0, seed: int = config.DEFAULT_SEED) -> SynthSpec:
    """Heated excursion of the reference temperature trace: +15% over 24-30 s, 3 s recovery."""
    return SynthSpec(
        baselines={Channel.TEMPERATURE: config.CHANNEL_BASELINES["temperature"]},
        noise_amplitude=noise,
        anomalies=[AnomalySpec(start=24.0, duration=6.0, magnitude=0.15, tau=3.0, shape="ramp")],
        duration=100.0,
        sample_period=1.0,
        seed=seed,
    )


# ==============================================================================
# FIXTURES
# ==============================================================================

def fixtures_dir() -> Path:
    """Fixtures directory, honouring MESH_FIXTURES_DIR at call time."""
    return Path(os.getenv("MESH_FIXTURES_DIR", str(config.FIXTURES_DIR)))


def load_golden(name: str = config.GOLDEN_FIG9_TRACE,
                channel: Channel = Channel.TEMPERATURE) -> SensorTrace:
    path = fixtures_dir() / name
    if not path.exists():
        raise FileNotFoundError(f"golden fixture not found: {path}")
    traces = parse(path)
    if channel not in traces:
        raise TraceFormatError(f"fixture has no {channel.value} channel", source=str(path))
    return traces[channel]
