"""
Scenario configuration for the mesh simulator.

Scenarios are flat ``key = value`` text files; ``#`` starts a comment. One
preset per lifetime-ladder rung ships in the presets directory.
"""

import logging
import os
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Tuple

import config
from energy_core import LinkParams, LoRaParams, ReceiverParams, lora_range
from exceptions import ConfigurationError, MeshEnergyError
from isa_codec import Thresholds
from utils import mah_to_coulombs

logger = logging.getLogger(__name__)

Position = Tuple[float, float]


class SimMode(Enum):
    LORA_EVERY_SECOND = "lora_every_second"
    DUTY_CYCLED_LORA = "duty_cycled_lora"
    ISA = "isa"
    ISA_CI = "isa_ci"
    ISA_CI_CAS = "isa_ci_cas"

    @property
    def uses_isa(self) -> bool:
        return self in (SimMode.ISA, SimMode.ISA_CI, SimMode.ISA_CI_CAS)

    @property
    def uses_clusters(self) -> bool:
        return self in (SimMode.ISA_CI, SimMode.ISA_CI_CAS)


class UplinkPolicy(Enum):
    EVENT_DRIVEN = "event_driven"
    EVERY_EVENT = "every_event"
    FIXED_CADENCE = "fixed_cadence"


class EventCost(NamedTuple):
    current: float
    duration: float

    @property
    def charge(self) -> float:
        return self.current * self.duration


@dataclass(frozen=True)
class EnergyProfile:
    """Measured current draw of each node activity."""
    supply_voltage: float = config.SUPPLY_VOLTAGE
    lora_tx: EventCost = EventCost(72.5e-3, 130e-3)
    lora_rx: EventCost = EventCost(12.5e-3, 60e-3)
    ble_event: EventCost = EventCost(8.1e-3, 12e-3)
    isa_compute: EventCost = EventCost(3.6e-3, 130e-6)
    isa_ci_compute: EventCost = EventCost(3.61e-3, 135e-6)
    isa_ci_cas_compute: EventCost = EventCost(3.65e-3, 150e-6)
    leakage_current: float = config.LEAKAGE_MEASURED_A
    lora_overhead_j: float = config.LORA_EVENT_OVERHEAD_J

    def __post_init__(self) -> None:
        for name in ("lora_tx", "lora_rx", "ble_event", "isa_compute", "isa_ci_compute", "isa_ci_cas_compute"):
            cost = getattr(self, name)
            if cost.current < 0 or cost.duration < 0:
                raise ConfigurationError(f"{name} current and duration must be non-negative",
                                         config_key=name, config_value=cost)
        if self.leakage_current < 0 or self.lora_overhead_j < 0:
            raise ConfigurationError("leakage and overhead must be non-negative", config_key="leakage_current")
        if self.supply_voltage <= 0:
            raise ConfigurationError("supply voltage must be positive", config_key="supply_voltage_v",
                                     config_value=self.supply_voltage)

    @classmethod
    def measured(cls) -> "EnergyProfile":
        return cls()

    @classmethod
    def lifetime_consistent(cls) -> "EnergyProfile":
        return cls(leakage_current=config.LEAKAGE_LIFETIME_CONSISTENT_A)

    @property
    def lora_overhead_charge(self) -> float:
        return self.lora_overhead_j / self.supply_voltage

    @property
    def lora_event_charge(self) -> float:
        """Charge of one uplink: transmit, receive window and setup overhead."""
        return self.lora_tx.charge + self.lora_rx.charge + self.lora_overhead_charge

    def compute_cost(self, mode: SimMode) -> EventCost:
        if mode is SimMode.ISA:
            return self.isa_compute
        if mode is SimMode.ISA_CI:
            return self.isa_ci_compute
        if mode is SimMode.ISA_CI_CAS:
            return self.isa_ci_cas_compute
        return EventCost(0.0, 0.0)


LEAKAGE_PRESETS = {
    "measured": config.LEAKAGE_MEASURED_A,
    "lifetime_consistent": config.LEAKAGE_LIFETIME_CONSISTENT_A,
}
LORA_COST_MODELS = ("profile", "airtime")


@dataclass(frozen=True)
class ScenarioConfig:
    mode: SimMode = SimMode.ISA
    nodes: int = 1
    node_spacing_m: float = 5.0
    positions: Optional[Tuple[Position, ...]] = None
    hub_position: Position = (1000.0, 0.0)
    relay_positions: Tuple[Position, ...] = ()
    sample_period_s: float = config.SAMPLE_PERIOD_S
    uplink_policy: UplinkPolicy = UplinkPolicy.EVENT_DRIVEN
    heartbeat_s: float = config.HEARTBEAT_PERIOD_S
    duty_period_s: float = 900.0
    continuous_baseline: bool = True
    anomaly_x: float = config.DEFAULT_ANOMALY_X
    compress_y: float = config.DEFAULT_COMPRESS_Y
    leakage_preset: str = "lifetime_consistent"
    leakage_current_a: Optional[float] = None
    supply_voltage_v: float = config.SUPPLY_VOLTAGE
    lora_overhead_j: float = config.LORA_EVENT_OVERHEAD_J
    battery_mah: float = config.BATTERY_CAPACITY_MAH
    spreading_factor: int = config.LORA_SPREADING_FACTOR
    bandwidth_hz: float = config.LORA_BANDWIDTH_HZ
    payload_bytes: int = config.LORA_PAYLOAD_BYTES
    carrier_hz: float = config.LORA_CARRIER_HZ
    path_loss_exponent: float = config.LORA_PATH_LOSS_EXPONENT
    lora_cost_model: str = "profile"
    ble_range_m: float = config.BLE_RANGE_M
    duration_s: float = config.LADDER_DURATION_S
    seed: int = config.DEFAULT_SEED
    anomaly_cadence_s: float = config.ANOMALY_CADENCE_S
    anomaly_magnitude: float = config.ANOMALY_MAGNITUDE
    trace_path: Optional[str] = None
    stop_at_first_death: bool = False

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ConfigurationError("duration must be positive", config_key="duration_s",
                                     config_value=self.duration_s)
        if self.nodes < 1:
            raise ConfigurationError("at least one node is required", config_key="nodes", config_value=self.nodes)
        if self.nodes > config.BLE_MAX_NODES:
            raise ConfigurationError(f"at most {config.BLE_MAX_NODES} nodes fit the broadcast schedule",
                                     config_key="nodes", config_value=self.nodes)
        if self.positions is not None and len(self.positions) != self.nodes:
            raise ConfigurationError("positions must list one entry per node", config_key="positions",
                                     config_value=len(self.positions))
        if self.sample_period_s <= 0:
            raise ConfigurationError("sample period must be positive", config_key="sample_period_s",
                                     config_value=self.sample_period_s)
        if self.duty_period_s < self.sample_period_s:
            raise ConfigurationError("duty period must be at least the sample period",
                                     config_key="duty_period_s", config_value=self.duty_period_s)
        if self.leakage_preset not in LEAKAGE_PRESETS:
            raise ConfigurationError(f"leakage_preset must be one of {', '.join(LEAKAGE_PRESETS)}",
                                     config_key="leakage_preset", config_value=self.leakage_preset)
        if self.lora_cost_model not in LORA_COST_MODELS:
            raise ConfigurationError(f"lora_cost_model must be one of {', '.join(LORA_COST_MODELS)}",
                                     config_key="lora_cost_model", config_value=self.lora_cost_model)
        if self.battery_mah <= 0:
            raise ConfigurationError("battery must be positive", config_key="battery_mah",
                                     config_value=self.battery_mah)
        # Surface parameter errors under the scenario key that caused them
        for key, build in (("anomaly_x", lambda: self.thresholds), ("spreading_factor", lambda: self.lora_params),
                           ("carrier_hz", lambda: self.link_params), ("supply_voltage_v", lambda: self.energy_profile)):
            try:
                build()
            except ConfigurationError:
                raise
            except MeshEnergyError as e:
                raise ConfigurationError(e.message, config_key=key, original_error=e)

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.anomaly_x, self.compress_y)

    @property
    def leakage_current(self) -> float:
        if self.leakage_current_a is not None:
            return self.leakage_current_a
        return LEAKAGE_PRESETS[self.leakage_preset]

    @property
    def energy_profile(self) -> EnergyProfile:
        return EnergyProfile(supply_voltage=self.supply_voltage_v, leakage_current=self.leakage_current,
                             lora_overhead_j=self.lora_overhead_j)

    @property
    def lora_params(self) -> LoRaParams:
        return LoRaParams(spreading_factor=self.spreading_factor, bandwidth=self.bandwidth_hz,
                          payload_bytes=self.payload_bytes)

    @property
    def link_params(self) -> LinkParams:
        return LinkParams(self.carrier_hz, 1.0, self.path_loss_exponent)

    @property
    def receiver_params(self) -> ReceiverParams:
        return ReceiverParams(config.LORA_NOISE_FIGURE_DB, config.LORA_REQUIRED_SNR_DB,
                              self.bandwidth_hz, self.bandwidth_hz)

    @property
    def hop_range(self) -> float:
        return lora_range(self.lora_params, self.link_params, self.receiver_params)

    @property
    def battery_coulombs(self) -> float:
        return mah_to_coulombs(self.battery_mah)

    def node_positions(self) -> List[Position]:
        if self.positions is not None:
            return [tuple(p) for p in self.positions]  # type: ignore[misc]
        return [(i * self.node_spacing_m, 0.0) for i in range(self.nodes)]


# ==============================================================================
# KEY=VALUE LOADING
# ==============================================================================

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_position(text: str) -> Position:
    x, y = text.split(":")
    return float(x), float(y)


def _parse_positions(text: str) -> Tuple[Position, ...]:
    if text.strip().lower() == "none":
        return ()
    return tuple(_parse_position(p) for p in text.split(";") if p.strip())


def _parse_optional_positions(text: str) -> Optional[Tuple[Position, ...]]:
    return _parse_positions(text) or None


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none") else float(text)


def _parse_optional_str(text: str) -> Optional[str]:
    return None if text.strip().lower() in ("", "none") else text.strip()


_CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "mode": lambda s: SimMode(s.strip().lower()),
    "nodes": int,
    "positions": _parse_optional_positions,
    "hub_position": _parse_position,
    "relay_positions": _parse_positions,
    "uplink_policy": lambda s: UplinkPolicy(s.strip().lower()),
    "continuous_baseline": _parse_bool,
    "stop_at_first_death": _parse_bool,
    "leakage_preset": str.strip,
    "lora_cost_model": str.strip,
    "leakage_current_a": _parse_optional_float,
    "trace_path": _parse_optional_str,
    "spreading_factor": int,
    "payload_bytes": int,
    "seed": int,
}

SCENARIO_KEYS = [f.name for f in fields(ScenarioConfig)]


def parse_value(key: str, text: str) -> Any:
    if key not in SCENARIO_KEYS:
        raise ConfigurationError(f"unknown scenario key '{key}'", config_key=key, config_value=text)
    try:
        return _CONVERTERS.get(key, float)(text)
    except (ValueError, TypeError) as e:
        raise ConfigurationError(f"invalid value for '{key}': {text}", config_key=key, config_value=text,
                                 original_error=e)


def parse_scenario_text(text: str) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {line_number}: expected key = value", config_value=raw)
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, value)
    return values


def build_scenario(values: Mapping[str, Any], base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    if base is None:
        return ScenarioConfig(**values)
    return replace(base, **values)


def load_scenario(path: Path, overrides: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    """Read a scenario file; relative trace paths resolve against the file's directory."""
    path = Path(path)
    values = parse_scenario_text(path.read_text(encoding="utf-8"))
    trace_path = values.get("trace_path")
    if trace_path and not Path(trace_path).is_absolute():
        values["trace_path"] = str(path.parent / trace_path)
    values.update(overrides or {})
    scenario = build_scenario(values)
    logger.info(f"loaded scenario {path.name}: mode={scenario.mode.value} nodes={scenario.nodes}")
    return scenario


def scenario_to_text(scenario: ScenarioConfig) -> str:
    """Render a scenario back to key = value lines."""
    lines = []
    for f in fields(scenario):
        value = getattr(scenario, f.name)
        if isinstance(value, Enum):
            text = value.value
        elif f.name in ("positions", "relay_positions"):
            text = ";".join(f"{x}:{y}" for x, y in value) if value else "none"
        elif f.name == "hub_position":
            text = f"{value[0]}:{value[1]}"
        elif value is None:
            text = "none"
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


# ==============================================================================
# PRESETS
# ==============================================================================

LADDER_RUNGS = [mode.value for mode in SimMode]


def presets_dir() -> Path:
    return Path(os.getenv("MESH_PRESETS_DIR", str(config.PRESETS_DIR)))


def list_presets() -> Dict[str, Path]:
    directory = presets_dir()
    if not directory.is_dir():
        return {}
    return {p.stem: p for p in sorted(directory.glob("*.conf"))}


def load_preset(name: str, overrides: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    presets = list_presets()
    if name not in presets:
        raise ConfigurationError(f"unknown preset '{name}'; available: {', '.join(presets) or 'none'}",
                                 config_key="preset", config_value=name)
    return load_scenario(presets[name], overrides)


def ladder_scenarios(overrides: Optional[Mapping[str, Any]] = None) -> List[ScenarioConfig]:
    """One scenario per rung, in ladder order."""
    return [load_preset(rung, overrides) for rung in LADDER_RUNGS]
