"""
Closed-form energy, range and lifetime models for the sensor mesh.

All functions are pure. Energies are in joules, charges in coulombs, powers
in watts and times in seconds; decibel inputs are converted explicitly.
Supply voltage is carried as a parameter wherever charge becomes energy.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import config
from exceptions import InvalidParameterError
from utils import db_to_linear, dbm_to_watts, linear_to_db, mah_to_coulombs, wavelength
from validators import BaseValidator, RadioValidator, ValidationResult, raise_if_invalid

logger = logging.getLogger(__name__)


# ==============================================================================
# PARAMETER SETS
# ==============================================================================

@dataclass(frozen=True)
class LinkParams:
    """Free-space link between one transmitter and one receiver."""
    carrier_frequency: float
    distance: float
    path_loss_exponent: float = 2.0
    tx_antenna_gain: float = 0.0
    rx_antenna_gain: float = 0.0

    def __post_init__(self) -> None:
        raise_if_invalid(
            RadioValidator.validate_link(self.carrier_frequency, self.distance, self.path_loss_exponent),
            logger,
        )

    @classmethod
    def lora_preset(cls, distance: float = 1.0) -> "LinkParams":
        return cls(config.LORA_CARRIER_HZ, distance, config.LORA_PATH_LOSS_EXPONENT)

    @classmethod
    def ble_preset(cls, distance: float = 10.0) -> "LinkParams":
        return cls(config.BLE_CARRIER_HZ, distance, 2.0,
                   config.BLE_ANTENNA_GAIN_DB, config.BLE_ANTENNA_GAIN_DB)

    def with_distance(self, distance: float) -> "LinkParams":
        return replace(self, distance=distance)


@dataclass(frozen=True)
class ReceiverParams:
    """Receiver noise model and transmitter efficiency.

    ``sensitivity_dbm`` overrides the thermal-noise sensitivity when a
    datasheet figure is known.
    """
    noise_figure: float
    required_snr: float
    bandwidth: float
    data_rate: float
    tx_efficiency: float = 1.0
    temperature: float = config.ROOM_TEMPERATURE_K
    sensitivity_dbm: Optional[float] = None

    def __post_init__(self) -> None:
        result = RadioValidator.validate_receiver(self.bandwidth, self.data_rate, self.tx_efficiency)
        result.merge(BaseValidator.validate_positive(self.temperature, "temperature"))
        raise_if_invalid(result, logger)

    @classmethod
    def lora_preset(cls) -> "ReceiverParams":
        return cls(config.LORA_NOISE_FIGURE_DB, config.LORA_REQUIRED_SNR_DB,
                   config.LORA_BANDWIDTH_HZ, config.LORA_BANDWIDTH_HZ)

    @classmethod
    def ble_preset(cls) -> "ReceiverParams":
        return cls(0.0, 0.0, 1e6, config.BLE_DATA_RATE_BPS,
                   sensitivity_dbm=config.BLE_SENSITIVITY_DBM)


@dataclass(frozen=True)
class LoRaParams:
    """LoRa modulation, framing and radio power draw."""
    spreading_factor: int = config.LORA_SPREADING_FACTOR
    bandwidth: float = config.LORA_BANDWIDTH_HZ
    code_rate: float = config.LORA_CODE_RATE
    header_flag: int = 0
    low_data_rate_flag: int = 0
    preamble_bytes: int = config.LORA_PREAMBLE_BYTES
    payload_bytes: int = config.LORA_PAYLOAD_BYTES
    tx_power: float = config.LORA_TX_POWER_DBM
    tx_power_consumption: float = config.LORA_TX_CONSUMPTION_W
    rx_power_consumption: float = config.LORA_RX_CONSUMPTION_W
    include_preamble_in_packet: bool = False

    def __post_init__(self) -> None:
        result = RadioValidator.validate_lora(
            self.spreading_factor, self.bandwidth, self.code_rate, self.header_flag,
            self.low_data_rate_flag, self.payload_bytes, self.preamble_bytes,
        )
        result.merge(BaseValidator.validate_non_negative(self.tx_power_consumption, "tx_power_consumption"))
        result.merge(BaseValidator.validate_non_negative(self.rx_power_consumption, "rx_power_consumption"))
        raise_if_invalid(result, logger)

    @property
    def coding_factor(self) -> float:
        """1/CR computed from the integer denominator so 4/5 gives exactly 1.25."""
        return round(4 / self.code_rate) / 4

    @property
    def byte_time(self) -> float:
        """Time per packet byte, 2^SF/BW."""
        return 2 ** self.spreading_factor / self.bandwidth

    def with_sf(self, spreading_factor: int) -> "LoRaParams":
        return replace(self, spreading_factor=spreading_factor)


@dataclass(frozen=True)
class DutyCycleParams:
    """Periodic no-storage LoRa node: transmit the latest sample every N seconds."""
    period_N: float
    bits_per_sample: int = config.DUTY_BITS_PER_SAMPLE
    data_rate: float = config.DUTY_DATA_RATE_BPS
    on_current: float = config.DUTY_ON_CURRENT_A
    compute_leak_current: float = config.LEAKAGE_LIFETIME_CONSISTENT_A
    transition_time: float = config.DUTY_TRANSITION_S
    horizon: float = config.DUTY_HORIZON_S
    supply_voltage: float = config.SUPPLY_VOLTAGE

    def __post_init__(self) -> None:
        result = BaseValidator.validate_range(self.period_N, 1.0, None, "period_N")
        result.merge(BaseValidator.validate_non_negative(self.transition_time, "transition_time"))
        result.merge(BaseValidator.validate_positive(self.horizon, "horizon"))
        result.merge(BaseValidator.validate_positive(self.data_rate, "data_rate"))
        result.merge(BaseValidator.validate_positive(self.supply_voltage, "supply_voltage"))
        if self.on_current < self.compute_leak_current:
            result.add_error("on_current must not be below compute_leak_current")
        raise_if_invalid(result, logger)


@dataclass(frozen=True)
class CiEnergyParams:
    """Per-cycle energies of a cluster using short-range collaboration."""
    e_long_range: float
    e_short_range: float
    e_compute_ci: float
    e_compute_ci_cas: float
    battery_energy: float
    cluster_size: int = 1

    def __post_init__(self) -> None:
        result = ValidationResult()
        for name in ("e_long_range", "e_short_range", "e_compute_ci", "e_compute_ci_cas", "battery_energy"):
            result.merge(BaseValidator.validate_non_negative(getattr(self, name), name))
        if self.cluster_size < 1:
            result.add_error(f"cluster_size must be at least 1, got {self.cluster_size}")
        if result.is_valid and self.e_long_range <= self.e_short_range:
            result.add_warning("e_long_range does not exceed e_short_range; clustering never saves energy")
        raise_if_invalid(result, logger)

    @classmethod
    def reference_preset(cls, cluster_size: int = 1, cycle_period: float = config.CI_CYCLE_PERIOD_S,
                     battery_mah: float = config.BATTERY_CAPACITY_MAH,
                     supply_voltage: float = config.SUPPLY_VOLTAGE) -> "CiEnergyParams":
        """Measured per-event energies with compute accumulated over one cycle."""
        return cls(
            e_long_range=config.CI_E_LONG_RANGE_J,
            e_short_range=config.CI_E_SHORT_RANGE_J,
            e_compute_ci=config.CI_E_COMPUTE_PER_SECOND_J * cycle_period,
            e_compute_ci_cas=config.CI_CAS_E_COMPUTE_PER_SECOND_J * cycle_period,
            battery_energy=mah_to_coulombs(battery_mah) * supply_voltage,
            cluster_size=cluster_size,
        )

    def with_cluster_size(self, cluster_size: int) -> "CiEnergyParams":
        return replace(self, cluster_size=cluster_size)


class FsplResult(NamedTuple):
    gain: float
    loss_db: float


# ==============================================================================
# COMPUTATION AND COMMUNICATION LIMITS
# ==============================================================================

def fspl(link: LinkParams) -> FsplResult:
    """Friis free-space gain G_tx·G_rx·(λ/4πd)^n and its loss in dB."""
    lam = wavelength(link.carrier_frequency)
    gain = (
        db_to_linear(link.tx_antenna_gain)
        * db_to_linear(link.rx_antenna_gain)
        * (lam / (4 * math.pi * link.distance)) ** link.path_loss_exponent
    )
    return FsplResult(gain, -linear_to_db(gain))


def landauer_limit(temperature: float = config.ROOM_TEMPERATURE_K) -> float:
    """Minimum energy to erase one bit, κT·ln2."""
    if temperature <= 0:
        raise InvalidParameterError("temperature must be positive",
                                    param_name="temperature", param_value=temperature)
    return config.BOLTZMANN * temperature * math.log(2)


def receiver_sensitivity(rx: ReceiverParams) -> float:
    """Receiver sensitivity in watts: κT·NF·SNR·BW unless overridden."""
    if rx.sensitivity_dbm is not None:
        return dbm_to_watts(rx.sensitivity_dbm)
    return (config.BOLTZMANN * rx.temperature * db_to_linear(rx.noise_figure)
            * db_to_linear(rx.required_snr) * rx.bandwidth)


def min_tx_power(link: LinkParams, rx: ReceiverParams) -> float:
    """Transmit power floor that just reaches the receiver sensitivity."""
    return receiver_sensitivity(rx) / fspl(link).gain


def min_comm_energy(link: LinkParams, rx: ReceiverParams) -> float:
    """Minimum communication energy per bit, Rx_sen/(FSPL·η·DR)."""
    return min_tx_power(link, rx) / (rx.tx_efficiency * rx.data_rate)


def computation_energy(bits_switching: float, energy_per_bit_switch: float) -> float:
    """Linear computation-energy model: energy grows with the bits switching per clock."""
    if bits_switching < 0 or energy_per_bit_switch < 0:
        raise InvalidParameterError("bit count and slope must be non-negative",
                                    param_name="bits_switching", param_value=bits_switching)
    return bits_switching * energy_per_bit_switch


def switching_bits(energy: float, energy_per_bit_switch: float) -> float:
    """Average number of bits switching that explains a measured energy."""
    if energy_per_bit_switch <= 0:
        raise InvalidParameterError("energy_per_bit_switch must be positive",
                                    param_name="energy_per_bit_switch", param_value=energy_per_bit_switch)
    return energy / energy_per_bit_switch


def comm_to_compute_ratio(e_comm_per_bit: float, e_comp_per_bit: float) -> float:
    """How many times more a communicated bit costs than a computed one."""
    if e_comp_per_bit <= 0:
        raise InvalidParameterError("e_comp_per_bit must be positive",
                                    param_name="e_comp_per_bit", param_value=e_comp_per_bit)
    return e_comm_per_bit / e_comp_per_bit


# ==============================================================================
# DUTY CYCLING
# ==============================================================================

def duty_cycle_energy(p: DutyCycleParams) -> float:
    """
    Energy over the horizon for a node transmitting every ``period_N`` seconds.

    The radio is on for the payload bits of every transmission plus two
    transitions; the rest of the horizon draws the leakage current. A period
    longer than the horizon yields fewer than one expected transmission.
    """
    transmissions = p.horizon / p.period_N
    if transmissions < 1:
        logger.debug(f"period {p.period_N}s exceeds horizon {p.horizon}s; "
                     f"{transmissions:.3f} expected transmissions")
    t_on = min(p.bits_per_sample / p.data_rate * transmissions, p.horizon)
    t_off = p.horizon - t_on
    charge = (
        t_on * p.on_current
        + t_off * p.compute_leak_current
        + 2 * p.transition_time * p.on_current * transmissions
    )
    return charge * p.supply_voltage


def info_loss(period_N: float, sample_period: float = config.SAMPLE_PERIOD_S) -> float:
    """Fraction of samples discarded when only the latest one is sent."""
    if sample_period <= 0 or period_N < sample_period:
        raise InvalidParameterError("period_N must be at least the sample period",
                                    param_name="period_N", param_value=period_N)
    return 1 - sample_period / period_N


def duty_cycle_lifetime(period_N: float, per_tx_charge: float, leakage_current: float,
                        battery_mah: float = config.BATTERY_CAPACITY_MAH) -> float:
    """Battery lifetime of a no-storage duty-cycled node."""
    if period_N <= 0:
        raise InvalidParameterError("period_N must be positive", param_name="period_N", param_value=period_N)
    drain = leakage_current + per_tx_charge / period_N
    if drain <= 0:
        raise InvalidParameterError("node draws no current", param_name="leakage_current",
                                    param_value=leakage_current)
    return mah_to_coulombs(battery_mah) / drain


def leakage_bound_lifetime(battery_mah: float = config.BATTERY_CAPACITY_MAH,
                           leakage_current: float = config.LEAKAGE_LIFETIME_CONSISTENT_A) -> float:
    """Lifetime if the node did nothing but leak."""
    if leakage_current <= 0:
        raise InvalidParameterError("leakage_current must be positive",
                                    param_name="leakage_current", param_value=leakage_current)
    return mah_to_coulombs(battery_mah) / leakage_current


# ==============================================================================
# COLLABORATIVE INTELLIGENCE
# ==============================================================================

def ci_savings(p: CiEnergyParams) -> float:
    """Energy per cycle saved by one head uplinking for the whole cluster."""
    n = p.cluster_size
    return (n - 1) * p.e_long_range - n * (p.e_short_range + p.e_compute_ci)


def baseline_lifetime(p: CiEnergyParams, cycle_period: float) -> float:
    """Lifetime of a node uplinking on its own once per cycle."""
    if p.e_long_range <= 0:
        raise InvalidParameterError("e_long_range must be positive for a baseline lifetime",
                                    param_name="e_long_range", param_value=p.e_long_range)
    return cycle_period * p.battery_energy / p.e_long_range


def network_lifetime_ci(p: CiEnergyParams, cycle_period: float) -> float:
    """Lifetime with a fixed cluster head, which is the bottleneck node."""
    denominator = p.e_short_range + p.e_compute_ci + p.e_long_range
    if denominator <= 0:
        raise InvalidParameterError("per-cycle head energy must be positive",
                                    param_name="denominator", param_value=denominator)
    return cycle_period * p.battery_energy / denominator


def network_lifetime_ci_cas(p: CiEnergyParams, cycle_period: float) -> float:
    """Lifetime when the head role rotates so the uplink cost is shared by n nodes."""
    n = p.cluster_size
    denominator = n * (p.e_short_range + p.e_compute_ci_cas) + p.e_long_range
    if denominator <= 0:
        raise InvalidParameterError("per-cycle cluster energy must be positive",
                                    param_name="denominator", param_value=denominator)
    return cycle_period * n * p.battery_energy / denominator


# ==============================================================================
# LORA LINK BUDGET
# ==============================================================================

def lora_range(p: LoRaParams, link: LinkParams, rx: ReceiverParams) -> float:
    """Maximum distance at which the spread-spectrum gain 2^SF closes the link."""
    n = link.path_loss_exponent
    lam = wavelength(link.carrier_frequency)
    gains = db_to_linear(link.tx_antenna_gain) * db_to_linear(link.rx_antenna_gain)
    budget = gains * dbm_to_watts(p.tx_power) * 2 ** p.spreading_factor / receiver_sensitivity(rx)
    return (lam / (4 * math.pi)) * budget ** (1 / n)


def required_spreading_factor(p: LoRaParams, link: LinkParams, rx: ReceiverParams,
                              hop_distance: float) -> Optional[int]:
    """Smallest spreading factor whose range covers ``hop_distance``."""
    for sf in range(7, 13):
        if lora_range(p.with_sf(sf), link, rx) >= hop_distance:
            return sf
    return None


def lora_packet_bytes(p: LoRaParams) -> float:
    """Bytes on air for one packet; fractional counts are kept."""
    denominator = p.spreading_factor - 2 * p.low_data_rate_flag
    if denominator <= 0:
        raise InvalidParameterError("SF - 2DE must be positive",
                                    param_name="spreading_factor", param_value=p.spreading_factor)
    numerator = 8 * p.payload_bytes - 4 * p.spreading_factor + 16 + 28 - 20 * p.header_flag
    payload_part = max(math.ceil(numerator / denominator) * p.coding_factor, 0)
    total = 8 + payload_part
    if p.include_preamble_in_packet:
        total += p.preamble_bytes + 4.25
    return total


def lora_airtime(p: LoRaParams) -> float:
    """Seconds on air for one packet."""
    return lora_packet_bytes(p) * p.byte_time


def lora_energy_per_bit(p: LoRaParams) -> float:
    """Transmit energy per payload bit for a single hop."""
    return p.tx_power_consumption * lora_airtime(p) / (8 * p.payload_bytes)


def multihop_power(p: LoRaParams, n_hops: int) -> float:
    """Total radio power of a chain: n transmitters and n-1 relay receivers."""
    if n_hops < 1:
        raise InvalidParameterError("n_hops must be at least 1", param_name="n_hops", param_value=n_hops)
    return n_hops * p.tx_power_consumption + (n_hops - 1) * p.rx_power_consumption


def lora_energy_per_bit_multihop(p: LoRaParams, n_hops: int) -> float:
    """Energy per payload bit delivered across ``n_hops`` hops."""
    return multihop_power(p, n_hops) * lora_airtime(p) / (8 * p.payload_bytes)


def multihop_benefit(sf_before: int, sf_after: int, n_hops: int, p: LoRaParams) -> float:
    """Energy ratio of one long high-SF hop to n short low-SF hops."""
    if sf_before < sf_after:
        raise InvalidParameterError("sf_before must not be below sf_after",
                                    param_name="sf_before", param_value=sf_before)
    if n_hops < 2:
        raise InvalidParameterError("n_hops must be at least 2", param_name="n_hops", param_value=n_hops)
    bytes_before = lora_packet_bytes(p.with_sf(sf_before))
    bytes_after = lora_packet_bytes(p.with_sf(sf_after))
    return (2 ** (sf_before - sf_after) * bytes_before * p.tx_power_consumption
            / (bytes_after * multihop_power(p, n_hops)))


def battery_bit_budget(energy_per_bit: float, capacity_mah: float = config.BATTERY_CAPACITY_MAH,
                       supply_voltage: float = config.SUPPLY_VOLTAGE) -> float:
    """Number of bits a battery can deliver at a given energy per bit."""
    if energy_per_bit <= 0:
        raise InvalidParameterError("energy_per_bit must be positive",
                                    param_name="energy_per_bit", param_value=energy_per_bit)
    return mah_to_coulombs(capacity_mah) * supply_voltage / energy_per_bit
