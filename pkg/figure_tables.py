"""
FigureTable builders: one pandas DataFrame per figure key with a fixed column
schema, rows in deterministic order.
"""

import logging
from dataclasses import replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import pandas as pd

import config
from energy_core import (
    CiEnergyParams,
    DutyCycleParams,
    LinkParams,
    LoRaParams,
    ReceiverParams,
    baseline_lifetime,
    battery_bit_budget,
    ci_savings,
    duty_cycle_energy,
    info_loss,
    lora_energy_per_bit,
    lora_energy_per_bit_multihop,
    lora_range,
    network_lifetime_ci,
    network_lifetime_ci_cas,
)
from exceptions import InvalidParameterError
from isa_codec import SensorTrace, tradeoff_sweep
from mesh_sim import LadderRow
from structured_logger import log_performance

logger = logging.getLogger(__name__)

FIGURE_SCHEMAS: Dict[str, List[str]] = {
    "duty_cycle": ["N", "energy_j", "energy_ratio_vs_n1", "info_loss"],
    "ci_savings": ["n", "energy_without_ci_j", "energy_with_ci_j", "savings_j"],
    "lifetime_vs_n": ["n", "no_ci_ratio", "ci_ratio", "ci_cas_ratio"],
    "sf_range_bits": ["sf", "range_m", "max_distance_2hop_m", "bits_1hop", "bits_2hop", "bits_3hop"],
    "compression_tradeoff": ["y", "kept", "compression_ratio", "correlation", "constant_signal"],
    "lifetime_ladder": ["rung", "mode", "first_death_s", "first_death_days", "last_death_s",
                        "improvement_vs_baseline", "leakage_bound_days"],
}

DEFAULT_DUTY_PERIODS = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]
DEFAULT_CLUSTER_SIZES = list(range(1, 21))
DEFAULT_SPREADING_FACTORS = list(range(7, 13))


def _frame(key: str, rows: Iterable[Sequence[Any]]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=FIGURE_SCHEMAS[key])


def duty_cycle_table(periods: Optional[Iterable[float]] = None,
                     base: Optional[DutyCycleParams] = None) -> pd.DataFrame:
    """Energy over the horizon and information loss per transmit period N."""
    periods = list(periods) if periods is not None else DEFAULT_DUTY_PERIODS
    base = base if base is not None else DutyCycleParams(period_N=1.0)
    reference = duty_cycle_energy(replace(base, period_N=1.0))
    rows = []
    for n in periods:
        energy = duty_cycle_energy(replace(base, period_N=float(n)))
        rows.append((n, energy, reference / energy, info_loss(float(n))))
    return _frame("duty_cycle", rows)


def ci_savings_table(cluster_sizes: Optional[Iterable[int]] = None,
                     base: Optional[CiEnergyParams] = None) -> pd.DataFrame:
    """Per-cycle cluster energy with and without one head uplinking for everyone."""
    cluster_sizes = list(cluster_sizes) if cluster_sizes is not None else DEFAULT_CLUSTER_SIZES
    base = base if base is not None else CiEnergyParams.reference_preset()
    rows = []
    for n in cluster_sizes:
        p = base.with_cluster_size(n)
        without = n * p.e_long_range
        savings = ci_savings(p)
        rows.append((n, without, without - savings, savings))
    return _frame("ci_savings", rows)


def lifetime_vs_n_table(cluster_sizes: Optional[Iterable[int]] = None,
                        base: Optional[CiEnergyParams] = None,
                        cycle_period: float = config.CI_CYCLE_PERIOD_S) -> pd.DataFrame:
    """Network lifetime relative to a lone uplinking node, fixed head and rotating head."""
    cluster_sizes = list(cluster_sizes) if cluster_sizes is not None else DEFAULT_CLUSTER_SIZES
    base = base if base is not None else CiEnergyParams.reference_preset(cycle_period=cycle_period)
    rows = []
    for n in cluster_sizes:
        p = base.with_cluster_size(n)
        reference = baseline_lifetime(p, cycle_period)
        rows.append((n, 1.0, network_lifetime_ci(p, cycle_period) / reference,
                     network_lifetime_ci_cas(p, cycle_period) / reference))
    return _frame("lifetime_vs_n", rows)


def sf_range_bits_table(spreading_factors: Optional[Iterable[int]] = None,
                        params: Optional[LoRaParams] = None,
                        battery_mah: float = config.BATTERY_CAPACITY_MAH) -> pd.DataFrame:
    """Single-hop range and battery bit budget over 1, 2 and 3 hops per spreading factor."""
    spreading_factors = list(spreading_factors) if spreading_factors is not None else DEFAULT_SPREADING_FACTORS
    params = params if params is not None else LoRaParams()
    link = LinkParams.lora_preset()
    rx = ReceiverParams.lora_preset()
    rows = []
    for sf in spreading_factors:
        p = params.with_sf(sf)
        reach = lora_range(p, link, rx)
        rows.append((
            sf,
            reach,
            2 * reach,
            battery_bit_budget(lora_energy_per_bit(p), battery_mah),
            battery_bit_budget(lora_energy_per_bit_multihop(p, 2), battery_mah),
            battery_bit_budget(lora_energy_per_bit_multihop(p, 3), battery_mah),
        ))
    return _frame("sf_range_bits", rows)


def compression_tradeoff_table(trace: SensorTrace, y_values: Iterable[float]) -> pd.DataFrame:
    rows = tradeoff_sweep(trace, y_values)
    return _frame("compression_tradeoff", [tuple(r) for r in rows])


def lifetime_ladder_table(rows: Iterable[LadderRow]) -> pd.DataFrame:
    return _frame("lifetime_ladder", [tuple(r) for r in rows])


SWEEP_BUILDERS: Dict[str, Callable[..., pd.DataFrame]] = {
    "duty_cycle": duty_cycle_table,
    "ci_savings": ci_savings_table,
    "lifetime_vs_n": lifetime_vs_n_table,
    "sf_range_bits": sf_range_bits_table,
}


@log_performance("figure_sweep")
def build_sweep(key: str, **options: Any) -> pd.DataFrame:
    """Closed-form sweep for ``key``; the trace- and simulation-backed keys have their own builders."""
    builder = SWEEP_BUILDERS.get(key)
    if key not in FIGURE_SCHEMAS:
        raise InvalidParameterError(f"unknown figure key '{key}'; valid keys: {', '.join(sorted(FIGURE_SCHEMAS))}",
                                    param_name="figure", param_value=key)
    if builder is None:
        raise InvalidParameterError(f"figure '{key}' is built from a trace or a simulation, not a closed form",
                                    param_name="figure", param_value=key)
    table = builder(**options)
    logger.debug(f"{key}: {len(table)} rows")
    return table
