"""
Utility functions for the mesh energy simulator.
Unit conversions between decibels, watts, charge units and the
start:stop:step range strings accepted on the command line.
"""

import math
from typing import List

import numpy as np

from config import SPEED_OF_LIGHT

COULOMBS_PER_MAH = 3.6
COULOMBS_PER_UAH = 3.6e-3


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio in dB to a linear ratio."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """Convert a positive linear power ratio to dB."""
    if value <= 0:
        raise ValueError(f"cannot express non-positive ratio {value} in dB")
    return 10.0 * math.log10(value)


def dbm_to_watts(value_dbm: float) -> float:
    """Convert dBm to watts."""
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def watts_to_dbm(value_w: float) -> float:
    """Convert watts to dBm."""
    return linear_to_db(value_w) + 30.0


def wavelength(frequency_hz: float) -> float:
    """Free-space wavelength in meters."""
    return SPEED_OF_LIGHT / frequency_hz


def mah_to_coulombs(capacity_mah: float) -> float:
    """Battery capacity in mAh expressed as charge."""
    return capacity_mah * COULOMBS_PER_MAH


def coulombs_to_uah(charge: float) -> float:
    """Charge expressed in microampere-hours."""
    return charge / COULOMBS_PER_UAH


def uah_to_coulombs(charge_uah: float) -> float:
    """Microampere-hours expressed as charge."""
    return charge_uah * COULOMBS_PER_UAH


def seconds_to_days(seconds: float) -> float:
    """Convert seconds to days."""
    return seconds / 86_400.0


def parse_float_range(spec: str) -> List[float]:
    """
    Parse "start:stop:step" into an inclusive list of floats.

    A bare number yields a one-element list. The stop value is included when
    it lies on the grid (within a tenth of a step).
    """
    parts = spec.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"expected start:stop:step, got '{spec}'")
    start, stop, step = (float(p) for p in parts)
    if step <= 0:
        raise ValueError(f"step must be positive in '{spec}'")
    if stop < start:
        raise ValueError(f"stop must not be below start in '{spec}'")
    count = int(math.floor((stop - start) / step + 0.1)) + 1
    values = start + step * np.arange(count)
    return [float(round(v, 12)) for v in values]


def parse_int_range(spec: str) -> List[int]:
    """
    Parse "a:b" (inclusive) or "a,b,c" or a single integer.
    """
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 2:
            raise ValueError(f"expected start:stop, got '{spec}'")
        start, stop = int(parts[0]), int(parts[1])
        if stop < start:
            raise ValueError(f"stop must not be below start in '{spec}'")
        return list(range(start, stop + 1))
    return [int(p) for p in spec.split(",") if p.strip()]
