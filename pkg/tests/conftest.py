"""
Shared fixtures for the simulator test suite.
"""

import os
import sys

import numpy as np
import pytest

# Add the repository root to the path so tests import the flat modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import trace_io  # noqa: E402
from isa_codec import Channel, SensorTrace  # noqa: E402
from scenario import ScenarioConfig, SimMode  # noqa: E402


@pytest.fixture
def golden_trace() -> SensorTrace:
    """The committed noise-free temperature excursion (100 samples at 1 s)."""
    return trace_io.load_golden()


@pytest.fixture
def constant_trace() -> SensorTrace:
    return SensorTrace.from_values(Channel.TEMPERATURE, [20.0] * 50)


@pytest.fixture
def step_trace() -> SensorTrace:
    """20 for ten samples, then 23 for ten samples."""
    return SensorTrace.from_values(Channel.TEMPERATURE, [20.0] * 10 + [23.0] * 10)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_battery_scenario() -> ScenarioConfig:
    """A short-lived ISA scenario: 1 mAh battery, two nodes 5 m apart."""
    return ScenarioConfig(mode=SimMode.ISA, nodes=2, battery_mah=1.0, duration_s=30 * 86_400.0)
