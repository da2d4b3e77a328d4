"""
Configuration module for the mesh energy simulator.
Contains physical constants, measured presets, environment overrides and
the logging setup used by the command line.
"""

import os
import logging
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# ==============================================================================
# LOGGING CONFIGURATION
# ==============================================================================

LOG_FILE = os.getenv("MESH_LOG_FILE", "mesh_energy.log")
LOG_LEVEL_CONSOLE = logging.INFO
LOG_LEVEL_FILE = logging.DEBUG

# JSON structured log output is opt-in
STRUCTURED_LOG_ENABLED = os.getenv("MESH_STRUCTURED_LOG", "0").lower() in ("1", "true", "yes")


def setup_logging(log_file: str = LOG_FILE, console_level: int = LOG_LEVEL_CONSOLE) -> logging.Logger:
    """Configure the logging system for the command-line application."""
    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)

    logger.handlers.clear()

    console_formatter = logging.Formatter("%(levelname)s - %(message)s")
    file_formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    console_handler = logging.StreamHandler()
    console_handler.setLevel(console_level)
    console_handler.setFormatter(console_formatter)

    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setLevel(LOG_LEVEL_FILE)
    file_handler.setFormatter(file_formatter)

    logger.addHandler(console_handler)
    logger.addHandler(file_handler)

    return logger


# ==============================================================================
# PATHS
# ==============================================================================

PROJECT_ROOT = Path(__file__).resolve().parent
FIXTURES_DIR = Path(os.getenv("MESH_FIXTURES_DIR", str(PROJECT_ROOT / "fixtures")))
PRESETS_DIR = Path(os.getenv("MESH_PRESETS_DIR", str(PROJECT_ROOT / "presets")))
DEFAULT_SEED = int(os.getenv("MESH_DEFAULT_SEED", "0"))

GOLDEN_FIG9_TRACE = "fig9_golden.csv"

# ==============================================================================
# PHYSICAL CONSTANTS
# ==============================================================================

BOLTZMANN = 1.380649e-23  # J/K
ROOM_TEMPERATURE_K = 298.0
SPEED_OF_LIGHT = 299_792_458.0  # m/s
SUPPLY_VOLTAGE = 3.7  # V
BATTERY_CAPACITY_MAH = 230.0
SECONDS_PER_DAY = 86_400.0

# ==============================================================================
# RADIO PRESETS
# ==============================================================================

# LoRa link used for the range, packet and energy-per-bit figures
LORA_CARRIER_HZ = 915e6
LORA_SPREADING_FACTOR = 7
LORA_BANDWIDTH_HZ = 125e3
LORA_CODE_RATE = 4 / 5
LORA_PREAMBLE_BYTES = 8
LORA_PAYLOAD_BYTES = 240
LORA_TX_POWER_DBM = 7.0
LORA_TX_CONSUMPTION_W = 95.4e-3
LORA_RX_CONSUMPTION_W = 15.2e-3
LORA_NOISE_FIGURE_DB = 3.5
LORA_REQUIRED_SNR_DB = 15.0
LORA_PATH_LOSS_EXPONENT = 2.83

# BLE link used for the minimum communication energy example
BLE_CARRIER_HZ = 2.45e9
BLE_ANTENNA_GAIN_DB = 2.0
BLE_SENSITIVITY_DBM = -100.0
BLE_DATA_RATE_BPS = 1e6
BLE_EVENT_DURATION_S = 12e-3
BLE_SLOT_S = 20e-3
BLE_MAX_NODES = 256
BLE_RANGE_M = 30.0

# Linear computation-energy slope per switching bit, by CMOS node (nm)
COMPUTE_ENERGY_PER_BIT_SWITCH = {45: 2e-15}
ISA_HDL_ENERGY_J = 800e-15

# ==============================================================================
# CLUSTERING AND CAS PRESETS
# ==============================================================================

CI_E_LONG_RANGE_J = 50e-3
CI_E_SHORT_RANGE_J = 359e-6
CI_E_COMPUTE_PER_SECOND_J = 804e-9
CI_CAS_E_COMPUTE_PER_SECOND_J = 916e-9
CI_CYCLE_PERIOD_S = 1800.0

MAX_CLUSTER_MEMBERS = 7
SIMILARITY_WINDOW_S = 900.0
SIMILARITY_TIME_TOLERANCE_S = 5.0
SIMILARITY_VALUE_TOLERANCE = 0.02

# ==============================================================================
# ISA THRESHOLDS
# ==============================================================================

DEFAULT_ANOMALY_X = 0.10
DEFAULT_COMPRESS_Y = 0.02
KMEANS_MAX_ITERATIONS = 100

# Full-scale values used when a reference value is exactly zero
CHANNEL_FULL_SCALE = {
    "temperature": 100.0,
    "humidity": 100.0,
    "nitrate": 1000.0,
}

# Baselines of the synthetic sources
CHANNEL_BASELINES = {
    "temperature": 20.0,
    "humidity": 55.0,
    "nitrate": 250.0,
}

# ==============================================================================
# DUTY-CYCLE PRESETS
# ==============================================================================

DUTY_BITS_PER_SAMPLE = 64
DUTY_DATA_RATE_BPS = 5470.0
DUTY_ON_CURRENT_A = 72.5e-3
DUTY_TRANSITION_S = 50e-3
DUTY_HORIZON_S = SECONDS_PER_DAY

# ==============================================================================
# SIMULATION PRESETS
# ==============================================================================

SAMPLE_PERIOD_S = 1.0
HEARTBEAT_PERIOD_S = 900.0
ANOMALY_CADENCE_S = 900.0
ANOMALY_MAGNITUDE = 0.15
LEAKAGE_MEASURED_A = 28e-6
LEAKAGE_LIFETIME_CONSISTENT_A = 83.3e-6
LORA_EVENT_OVERHEAD_J = 12.4e-3
LADDER_DURATION_S = 200 * SECONDS_PER_DAY

# ==============================================================================
# REPORT CONFIGURATION
# ==============================================================================

OUTPUT_EVENTS_REPORT = "events.csv"
OUTPUT_SUMMARY_REPORT = "summary.csv"
OUTPUT_LADDER_REPORT = "lifetime_ladder.csv"
EVENTS_SCHEMA_VERSION = "mesh-events/1"
SUMMARY_SCHEMA_VERSION = "mesh-summary/1"

CSV_VALUE_FORMAT = "%.6g"
CSV_TIME_FORMAT = "%.12g"


class SimulationRules:
    """Consistency rules between the presets above."""

    ANOMALY_X = DEFAULT_ANOMALY_X
    COMPRESS_Y = DEFAULT_COMPRESS_Y
    BLE_SLOT = BLE_SLOT_S
    BLE_EVENT = BLE_EVENT_DURATION_S
    MAX_MEMBERS = MAX_CLUSTER_MEMBERS
    HEARTBEAT = HEARTBEAT_PERIOD_S
    SAMPLE_PERIOD = SAMPLE_PERIOD_S

    @classmethod
    def validate_thresholds(cls) -> None:
        """Validate that the ISA thresholds are ordered."""
        if not 0 < cls.COMPRESS_Y < 1:
            raise ValueError("COMPRESS_Y must be within (0, 1)")
        if not 0 < cls.ANOMALY_X < 1:
            raise ValueError("ANOMALY_X must be within (0, 1)")
        if cls.COMPRESS_Y > cls.ANOMALY_X:
            raise ValueError("COMPRESS_Y must not exceed ANOMALY_X")

    @classmethod
    def validate_time_multiplexing(cls) -> None:
        """BLE slots must leave a guard after every broadcast event."""
        if cls.BLE_SLOT <= cls.BLE_EVENT:
            raise ValueError("BLE_SLOT must be longer than one BLE event")
        if cls.MAX_MEMBERS < 1:
            raise ValueError("MAX_MEMBERS must be at least 1")

    @classmethod
    def validate_cadence(cls) -> None:
        """The heartbeat must be a whole number of sampling periods."""
        if cls.SAMPLE_PERIOD <= 0:
            raise ValueError("SAMPLE_PERIOD must be positive")
        ratio = cls.HEARTBEAT / cls.SAMPLE_PERIOD
        if cls.HEARTBEAT > 0 and abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("HEARTBEAT must be a multiple of SAMPLE_PERIOD")

    @classmethod
    def validate_all(cls) -> None:
        """Validate all preset rules."""
        cls.validate_thresholds()
        cls.validate_time_multiplexing()
        cls.validate_cadence()
