"""
Reusable validation utilities for the mesh energy simulator.

Validators return a ValidationResult; callers decide whether errors are
fatal. Warnings are for values the models accept but that lie outside the
ranges the source measurements cover.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

from exceptions import InvalidParameterError

VALID_CODE_RATE_DENOMINATORS = (5, 6, 7, 8)


@dataclass
class ValidationResult:
    """Result of a validation operation."""
    is_valid: bool = True
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    context: Dict[str, Any] = field(default_factory=dict)

    def add_error(self, message: str) -> None:
        """Add an error message to the result."""
        self.errors.append(message)
        self.is_valid = False

    def add_warning(self, message: str) -> None:
        """Add a warning message to the result."""
        self.warnings.append(message)

    def merge(self, other: "ValidationResult") -> "ValidationResult":
        """Fold another result into this one."""
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)
        self.is_valid = self.is_valid and other.is_valid
        return self


class BaseValidator:
    """Base class for all validators."""

    @staticmethod
    def validate_range(value: Union[int, float], min_val: Optional[float] = None,
                       max_val: Optional[float] = None, field_name: str = "field",
                       exclusive_min: bool = False) -> ValidationResult:
        """Validate that a numeric value is within the specified range."""
        result = ValidationResult(context={"field": field_name, "value": value})

        if not math.isfinite(value):
            result.add_error(f"{field_name} must be finite, got {value}")
            return result

        if min_val is not None:
            if exclusive_min and value <= min_val:
                result.add_error(f"{field_name} must be greater than {min_val}, got {value}")
            elif not exclusive_min and value < min_val:
                result.add_error(f"{field_name} must be at least {min_val}, got {value}")

        if max_val is not None and value > max_val:
            result.add_error(f"{field_name} must be at most {max_val}, got {value}")

        return result

    @staticmethod
    def validate_positive(value: Union[int, float], field_name: str = "field") -> ValidationResult:
        """Validate that a value is strictly positive."""
        return BaseValidator.validate_range(value, 0.0, None, field_name, exclusive_min=True)

    @staticmethod
    def validate_non_negative(value: Union[int, float], field_name: str = "field") -> ValidationResult:
        """Validate that a value is zero or positive."""
        return BaseValidator.validate_range(value, 0.0, None, field_name)

    @staticmethod
    def validate_flag(value: int, field_name: str = "field") -> ValidationResult:
        """Validate a 0/1 flag."""
        result = ValidationResult(context={"field": field_name})
        if value not in (0, 1):
            result.add_error(f"{field_name} must be 0 or 1, got {value}")
        return result


class RadioValidator(BaseValidator):
    """Validators for link, receiver and LoRa parameter sets."""

    @staticmethod
    def validate_link(carrier_frequency: float, distance: float, path_loss_exponent: float) -> ValidationResult:
        result = ValidationResult(context={"validator": "link"})
        result.merge(RadioValidator.validate_positive(carrier_frequency, "carrier_frequency"))
        result.merge(RadioValidator.validate_positive(distance, "distance"))
        result.merge(RadioValidator.validate_range(path_loss_exponent, 2.0, 4.0, "path_loss_exponent"))
        if result.is_valid and not 2.0 <= path_loss_exponent <= 3.0:
            result.add_warning(
                f"path_loss_exponent {path_loss_exponent} lies outside the typical range [2, 3]"
            )
        return result

    @staticmethod
    def validate_receiver(bandwidth: float, data_rate: float, tx_efficiency: float) -> ValidationResult:
        result = ValidationResult(context={"validator": "receiver"})
        result.merge(RadioValidator.validate_positive(bandwidth, "bandwidth"))
        result.merge(RadioValidator.validate_positive(data_rate, "data_rate"))
        result.merge(RadioValidator.validate_range(tx_efficiency, 0.0, 1.0, "tx_efficiency", exclusive_min=True))
        return result

    @staticmethod
    def validate_lora(spreading_factor: int, bandwidth: float, code_rate: float, header_flag: int,
                      low_data_rate_flag: int, payload_bytes: int, preamble_bytes: int) -> ValidationResult:
        result = ValidationResult(context={"validator": "lora"})
        if spreading_factor != int(spreading_factor) or not 7 <= spreading_factor <= 12:
            result.add_error(f"spreading_factor must be an integer in 7..12, got {spreading_factor}")
        result.merge(RadioValidator.validate_positive(bandwidth, "bandwidth"))
        result.merge(RadioValidator.validate_flag(header_flag, "header_flag"))
        result.merge(RadioValidator.validate_flag(low_data_rate_flag, "low_data_rate_flag"))
        if payload_bytes < 1:
            result.add_error(f"payload_bytes must be at least 1, got {payload_bytes}")
        if preamble_bytes < 0:
            result.add_error(f"preamble_bytes must be non-negative, got {preamble_bytes}")
        if code_rate <= 0 or round(4 / code_rate) not in VALID_CODE_RATE_DENOMINATORS \
                or abs(4 / code_rate - round(4 / code_rate)) > 1e-9:
            result.add_error(f"code_rate must be one of 4/5, 4/6, 4/7, 4/8, got {code_rate}")
        return result


class ThresholdValidator(BaseValidator):
    """Validators for the ISA thresholds."""

    @staticmethod
    def validate_thresholds(anomaly_x: float, compress_y: float) -> ValidationResult:
        result = ValidationResult(context={"validator": "thresholds"})
        result.merge(ThresholdValidator.validate_range(anomaly_x, 0.0, 1.0, "anomaly_x", exclusive_min=True))
        result.merge(ThresholdValidator.validate_range(compress_y, 0.0, 1.0, "compress_y", exclusive_min=True))
        if anomaly_x >= 1.0:
            result.add_error("anomaly_x must be below 1")
        if result.is_valid and compress_y > anomaly_x:
            result.add_warning(f"compress_y {compress_y} exceeds anomaly_x {anomaly_x}")
        return result


def raise_if_invalid(result: ValidationResult, logger: Any = None) -> None:
    """Raise InvalidParameterError on the first error; log warnings otherwise."""
    if logger is not None:
        for warning in result.warnings:
            logger.warning(warning)
    if not result.is_valid:
        first = result.errors[0]
        param_name = first.split(" ", 1)[0]
        raise InvalidParameterError("; ".join(result.errors), param_name=param_name)
