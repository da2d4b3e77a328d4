"""
Tests for utils.py - Unit conversions and range parsing
"""

import math

import pytest

from utils import (
    COULOMBS_PER_UAH,
    coulombs_to_uah,
    db_to_linear,
    dbm_to_watts,
    linear_to_db,
    mah_to_coulombs,
    parse_float_range,
    parse_int_range,
    seconds_to_days,
    uah_to_coulombs,
    watts_to_dbm,
    wavelength,
)


class TestDecibels:
    """Tests for dB and dBm conversions."""

    def test_db_to_linear_known_values(self):
        assert db_to_linear(0.0) == 1.0
        assert db_to_linear(10.0) == pytest.approx(10.0)
        assert db_to_linear(3.0) == pytest.approx(1.995, rel=1e-3)

    def test_linear_to_db_inverts(self):
        assert linear_to_db(db_to_linear(7.5)) == pytest.approx(7.5)

    def test_linear_to_db_rejects_non_positive(self):
        with pytest.raises(ValueError):
            linear_to_db(0.0)

    def test_dbm_to_watts(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0)
        assert dbm_to_watts(7.0) == pytest.approx(5.012e-3, rel=1e-3)

    def test_watts_to_dbm(self):
        assert watts_to_dbm(1e-3) == pytest.approx(0.0, abs=1e-12)


class TestChargeUnits:
    """Tests for charge conversions."""

    def test_mah_to_coulombs_coin_cell(self):
        assert mah_to_coulombs(230.0) == pytest.approx(828.0)

    def test_uah_round_trip(self):
        assert uah_to_coulombs(coulombs_to_uah(1.25)) == pytest.approx(1.25)
        assert COULOMBS_PER_UAH == pytest.approx(3.6e-3)

    def test_seconds_to_days(self):
        assert seconds_to_days(86_400.0 * 104) == pytest.approx(104.0)

    def test_wavelength_915mhz(self):
        assert wavelength(915e6) == pytest.approx(0.3276, rel=1e-3)


class TestParseFloatRange:
    """Tests for start:stop:step parsing."""

    def test_bare_number(self):
        assert parse_float_range("0.02") == [0.02]

    def test_inclusive_grid(self):
        values = parse_float_range("0.005:0.05:0.005")
        assert len(values) == 10
        assert values[0] == 0.005
        assert values[-1] == pytest.approx(0.05)

    def test_stop_off_grid_is_excluded(self):
        assert parse_float_range("1:2.5:1") == [1.0, 2.0]

    @pytest.mark.parametrize("spec", ["1:2", "1:0:1", "0:1:0", "0:1:-1"])
    def test_invalid_specs(self, spec):
        with pytest.raises(ValueError):
            parse_float_range(spec)

    def test_no_float_drift(self):
        values = parse_float_range("0.1:0.3:0.1")
        assert values == [0.1, 0.2, 0.3]
        assert all(not math.isnan(v) for v in values)


class TestParseIntRange:
    """Tests for integer range parsing."""

    def test_colon_range_is_inclusive(self):
        assert parse_int_range("1:20") == list(range(1, 21))

    def test_comma_list(self):
        assert parse_int_range("2,4,8") == [2, 4, 8]

    def test_single_value(self):
        assert parse_int_range("7") == [7]

    def test_descending_range_rejected(self):
        with pytest.raises(ValueError):
            parse_int_range("5:1")
