"""
Tests for energy_core.py - closed-form energy and lifetime models
"""

import math

import pytest

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
    comm_to_compute_ratio,
    computation_energy,
    duty_cycle_energy,
    duty_cycle_lifetime,
    fspl,
    info_loss,
    landauer_limit,
    leakage_bound_lifetime,
    lora_airtime,
    lora_energy_per_bit,
    lora_energy_per_bit_multihop,
    lora_packet_bytes,
    lora_range,
    min_comm_energy,
    min_tx_power,
    multihop_benefit,
    multihop_power,
    network_lifetime_ci,
    network_lifetime_ci_cas,
    receiver_sensitivity,
    required_spreading_factor,
    switching_bits,
)
from exceptions import InvalidParameterError


class TestLimits:
    """Tests for the free-space and thermodynamic limits."""

    def test_landauer_at_room_temperature(self):
        assert landauer_limit() == pytest.approx(2.852e-21, rel=1e-3)

    def test_landauer_rejects_zero_kelvin(self):
        with pytest.raises(InvalidParameterError):
            landauer_limit(0.0)

    def test_fspl_at_one_meter(self):
        result = fspl(LinkParams(915e6, 1.0, 2.0))
        assert result.loss_db == pytest.approx(31.67, abs=0.02)

    def test_fspl_scales_with_exponent(self):
        near = fspl(LinkParams(915e6, 10.0, 2.0)).gain
        far = fspl(LinkParams(915e6, 20.0, 2.0)).gain
        assert near / far == pytest.approx(4.0)

    def test_link_rejects_zero_distance(self):
        with pytest.raises(InvalidParameterError):
            LinkParams(915e6, 0.0)

    def test_min_comm_energy_grows_with_distance(self):
        rx = ReceiverParams.lora_preset()
        link = LinkParams(915e6, 100.0, 2.0)
        ratio = min_comm_energy(link.with_distance(200.0), rx) / min_comm_energy(link, rx)
        assert ratio == pytest.approx(4.0)

    def test_min_tx_power_reaches_sensitivity(self):
        rx = ReceiverParams.lora_preset()
        link = LinkParams(915e6, 100.0, 2.0)
        assert min_tx_power(link, rx) * fspl(link).gain == pytest.approx(receiver_sensitivity(rx))

    def test_sensitivity_override(self):
        assert receiver_sensitivity(ReceiverParams.ble_preset()) == pytest.approx(1e-13)

    def test_computation_energy_linear(self):
        slope = config.COMPUTE_ENERGY_PER_BIT_SWITCH[45]
        assert computation_energy(400, slope) == pytest.approx(config.ISA_HDL_ENERGY_J)
        assert switching_bits(config.ISA_HDL_ENERGY_J, slope) == pytest.approx(400)

    def test_comm_to_compute_ratio(self):
        assert comm_to_compute_ratio(1e-9, 1e-15) == pytest.approx(1e6)
        with pytest.raises(InvalidParameterError):
            comm_to_compute_ratio(1e-9, 0.0)


class TestDutyCycle:
    """Tests for the no-storage duty-cycled node."""

    def test_energy_decreases_with_period(self):
        energies = [duty_cycle_energy(DutyCycleParams(period_N=n)) for n in (1, 10, 100, 1000)]
        assert energies == sorted(energies, reverse=True)

    def test_ratio_at_hundred_seconds(self):
        e1 = duty_cycle_energy(DutyCycleParams(period_N=1.0))
        e100 = duty_cycle_energy(DutyCycleParams(period_N=100.0))
        assert e1 / e100 == pytest.approx(49.8, rel=5e-3)

    def test_period_beyond_horizon_still_charges_leakage(self):
        p = DutyCycleParams(period_N=2 * 86_400.0)
        floor = p.horizon * p.compute_leak_current * p.supply_voltage
        assert duty_cycle_energy(p) > floor

    def test_period_below_one_rejected(self):
        with pytest.raises(InvalidParameterError):
            DutyCycleParams(period_N=0.5)

    def test_info_loss(self):
        assert info_loss(1.0) == 0.0
        assert info_loss(100.0) == pytest.approx(0.99)

    def test_info_loss_rejects_period_below_sample(self):
        with pytest.raises(InvalidParameterError):
            info_loss(0.5)

    def test_duty_cycle_lifetime_reduces_to_leakage_bound(self):
        bound = leakage_bound_lifetime()
        assert duty_cycle_lifetime(900.0, 0.0, config.LEAKAGE_LIFETIME_CONSISTENT_A) == pytest.approx(bound)

    def test_leakage_bound_days(self):
        assert leakage_bound_lifetime() / 86_400.0 == pytest.approx(115.0, rel=1e-3)


class TestCollaborativeIntelligence:
    """Tests for cluster savings and network lifetime."""

    def setup_method(self):
        self.base = CiEnergyParams.reference_preset()

    def test_single_node_saves_nothing_and_pays_overhead(self):
        assert ci_savings(self.base) < 0

    def test_savings_for_pair(self):
        p = self.base.with_cluster_size(2)
        expected = config.CI_E_LONG_RANGE_J - 2 * (config.CI_E_SHORT_RANGE_J
                                                   + config.CI_E_COMPUTE_PER_SECOND_J * 1800)
        assert ci_savings(p) == pytest.approx(expected)
        assert ci_savings(p) == pytest.approx(46.39e-3, rel=1e-3)

    def test_savings_grow_with_cluster_size(self):
        savings = [ci_savings(self.base.with_cluster_size(n)) for n in range(1, 21)]
        assert all(b > a for a, b in zip(savings, savings[1:]))

    def test_fixed_head_is_slightly_worse_than_baseline(self):
        p = self.base.with_cluster_size(4)
        ratio = network_lifetime_ci(p, 1800) / baseline_lifetime(p, 1800)
        assert ratio == pytest.approx(0.965, abs=1e-3)

    def test_rotating_head_pair(self):
        p = self.base.with_cluster_size(2)
        ratio = network_lifetime_ci_cas(p, 1800) / baseline_lifetime(p, 1800)
        assert ratio == pytest.approx(1.851, abs=1e-3)

    def test_rotating_head_scales_with_n(self):
        ratios = [network_lifetime_ci_cas(self.base.with_cluster_size(n), 1800) for n in (2, 4, 8)]
        assert ratios == sorted(ratios)

    def test_rejects_empty_cluster(self):
        with pytest.raises(InvalidParameterError):
            self.base.with_cluster_size(0)

    def test_battery_energy(self):
        assert self.base.battery_energy == pytest.approx(828.0 * 3.7)


class TestLoRaBudget:
    """Tests for the LoRa link budget and multihop model."""

    def setup_method(self):
        self.params = LoRaParams()
        self.link = LinkParams.lora_preset()
        self.rx = ReceiverParams.lora_preset()

    def test_packet_bytes_sf7(self):
        assert lora_packet_bytes(self.params) == pytest.approx(354.25)

    def test_packet_bytes_sf10(self):
        assert lora_packet_bytes(self.params.with_sf(10)) == pytest.approx(249.25)

    def test_single_byte_payload(self):
        p = LoRaParams(payload_bytes=1)
        numerator = 8 - 28 + 44
        assert lora_packet_bytes(p) == pytest.approx(8 + math.ceil(numerator / 7) * 1.25)

    def test_preamble_adds_bytes(self):
        with_preamble = LoRaParams(include_preamble_in_packet=True)
        assert lora_packet_bytes(with_preamble) == pytest.approx(354.25 + 8 + 4.25)

    def test_airtime_sf7(self):
        assert lora_airtime(self.params) == pytest.approx(354.25 * 128 / 125e3)

    def test_energy_per_bit_sf7(self):
        assert lora_energy_per_bit(self.params) == pytest.approx(18.02e-6, rel=1e-3)

    def test_range_grows_with_sf(self):
        ranges = [lora_range(self.params.with_sf(sf), self.link, self.rx) for sf in range(7, 13)]
        assert ranges == sorted(ranges)
        assert ranges[0] == pytest.approx(1252, rel=0.01)
        assert ranges[-1] == pytest.approx(4261, rel=0.01)

    def test_required_spreading_factor(self):
        assert required_spreading_factor(self.params, self.link, self.rx, 1000.0) == 7
        assert required_spreading_factor(self.params, self.link, self.rx, 2000.0) in range(8, 13)
        assert required_spreading_factor(self.params, self.link, self.rx, 50_000.0) is None

    def test_multihop_power(self):
        assert multihop_power(self.params, 1) == pytest.approx(95.4e-3)
        assert multihop_power(self.params, 3) == pytest.approx(3 * 95.4e-3 + 2 * 15.2e-3)
        with pytest.raises(InvalidParameterError):
            multihop_power(self.params, 0)

    def test_multihop_per_bit_equals_single_hop_for_one_hop(self):
        assert lora_energy_per_bit_multihop(self.params, 1) == pytest.approx(lora_energy_per_bit(self.params))

    def test_two_hops_at_sf7_beat_one_hop_at_sf10(self):
        assert multihop_benefit(10, 7, 2, self.params) == pytest.approx(2.6067, rel=1e-3)

    def test_benefit_rejects_single_hop(self):
        with pytest.raises(InvalidParameterError):
            multihop_benefit(10, 7, 1, self.params)

    def test_benefit_rejects_inverted_sf(self):
        with pytest.raises(InvalidParameterError):
            multihop_benefit(7, 10, 2, self.params)

    def test_bit_budget(self):
        per_bit = lora_energy_per_bit(self.params)
        assert battery_bit_budget(per_bit) == pytest.approx(828.0 * 3.7 / per_bit)
        with pytest.raises(InvalidParameterError):
            battery_bit_budget(0.0)

    @pytest.mark.parametrize("sf", [6, 13])
    def test_spreading_factor_out_of_range(self, sf):
        with pytest.raises(InvalidParameterError):
            LoRaParams(spreading_factor=sf)
