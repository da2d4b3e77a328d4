"""
Tests for scenario.py - scenario configuration, key = value files and presets
"""

import pytest

from exceptions import ConfigurationError
from scenario import (
    LADDER_RUNGS,
    EnergyProfile,
    ScenarioConfig,
    SimMode,
    UplinkPolicy,
    ladder_scenarios,
    list_presets,
    load_preset,
    load_scenario,
    parse_scenario_text,
    parse_value,
    scenario_to_text,
)


class TestEnergyProfile:

    def test_lora_event_charge(self):
        profile = EnergyProfile()
        expected = 72.5e-3 * 130e-3 + 12.5e-3 * 60e-3 + 12.4e-3 / 3.7
        assert profile.lora_event_charge == pytest.approx(expected)

    def test_leakage_presets(self):
        assert EnergyProfile.measured().leakage_current == pytest.approx(28e-6)
        assert EnergyProfile.lifetime_consistent().leakage_current == pytest.approx(83.3e-6)

    def test_compute_cost_by_mode(self):
        profile = EnergyProfile()
        assert profile.compute_cost(SimMode.ISA).duration == pytest.approx(130e-6)
        assert profile.compute_cost(SimMode.ISA_CI_CAS).current == pytest.approx(3.65e-3)
        assert profile.compute_cost(SimMode.LORA_EVERY_SECOND).charge == 0.0

    def test_negative_voltage_rejected(self):
        with pytest.raises(ConfigurationError):
            EnergyProfile(supply_voltage=0.0)


class TestScenarioConfig:

    def test_defaults(self):
        scenario = ScenarioConfig()
        assert scenario.mode is SimMode.ISA
        assert scenario.leakage_current == pytest.approx(83.3e-6)
        assert scenario.battery_coulombs == pytest.approx(828.0)
        assert scenario.hop_range == pytest.approx(1252, rel=0.01)

    def test_default_positions_on_a_line(self):
        assert ScenarioConfig(nodes=3, node_spacing_m=4.0).node_positions() == [(0.0, 0.0), (4.0, 0.0), (8.0, 0.0)]

    def test_explicit_leakage_wins(self):
        assert ScenarioConfig(leakage_current_a=1e-6).leakage_current == 1e-6

    @pytest.mark.parametrize("kwargs,key", [
        ({"nodes": 0}, "nodes"),
        ({"nodes": 300}, "nodes"),
        ({"duration_s": 0.0}, "duration_s"),
        ({"duty_period_s": 0.5}, "duty_period_s"),
        ({"leakage_preset": "cold"}, "leakage_preset"),
        ({"lora_cost_model": "guess"}, "lora_cost_model"),
        ({"nodes": 2, "positions": ((0.0, 0.0),)}, "positions"),
        ({"spreading_factor": 13}, "spreading_factor"),
        ({"anomaly_x": 0.0}, "anomaly_x"),
    ])
    def test_invalid_scenarios(self, kwargs, key):
        with pytest.raises(ConfigurationError) as exc_info:
            ScenarioConfig(**kwargs)
        assert exc_info.value.context["config_key"] == key


class TestScenarioText:

    def test_parse_values(self):
        values = parse_scenario_text(
            "# comment\n"
            "mode = isa_ci_cas\n"
            "nodes = 4   # trailing\n"
            "positions = 0:0; 5:0; 10:0; 15:0\n"
            "uplink_policy = every_event\n"
            "continuous_baseline = no\n"
            "leakage_current_a = none\n"
            "compress_y = 0.03\n"
        )
        assert values["mode"] is SimMode.ISA_CI_CAS
        assert values["nodes"] == 4
        assert values["positions"] == ((0.0, 0.0), (5.0, 0.0), (10.0, 0.0), (15.0, 0.0))
        assert values["uplink_policy"] is UplinkPolicy.EVERY_EVENT
        assert values["continuous_baseline"] is False
        assert values["leakage_current_a"] is None
        assert values["compress_y"] == 0.03

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError) as exc_info:
            parse_value("colour", "blue")
        assert exc_info.value.context["config_key"] == "colour"

    def test_bad_value(self):
        with pytest.raises(ConfigurationError):
            parse_value("nodes", "two")

    def test_missing_equals(self):
        with pytest.raises(ConfigurationError):
            parse_scenario_text("nodes 2\n")

    def test_round_trip(self, tmp_path):
        scenario = ScenarioConfig(mode=SimMode.ISA_CI, nodes=2, relay_positions=((500.0, 0.0),), seed=9)
        path = tmp_path / "s.conf"
        path.write_text(scenario_to_text(scenario))
        assert load_scenario(path) == scenario

    def test_relative_trace_path_resolves_next_to_file(self, tmp_path):
        path = tmp_path / "s.conf"
        path.write_text("trace_path = data/t.csv\n")
        assert load_scenario(path).trace_path == str(tmp_path / "data" / "t.csv")

    def test_overrides_apply_last(self, tmp_path):
        path = tmp_path / "s.conf"
        path.write_text("nodes = 2\n")
        assert load_scenario(path, {"nodes": 5}).nodes == 5


class TestPresets:

    def test_every_rung_has_a_preset(self):
        assert set(LADDER_RUNGS) <= set(list_presets())

    def test_ladder_order(self):
        scenarios = ladder_scenarios()
        assert [s.mode.value for s in scenarios] == LADDER_RUNGS
        assert all(s.leakage_preset == "lifetime_consistent" for s in scenarios)

    def test_isa_preset(self):
        scenario = load_preset("isa")
        assert scenario.nodes == 2
        assert scenario.heartbeat_s == 900.0
        assert scenario.anomaly_magnitude == pytest.approx(0.15)

    def test_overrides(self):
        assert load_preset("isa_ci_cas", {"duration_s": 86_400.0}).duration_s == 86_400.0

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            load_preset("fastest")

    def test_presets_dir_override(self, tmp_path, monkeypatch):
        (tmp_path / "tiny.conf").write_text("nodes = 3\n")
        monkeypatch.setenv("MESH_PRESETS_DIR", str(tmp_path))
        assert list(list_presets()) == ["tiny"]
        assert load_preset("tiny").nodes == 3
