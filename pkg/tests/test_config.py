"""Tester for tem.config: scenariofiler, overstyringer og validering."""

from pathlib import Path

import numpy as np
import pytest

from tem.config import Scenario, apply_overrides, load_scenario, save_scenario
from tem.errors import ConfigError
from tem.fluid import saturation_pressure
from tem.model import P_IN, P_OUT, SOC, T_CAIR


SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class TestScenario:
    """Tester for Scenario."""

    def test_defaults(self):
        scenario = load_scenario()
        assert scenario.controller == "nmpc"
        assert scenario.horizon == 30
        assert scenario.ambient == pytest.approx(263.15)

    def test_initial_state_at_rest(self):
        x = Scenario(ambient=268.15, soc0=0.7).initial_state()
        assert x[T_CAIR] == pytest.approx(268.15)
        assert x[SOC] == pytest.approx(0.7)
        assert x[P_IN] == pytest.approx(float(saturation_pressure(268.15)))
        assert x[P_OUT] == pytest.approx(1.02 * x[P_IN])

    def test_unknown_controller(self):
        with pytest.raises(ConfigError):
            Scenario(controller="pid").validate()

    def test_nonpositive_duration(self):
        with pytest.raises(ConfigError):
            Scenario(duration=0.0).validate()

    def test_dt_not_multiple_of_substep(self):
        with pytest.raises(ConfigError):
            Scenario(dt=0.07).validate()

    def test_invalid_controller_setup(self):
        with pytest.raises(ConfigError):
            Scenario(horizon=1).validate()
        with pytest.raises(ConfigError):
            Scenario(state_noise=-0.1).validate()

    def test_metadata_in_celsius(self):
        meta = Scenario(ambient=263.15, setpoint=294.15).metadata()
        assert meta["ambient_c"] == pytest.approx(-10.0)
        assert meta["setpoint_c"] == pytest.approx(21.0)
        assert meta["cycle"] == "synthetic"

    def test_controller_config(self):
        cfg = Scenario(horizon=12, dt=0.5).controller_config()
        assert cfg.horizon == 12
        assert cfg.dt == 0.5

    def test_state_noise_reaches_controller(self):
        assert Scenario(state_noise=0.01).controller_config().state_noise == 0.01

    def test_weights_follow_setpoint(self):
        assert Scenario(setpoint=295.15).ocp_weights().t_ref == pytest.approx(295.15)


class TestLoadScenario:
    """Tester for load_scenario() og save_scenario()."""

    def test_shipped_scenarios(self):
        for name, ambient in (("cold10", 263.15), ("cold7", 266.15), ("cold5", 268.15)):
            scenario = load_scenario(SCENARIO_DIR / f"{name}.cfg")
            assert scenario.name == name
            assert scenario.ambient == pytest.approx(ambient)
            assert scenario.duration == 3600

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "finnes_ikke.cfg")

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("[scenario]\nname = x\n\n[ukjent]\na = 1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("[scenario]\ntemperatur = 5\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("[controller]\nhorizon = lang\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_sub_section(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("[solver]\nmax_iter = 40\n\n[weights]\nw_pwr = 0.002\n", encoding="utf-8")
        scenario = load_scenario(path)
        assert scenario.solver.max_iter == 40
        assert scenario.weights.w_pwr == pytest.approx(0.002)

    def test_relative_paths_resolved(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("[scenario]\ncycle = data/syklus.csv\n", encoding="utf-8")
        scenario = load_scenario(path)
        assert Path(scenario.cycle) == (tmp_path / "data" / "syklus.csv").resolve()

    def test_save_and_load(self, tmp_path):
        original = Scenario(name="lagret", ambient=270.15, horizon=8, duration=120.0, seed=3)
        loaded = load_scenario(save_scenario(original, tmp_path / "lagret.cfg"))
        assert loaded.name == "lagret"
        assert loaded.ambient == pytest.approx(270.15)
        assert loaded.horizon == 8
        assert loaded.seed == 3
        assert np.array_equal(loaded.bounds.u_max, original.bounds.u_max)
        assert loaded.baseline == original.baseline


class TestOverrides:
    """Tester for apply_overrides()."""

    def test_ambient_in_celsius(self):
        scenario = apply_overrides(Scenario(), {"ambient": -7.0, "horizon": 10, "seed": None})
        assert scenario.ambient == pytest.approx(266.15)
        assert scenario.horizon == 10
        assert scenario.seed == 0

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            apply_overrides(Scenario(), {"farge": "blå"})

    def test_overrides_validated(self):
        with pytest.raises(ConfigError):
            load_scenario(None, {"controller": "pid"})
