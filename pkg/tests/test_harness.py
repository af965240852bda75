"""Tester for tem.harness: tvilling, referansekontroller, kjøringer og metrikker."""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from tem.config import BaselineConfig, TwinConfig
from tem.database import list_runs
from tem.errors import ScenarioMismatchError
from tem.harness import (
    TIMESERIES_COLUMNS, BaselineState, PlantTwin, RunResult, baseline_controller, comfort_metrics,
    compare, plant_twin_step, run, trapezoid_energy_wh, validate, violation_ledger,
)
from tem.model import (
    DISTURBANCE_NAMES, INPUT_NAMES, MDOT_BL, OMEGA_COMP, OMEGA_FAN, Q_HT, STATE_NAMES, T_CAIR, T_MOT,
    ModeFlags,
)
from tem.ocp import Bounds
from tests.conftest import COLD_DISTURBANCE, COLD_INPUT, COLD_STATE, short_scenario


SETPOINT = 294.15


class TestEnergyAndComfort:
    """Tester for trapezoid_energy_wh() og comfort_metrics()."""

    def test_constant_power_one_hour(self):
        assert trapezoid_energy_wh([1000.0, 1000.0], 3600.0) == pytest.approx(1000.0)

    def test_ramp(self):
        assert trapezoid_energy_wh([0.0, 3600.0], 1.0) == pytest.approx(0.5)

    def test_single_sample(self):
        assert trapezoid_energy_wh([500.0], 1.0) == 0.0

    def test_setpoint_never_reached(self):
        out = comfort_metrics([0, 1, 2], [280.0, 281.0, 282.0], SETPOINT)
        assert np.isnan(out["time_to_setpoint_s"])
        assert out["comfort_fraction"] == 0.0
        assert out["comfort_violations"] == 0

    def test_setpoint_reached(self):
        out = comfort_metrics([0, 1, 2, 3, 4], [290.0, 293.5, 294.0, 296.0, 294.5], SETPOINT)
        assert out["time_to_setpoint_s"] == 1.0
        assert out["comfort_fraction"] == pytest.approx(2.0 / 3.0)
        assert out["comfort_violations"] == 1


class TestBaselineController:
    """Tester for baseline_controller()."""

    def _x(self, T_cair=285.0, T_mot=300.0):
        x = COLD_STATE.copy()
        x[T_CAIR] = T_cair
        x[T_MOT] = T_mot
        return x

    def test_cold_cabin_full_heating(self):
        u, state = baseline_controller(self._x(), COLD_DISTURBANCE, BaselineConfig(), SETPOINT)
        assert u[Q_HT] == 6000.0
        assert state.heater_on
        assert u[OMEGA_COMP] == pytest.approx(6000.0)
        assert u[MDOT_BL] == pytest.approx(0.15)
        assert u[OMEGA_FAN] == 0.0

    def test_heater_hysteresis(self):
        cfg = BaselineConfig()
        inside = self._x(T_cair=SETPOINT)
        u, _ = baseline_controller(inside, COLD_DISTURBANCE, cfg, SETPOINT, BaselineState(heater_on=True))
        assert u[Q_HT] == 6000.0
        u, _ = baseline_controller(inside, COLD_DISTURBANCE, cfg, SETPOINT, BaselineState(heater_on=False))
        assert u[Q_HT] == 0.0

    def test_compressor_off_when_warm(self):
        u, state = baseline_controller(self._x(T_cair=SETPOINT + 3.0), COLD_DISTURBANCE, BaselineConfig(),
                                       SETPOINT)
        assert u[OMEGA_COMP] == 0.0
        assert not state.comp_on

    def test_compressor_speed_interpolated(self):
        d = COLD_DISTURBANCE.copy()
        d[0] = 270.65
        u, _ = baseline_controller(self._x(), d, BaselineConfig(), SETPOINT)
        assert u[OMEGA_COMP] == pytest.approx(4500.0)
        assert u[MDOT_BL] == pytest.approx(0.12)

    def test_fan_stages(self):
        u, _ = baseline_controller(self._x(T_mot=320.0), COLD_DISTURBANCE, BaselineConfig(), SETPOINT)
        assert u[OMEGA_FAN] == 1500.0
        u, _ = baseline_controller(self._x(T_mot=330.0), COLD_DISTURBANCE, BaselineConfig(), SETPOINT)
        assert u[OMEGA_FAN] == 3000.0


class TestViolationLedger:
    """Tester for violation_ledger()."""

    @staticmethod
    def _frame(x, u):
        row = {"t_s": 0.0}
        row.update(zip(STATE_NAMES, x))
        row.update(zip(INPUT_NAMES, u))
        row.update(zip(DISTURBANCE_NAMES, COLD_DISTURBANCE))
        return pd.DataFrame([row])

    def test_soft_violation_of_cabin_band(self):
        ledger = violation_ledger(self._frame(COLD_STATE, COLD_INPUT), Bounds())
        assert list(ledger.columns) == ["t_s", "kind", "variable", "bound", "value", "limit", "amount"]
        soft = ledger[ledger["kind"] == "soft"]
        assert list(soft["variable"]) == ["T_cair"]
        assert soft["amount"].iloc[0] == pytest.approx(292.65 - 288.0)
        assert not (ledger["kind"] == "hard").any()

    def test_hard_input_violation(self):
        u = COLD_INPUT.copy()
        u[Q_HT] = 7000.0
        ledger = violation_ledger(self._frame(COLD_STATE, u), Bounds())
        hard = ledger[ledger["kind"] == "hard"]
        assert list(hard["variable"]) == ["Q_ht"]
        assert hard["bound"].iloc[0] == "max"


class TestPlantTwin:
    """Tester for PlantTwin."""

    def test_substeps(self, params):
        twin = PlantTwin(params)
        assert twin.substeps(1.0) == 20
        with pytest.raises(ValueError):
            twin.substeps(0.07)

    def test_nominal_without_perturbation(self, params):
        assert PlantTwin(params, TwinConfig(rel=0.0)).params == params

    def test_seeded_perturbation(self, params):
        assert PlantTwin(params, seed=1).params == PlantTwin(params, seed=1).params
        assert PlantTwin(params, seed=1).params != PlantTwin(params, seed=2).params

    def test_step_finite(self, params):
        twin = PlantTwin(params)
        x = twin.step(COLD_STATE, COLD_INPUT, COLD_DISTURBANCE, ModeFlags(), 1.0)
        assert np.all(np.isfinite(x))

    def test_step_function_matches_method(self, params):
        twin = PlantTwin(params, seed=3)
        a = plant_twin_step(twin, COLD_STATE, COLD_INPUT, COLD_DISTURBANCE, ModeFlags(), 1.0)
        assert np.array_equal(a, twin.step(COLD_STATE, COLD_INPUT, COLD_DISTURBANCE, ModeFlags(), 1.0))

    def test_perturbation_changes_trajectory(self, params):
        nominal = PlantTwin(params, TwinConfig(rel=0.0))
        perturbed = PlantTwin(params, seed=1)
        a = nominal.step(COLD_STATE, COLD_INPUT, COLD_DISTURBANCE, ModeFlags(), 1.0)
        b = perturbed.step(COLD_STATE, COLD_INPUT, COLD_DISTURBANCE, ModeFlags(), 1.0)
        assert not np.allclose(a, b, rtol=0.0, atol=1e-9)


class TestRun:
    """Tester for run() og RunResult."""

    def test_artifacts(self, baseline_run_dir):
        for name in ("timeseries.csv", "metrics.csv", "violations.csv", "timing.csv", "run.cfg"):
            assert (baseline_run_dir / name).exists()

    def test_loaded_result(self, baseline_run_dir):
        result = RunResult.load(baseline_run_dir)
        assert list(result.timeseries.columns) == TIMESERIES_COLUMNS
        assert len(result.timeseries) == 10
        assert result.metrics["steps"] == 10
        assert result.energy_wh > 0
        assert result.metrics["hard_violations"] == 0
        assert result.scenario.controller == "baseline"
        assert (result.timeseries["solver_status"] == "baseline").all()

    def test_energy_matches_power_column(self, baseline_run_dir):
        result = RunResult.load(baseline_run_dir)
        expected = trapezoid_energy_wh(result.timeseries["P_TEM_W"], result.scenario.dt)
        assert result.energy_wh == pytest.approx(expected)

    def test_deterministic(self):
        a = run(short_scenario(duration=4.0))
        b = run(short_scenario(duration=4.0))
        pd.testing.assert_frame_equal(a.timeseries, b.timeseries)

    def test_registered_in_database(self, tmp_path):
        db_path = tmp_path / "runs.db"
        run(short_scenario(duration=3.0), tmp_path / "run", db_path=db_path)
        runs = list_runs(db_path)
        assert len(runs) == 1
        assert runs[0]["controller"] == "baseline"
        assert runs[0]["ambient_c"] == pytest.approx(-10.0)

    def test_short_nmpc_run(self, params):
        result = run(short_scenario(controller="nmpc", duration=3.0, horizon=5), params=params)
        ts = result.timeseries
        assert len(ts) == 3
        bounds = result.scenario.bounds
        U = ts[list(INPUT_NAMES)].to_numpy()
        assert np.all(U >= bounds.u_min - 1e-9) and np.all(U <= bounds.u_max + 1e-9)
        assert len(result.timing) == 3


class TestCompare:
    """Tester for compare()."""

    def test_same_run_no_reduction(self, baseline_run_dir):
        a = RunResult.load(baseline_run_dir)
        report = compare(a, a)
        assert report.reduction("energy_wh") == pytest.approx(0.0)
        assert list(report.rows.columns) == ["metric", "a", "b", "delta", "reduction_pct"]
        assert report.metadata["controller_b"] == "baseline"

    def test_reduction_percent(self, baseline_run_dir):
        a = RunResult.load(baseline_run_dir)
        b = replace(a, metrics=dict(a.metrics, energy_wh=0.75 * a.energy_wh))
        assert compare(a, b).reduction("energy_wh") == pytest.approx(25.0)

    def test_mismatched_scenarios(self, baseline_run_dir):
        a = RunResult.load(baseline_run_dir)
        b = replace(a, scenario=replace(a.scenario, ambient=268.15))
        with pytest.raises(ScenarioMismatchError):
            compare(a, b)

    def test_save(self, baseline_run_dir, tmp_path):
        a = RunResult.load(baseline_run_dir)
        path = compare(a, a).save(tmp_path / "compare.csv")
        assert len(pd.read_csv(path)) == len(compare(a, a).rows)


def test_validate_against_reference(params, baseline_run_dir):
    reference = RunResult.load(baseline_run_dir)
    out = validate(reference.scenario, reference=reference, params=params)
    assert list(out["state"]) == ["T_mot", "T_inv", "T_dcdc", "T_b", "T_int", "T_cair"]
    assert np.all(out["rmse_K"] >= out["mae_K"] - 1e-12)
    assert np.all(np.isfinite(out["rmse_K"]))
