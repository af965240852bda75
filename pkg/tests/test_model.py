"""Tester for tem.model: delmodeller og den samlede kontrollorienterte modellen."""

from dataclasses import replace

import numpy as np
import pytest

from tem.errors import OutOfRangeError, ZeroFlowError
from tem.fluid import StreamProps, coolant_air_props
from tem.model import (
    MDOT_BL, NX, OMEGA_COMP, POWER_NAMES, Q_HT, SOC, T_AMB, T_CAIR, T_INT, HxHeats, ModeFlags,
    battery_heat, battery_resistance, blower_power, cabin_dots, capacitances, check_state,
    component_cooling, component_temp_dot, compressor, dittus_boelter, effectiveness, evaluate,
    fan_power_airflow, heater_outlet, hx_transfer, power_breakdown, pressure_dot, pump_flow_power, rhs,
    soc_dot, total_power, total_resistance,
)
from tem.params import default_gamma


WATER = StreamProps(rho=1000.0, cp=4186.0, mu=1e-3, k=0.6)


class TestModeFlags:
    """Tester for ModeFlags."""

    def test_defaults_are_heat_pump_series(self):
        flags = ModeFlags()
        assert flags.as_tuple() == (1, 1, 0, 0, 0, 1)

    def test_heat_pump_excludes_evaporator(self):
        with pytest.raises(OutOfRangeError):
            ModeFlags(delta_ev=1)

    def test_window_follows_heat_pump(self):
        with pytest.raises(OutOfRangeError):
            ModeFlags(delta_hpm=0, delta_w=1)

    def test_binary_only(self):
        with pytest.raises(OutOfRangeError):
            ModeFlags(delta_rb=2)


class TestCorrelations:
    """Tester for varmeovergangskorrelasjonene."""

    def test_effectiveness_at_unit_ntu(self):
        assert effectiveness(1.0) == pytest.approx(0.63212, abs=1e-5)

    def test_dittus_boelter(self):
        assert dittus_boelter(1e4, 1.0) == pytest.approx(36.452, abs=1e-3)


class TestBattery:
    """Tester for batterimodellen."""

    def test_resistance_polynomial(self, params):
        # R_b = 0.05 + 1e-4 (T − 298)² − 0.02 SOC + 0.02 SOC²
        assert battery_resistance(298.0, 0.5, params) == pytest.approx(0.045, abs=1e-9)

    def test_no_current_no_heat(self, params):
        assert battery_heat(0.0, 290.0, 0.5, params) == 0.0

    def test_heat_quadratic_in_current(self, params):
        q1 = battery_heat(10.0, 290.0, 0.5, params)
        q2 = battery_heat(20.0, 290.0, 0.5, params)
        assert q2 == pytest.approx(4 * q1)

    def test_soc_decreases_on_discharge(self, params):
        assert soc_dot(100.0, params) == pytest.approx(-100.0 / params.battery.c_nom)
        assert soc_dot(-50.0, params) > 0


class TestActuators:
    """Tester for pumper, vifter og varmeelement."""

    def test_pump_power_cubic_in_speed(self, params):
        m1, p1 = pump_flow_power(1000.0, "mot", params, WATER)
        m2, p2 = pump_flow_power(2000.0, "mot", params, WATER)
        assert m2 == pytest.approx(2 * m1)
        assert p2 == pytest.approx(8 * p1)

    def test_fan_at_reference_speed(self, params):
        power, _ = fan_power_airflow(params.fan.omega_ref, 0.0, params)
        assert power == pytest.approx(params.fan.p_nom / params.fan.eta)

    def test_ram_air_without_fan(self, params):
        _, mdot = fan_power_airflow(0.0, 20.0, params)
        assert mdot == pytest.approx(params.fan.alpha_ram * 20.0)

    def test_blower_at_reference_flow(self, params):
        assert blower_power(params.blower.mdot_ref, params) == pytest.approx(params.blower.p_nom)

    def test_heater_unit_rise(self, params):
        ideal = replace(params, heater=replace(params.heater, eta=1.0, alpha=1.0))
        assert heater_outlet(300.0, 4186.0, 1.0, 4186.0, ideal) == pytest.approx(301.0)

    def test_heater_without_flow_raises(self, params):
        with pytest.raises(ZeroFlowError):
            heater_outlet(300.0, 1000.0, 0.0, 4186.0, params)

    def test_heater_without_flow_smooth(self, params):
        out = heater_outlet(300.0, 1000.0, 0.0, 4186.0, params, smooth=True)
        assert np.isfinite(out) and out > 300.0

    def test_heater_off_without_flow(self, params):
        assert heater_outlet(300.0, 0.0, 0.0, 4186.0, params) == pytest.approx(300.0)


class TestHeatExchanger:
    """Tester for hx_transfer()."""

    def test_energy_balance(self, params):
        coolant, air = coolant_air_props(290.0)
        res = hx_transfer(320.0, 270.0, 0.2, 0.5, (coolant, air), params.hx_rad)
        assert res.Q > 0
        assert 0 < res.eps < 1
        assert res.Q == pytest.approx(0.2 * coolant.cp * (320.0 - res.hot_out))
        assert res.Q == pytest.approx(0.5 * air.cp * (res.cold_out - 270.0))
        assert not res.zero_flow

    def test_zero_flow(self, params):
        coolant, air = coolant_air_props(290.0)
        res = hx_transfer(320.0, 270.0, 0.0, 0.5, (coolant, air), params.hx_rad)
        assert res.Q == 0.0
        assert res.hot_out == pytest.approx(320.0)
        assert res.cold_out == pytest.approx(270.0)
        assert res.zero_flow

    def test_no_gradient_no_heat(self, params):
        coolant, air = coolant_air_props(290.0)
        res = hx_transfer(290.0, 290.0, 0.2, 0.5, (coolant, air), params.hx_rad)
        assert res.Q == pytest.approx(0.0)


class TestCompressor:
    """Tester for compressor()."""

    def test_stopped(self, params, cold_theta):
        mdot, _, power, _ = compressor(0.0, cold_theta, params)
        assert mdot == 0.0
        assert power == 0.0

    def test_running(self, params, cold_theta):
        mdot, h2, power, T_out = compressor(4000.0, cold_theta, params)
        assert mdot > 0
        assert h2 > cold_theta.h1
        assert power > 0
        assert T_out > cold_theta.T_sat_hp

    def test_capacitances_nonzero(self, params, cold_theta):
        g_ab, g_rj = capacitances(cold_theta, params)
        assert np.isfinite(g_ab) and abs(g_ab) > 0
        assert np.isfinite(g_rj) and abs(g_rj) > 0


class TestComponentTemperature:
    """Tester for component_temp_dot()."""

    def test_equilibrium(self, params):
        conv, cond, _ = component_cooling("mot", 320.0, 300.0, 0.1, params, WATER)
        dT = component_temp_dot("mot", 320.0, 300.0, 0.1, conv + cond, 1.0, params, WATER)
        assert dT == pytest.approx(0.0, abs=1e-12)

    def test_no_gradient_only_generation(self, params):
        dT = component_temp_dot("inv", 300.0, 300.0, 0.1, 450.0, 1.0, params, WATER)
        assert dT == pytest.approx(450.0 / (params.inverter.mass * params.inverter.cp))

    def test_gamma_scales_linearly(self, params):
        one = component_temp_dot("b", 300.0, 290.0, 0.1, 200.0, 1.0, params, WATER)
        two = component_temp_dot("b", 300.0, 290.0, 0.1, 200.0, 2.0, params, WATER)
        assert two == pytest.approx(2.0 * one)


class TestPressureDot:
    """Tester for pressure_dot()."""

    def test_quiescent_loop(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        u[OMEGA_COMP] = 0.0
        dp_in, dp_out = pressure_dot(x, u, d, ModeFlags(), default_gamma(), cold_theta, params, HxHeats())
        assert dp_in == pytest.approx(0.0, abs=1e-12)
        assert dp_out == pytest.approx(0.0, abs=1e-12)

    def test_heat_pump_masks_evaporator_and_chiller(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        u[OMEGA_COMP] = 0.0
        gamma = default_gamma()
        only_ce = pressure_dot(x, u, d, ModeFlags(), gamma, cold_theta, params, HxHeats(Q_ce=100.0))
        masked = pressure_dot(x, u, d, ModeFlags(), gamma, cold_theta, params,
                              HxHeats(Q_ce=100.0, Q_hx=50.0, Q_ev=1e4, Q_ch=1e4))
        assert masked[0] == pytest.approx(only_ce[0])
        recovery = pressure_dot(x, u, d, ModeFlags(delta_rb=1), gamma, cold_theta, params,
                                HxHeats(Q_ce=100.0, Q_hx=50.0, Q_ev=1e4, Q_ch=1e4))
        g_ab, _ = capacitances(cold_theta, params)
        assert recovery[0] == pytest.approx(gamma[5] * 150.0 / g_ab)

    def test_sign_follows_capacitance(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        u[OMEGA_COMP] = 0.0
        dp_in, _ = pressure_dot(x, u, d, ModeFlags(), default_gamma(), cold_theta, params, HxHeats(Q_ce=100.0))
        g_ab, _ = capacitances(cold_theta, params)
        assert np.sign(dp_in) == np.sign(g_ab)


class TestCabin:
    """Tester for kabinmodellen."""

    def test_equilibrium_only_occupant_heat(self, params, cold_point):
        x, u, d = cold_point
        x[T_INT] = x[T_CAIR] = d[T_AMB]
        u[MDOT_BL] = 0.0
        dT_int, dT_cair = cabin_dots(x, u, d, default_gamma(), params, Q_ic=0.0)
        assert dT_int == pytest.approx(0.0, abs=1e-12)
        assert dT_cair == pytest.approx(params.cabin.q_human / params.cabin.c_air)

    def test_envelope_resistance_positive(self, params):
        assert total_resistance(params) > 0

    def test_heating_raises_cabin_temperature(self, params, cold_point):
        x, u, d = cold_point
        _, cold = cabin_dots(x, u, d, default_gamma(), params, Q_ic=0.0)
        _, warm = cabin_dots(x, u, d, default_gamma(), params, Q_ic=2000.0)
        assert warm > cold


class TestFullModel:
    """Tester for evaluate(), rhs() og effektsummen."""

    def test_rhs_finite(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        xdot = rhs(x, u, d, ModeFlags(), default_gamma(), cold_theta, params)
        assert xdot.shape == (NX,)
        assert np.all(np.isfinite(xdot))

    def test_soc_derivative_matches_coulomb_counting(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        xdot = rhs(x, u, d, ModeFlags(), default_gamma(), cold_theta, params)
        assert xdot[SOC] == pytest.approx(soc_dot(d[2], params))

    def test_gamma_4_scales_soc_derivative(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        gamma = default_gamma()
        gamma[3] = 0.9
        xdot = rhs(x, u, d, ModeFlags(), gamma, cold_theta, params)
        assert xdot[SOC] == pytest.approx(0.9 * soc_dot(d[2], params))
        assert xdot[SOC] == pytest.approx(soc_dot(d[2], params, 0.9))

    def test_parallel_mode(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        flags = ModeFlags(delta_hpm=0, delta_ps=0, delta_rb=0, delta_ev=1, delta_ch=1, delta_w=0)
        xdot = rhs(x, u, d, flags, default_gamma(), cold_theta, params)
        assert np.all(np.isfinite(xdot))

    def test_smooth_matches_simulation_with_flow(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        sim = rhs(x, u, d, ModeFlags(), default_gamma(), cold_theta, params, smooth=False)
        opt = rhs(x, u, d, ModeFlags(), default_gamma(), cold_theta, params, smooth=True)
        assert opt == pytest.approx(sim, rel=1e-3, abs=1e-6)

    def test_powers_reported(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        out = evaluate(x, u, d, ModeFlags(), default_gamma(), cold_theta, params)
        assert set(out.powers) == set(POWER_NAMES)
        assert out.powers["Q_ht"] == u[Q_HT]

    def test_total_power_zero_input(self, params, cold_point, cold_theta):
        x, _, _ = cold_point
        assert total_power(x, np.zeros(6), cold_theta, params) == pytest.approx(0.0, abs=1e-12)

    def test_total_power_heater_only(self, params, cold_point, cold_theta):
        x, _, _ = cold_point
        u = np.zeros(6)
        u[Q_HT] = 500.0
        assert total_power(x, u, cold_theta, params) == pytest.approx(500.0)

    def test_total_power_is_sum(self, params, cold_point, cold_theta):
        x, u, _ = cold_point
        parts = power_breakdown(x, u, cold_theta, params)
        assert total_power(x, u, cold_theta, params) == pytest.approx(sum(parts.values()))
        assert parts["P_comp"] > 0
        assert u[OMEGA_COMP] > 0


class TestCheckState:
    """Tester for check_state()."""

    def test_valid(self, cold_point):
        check_state(cold_point[0])

    def test_soc_out_of_range(self, cold_point):
        x = cold_point[0]
        x[SOC] = 1.2
        with pytest.raises(OutOfRangeError):
            check_state(x)

    def test_inverted_pressures(self, cold_point):
        x = cold_point[0]
        x[5], x[6] = x[6], x[5]
        with pytest.raises(OutOfRangeError):
            check_state(x)
