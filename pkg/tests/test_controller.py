"""Tester for tem.controller: parameterplan og kontrollsteg."""

import numpy as np
import pytest

from tem.controller import (
    ControllerConfig, ControllerContext, control_step, initial_state, measured_state, schedule_gamma,
)
from tem.errors import DimensionMismatchError, EmptyMapError
from tem.ident import Anchor, GammaMap
from tem.model import NU
from tem.nlp import SolverOptions
from tem.ocp import STATE_SCALE, Bounds, OcpWeights
from tem.params import N_GAMMA


HORIZON = 5


def _context(params, **cfg) -> ControllerContext:
    return ControllerContext(params=params, bounds=Bounds(), weights=OcpWeights(),
                             cfg=ControllerConfig(horizon=HORIZON, **cfg))


def _preview(d) -> np.ndarray:
    return np.repeat(np.asarray(d)[:, None], HORIZON, axis=1)


class TestInitialState:
    """Tester for initial_state()."""

    def test_starts_at_lower_bound(self):
        bounds = Bounds()
        state = initial_state(bounds)
        assert np.array_equal(state.u_prev, bounds.u_min)
        assert state.step == 0
        assert state.solution is None

    def test_given_input_clipped(self):
        bounds = Bounds()
        state = initial_state(bounds, np.full(NU, 1e9))
        assert np.array_equal(state.u_prev, bounds.u_max)


class TestMeasuredState:
    """Tester for measured_state()."""

    def test_no_noise_returns_state(self, cold_point):
        x = cold_point[0]
        out = measured_state(x, ControllerConfig(), np.random.default_rng(0))
        assert np.array_equal(out, x)

    def test_noise_changes_estimate(self, cold_point):
        x = cold_point[0]
        out = measured_state(x, ControllerConfig(state_noise=0.01), np.random.default_rng(0))
        assert np.all(out != x)
        # avvik i skalerte enheter, samme størrelsesorden som std
        assert np.all(np.abs(out - x) / STATE_SCALE < 0.1)

    def test_seeded(self, cold_point):
        x = cold_point[0]
        cfg = ControllerConfig(state_noise=0.01)
        a = measured_state(x, cfg, np.random.default_rng(7))
        b = measured_state(x, cfg, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_negative_noise_rejected(self):
        with pytest.raises(ValueError):
            ControllerConfig(state_noise=-0.1)


class TestScheduleGamma:
    """Tester for schedule_gamma()."""

    @staticmethod
    def _map(cold_point) -> GammaMap:
        x = cold_point[0]
        out = GammaMap()
        out.add(Anchor(T_amb=260.0, x_mean=x, I_b=30.0, gamma=np.full(N_GAMMA, 0.8), window_id=0))
        out.add(Anchor(T_amb=280.0, x_mean=x, I_b=30.0, gamma=np.full(N_GAMMA, 1.2), window_id=1))
        return out

    def test_empty_map(self, cold_point):
        with pytest.raises(EmptyMapError):
            schedule_gamma(263.15, cold_point[0], 30.0, GammaMap())
        with pytest.raises(EmptyMapError):
            schedule_gamma(263.15, cold_point[0], 30.0, None)

    def test_exact_anchor(self, cold_point):
        gamma = schedule_gamma(260.0, cold_point[0], 30.0, self._map(cold_point))
        assert gamma == pytest.approx(np.full(N_GAMMA, 0.8))

    def test_midpoint_is_average(self, cold_point):
        gamma = schedule_gamma(270.0, cold_point[0], 30.0, self._map(cold_point))
        assert gamma == pytest.approx(np.full(N_GAMMA, 1.0))

    def test_closer_anchor_dominates(self, cold_point):
        gamma = schedule_gamma(262.0, cold_point[0], 30.0, self._map(cold_point))
        assert np.all(gamma < 1.0)
        assert np.all(gamma > 0.8)


class TestControlStep:
    """Tester for control_step()."""

    def test_step_within_bounds(self, params, cold_point):
        x, u, d = cold_point
        ctx = _context(params)
        state = initial_state(ctx.bounds, u)
        u_t, diag, state = control_step(x, _preview(d), state, ctx)
        assert u_t.shape == (NU,)
        assert np.all(u_t >= ctx.bounds.u_min) and np.all(u_t <= ctx.bounds.u_max)
        assert state.step == 1
        assert np.array_equal(state.u_prev, u_t)
        assert state.terminal is not None
        assert diag.solve_ms >= 0
        assert diag.modes.delta_hpm == 1

    def test_second_step_reuses_terminal(self, params, cold_point):
        x, u, d = cold_point
        ctx = _context(params)
        state = initial_state(ctx.bounds, u)
        _, _, state = control_step(x, _preview(d), state, ctx)
        _, diag, state = control_step(x, _preview(d), state, ctx)
        assert state.step == 2
        assert diag.terminal_reused

    def test_bad_preview_shape(self, params, cold_point):
        x, u, d = cold_point
        ctx = _context(params)
        with pytest.raises(DimensionMismatchError):
            control_step(x, np.repeat(d[:, None], HORIZON + 1, axis=1), initial_state(ctx.bounds), ctx)

    def test_zero_budget_uses_fallback(self, params, cold_point):
        x, u, d = cold_point
        ctx = _context(params, solver=SolverOptions(max_iter=0))
        u_t, diag, _ = control_step(x, _preview(d), initial_state(ctx.bounds, u), ctx)
        assert diag.fallback
        assert diag.status == "MaxIter"
        assert np.all(u_t >= ctx.bounds.u_min) and np.all(u_t <= ctx.bounds.u_max)

    def test_state_outside_boxes_is_clamped(self, params, cold_point):
        x, u, d = cold_point
        x[0] = 1000.0
        ctx = _context(params)
        u_t, diag, _ = control_step(x, _preview(d), initial_state(ctx.bounds, u), ctx)
        assert diag.clamped
        assert np.all(np.isfinite(u_t))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ControllerConfig(horizon=1)
        with pytest.raises(ValueError):
            ControllerConfig(dt=0.0)
