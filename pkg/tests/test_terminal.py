"""Tester for tem.terminal: DARE, reservelov og terminaldata."""

from dataclasses import replace

import numpy as np
import pytest

from tem.discretize import StageParams, operating_point, step
from tem.errors import UnstabilizableError
from tem.model import NU, NX, ModeFlags
from tem.ocp import Bounds, OcpWeights
from tem.params import default_gamma
from tem.selftest import closed_loop_radius, scalar_dare
from tem.terminal import (
    TerminalConfig, compute_terminal, fallback_terminal, lqr_fallback, needs_update,
    operating_features, riccati_residual, solve_dare, solve_target, terminal_penalty,
)
from tests.conftest import COLD_AMBIENT, COLD_DISTURBANCE, COLD_INPUT, COLD_STATE


class TestSolveDare:
    """Tester for solve_dare()."""

    def test_scalar(self):
        P, K, gamma_d = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
        assert P[0, 0] == pytest.approx(1.13278, abs=1e-5)
        assert P[0, 0] == pytest.approx(scalar_dare(), rel=1e-8)
        assert gamma_d == 1.0
        assert K[0, 0] == pytest.approx(0.5 * P[0, 0] / (1.0 + P[0, 0]))

    def test_residual_small(self):
        rng = np.random.default_rng(4)
        A = 0.5 * rng.standard_normal((3, 3))
        B = rng.standard_normal((3, 2))
        Q, R = np.eye(3), np.eye(2)
        P, _, gamma_d = solve_dare(A, B, Q, R)
        assert riccati_residual(P, np.sqrt(gamma_d) * A, B, Q, R) < 1e-6

    def test_discounts_uncontrollable_unstable_mode(self):
        # √γ·1.05 må under 1: første γ i skjemaet som gir det er 0.9
        P, K, gamma_d = solve_dare([[1.05]], [[0.0]], [[1.0]], [[1.0]], max_iter=5000)
        assert gamma_d == pytest.approx(0.9)
        assert P[0, 0] == pytest.approx(1.0 / (1.0 - 0.9 * 1.1025), rel=1e-6)
        assert K[0, 0] == 0.0

    def test_unstabilizable(self):
        with pytest.raises(UnstabilizableError):
            solve_dare([[2.0]], [[0.0]], [[1.0]], [[1.0]], max_iter=500)

    def test_initial_discount_respected(self):
        _, _, gamma_d = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]], gamma_d_init=0.9)
        assert gamma_d == pytest.approx(0.9)


class TestFallback:
    """Tester for fallback_terminal(), lqr_fallback() og terminal_penalty()."""

    def test_fallback_terminal(self, cold_point):
        x, u, _ = cold_point
        bounds, weights = Bounds(), OcpWeights()
        data = fallback_terminal(x, u, bounds, weights, ModeFlags())
        assert np.array_equal(data.P, weights.q_p)
        assert np.array_equal(data.K, np.zeros((NU, NX)))
        assert np.all(np.isnan(data.features))
        assert data.modes == ModeFlags()

    def test_zero_gain_holds_target_input(self, cold_point):
        x, u, _ = cold_point
        bounds = Bounds()
        data = fallback_terminal(x, u, bounds, OcpWeights())
        assert lqr_fallback(x + 5.0, data, bounds) == pytest.approx(bounds.clip_input(u))

    def test_lqr_output_clipped(self, cold_point):
        x, u, _ = cold_point
        bounds = Bounds()
        data = fallback_terminal(x, u, bounds, OcpWeights())
        K = np.full((NU, NX), -1e3)
        out = lqr_fallback(x + 10.0, replace(data, K=K), bounds)
        assert np.all(out >= bounds.u_min) and np.all(out <= bounds.u_max)

    def test_penalty_zero_at_target(self, cold_point):
        x, u, _ = cold_point
        data = fallback_terminal(x, u, Bounds(), OcpWeights())
        assert terminal_penalty(data.x_st, data) == pytest.approx(0.0)
        assert terminal_penalty(data.x_st + 1.0, data) > 0


class TestNeedsUpdate:
    """Tester for needs_update()."""

    def test_no_previous(self, cold_point):
        assert needs_update(None, cold_point[2], ModeFlags(), TerminalConfig())

    def test_fallback_always_updates(self, cold_point):
        x, u, d = cold_point
        prev = fallback_terminal(x, u, Bounds(), OcpWeights(), ModeFlags())
        assert needs_update(prev, d, ModeFlags(), TerminalConfig())

    def _prev(self, cold_point, features):
        x, u, _ = cold_point
        data = fallback_terminal(x, u, Bounds(), OcpWeights(), ModeFlags())
        return replace(data, features=features)

    def test_small_change_reuses(self, cold_point):
        d = cold_point[2]
        prev = self._prev(cold_point, operating_features(d))
        d2 = d.copy()
        d2[0] += 0.5
        assert not needs_update(prev, d2, ModeFlags(), TerminalConfig())

    def test_large_change_updates(self, cold_point):
        d = cold_point[2]
        prev = self._prev(cold_point, operating_features(d))
        d2 = d.copy()
        d2[2] += 50.0
        assert needs_update(prev, d2, ModeFlags(), TerminalConfig())

    def test_mode_change_updates(self, cold_point):
        d = cold_point[2]
        prev = self._prev(cold_point, operating_features(d))
        cooling = ModeFlags(delta_hpm=0, delta_ps=0, delta_rb=0, delta_ev=1, delta_ch=1, delta_w=0)
        assert needs_update(prev, d, cooling, TerminalConfig())


class TestComputeTerminal:
    """Tester for compute_terminal() ved det kalde driftspunktet."""

    @pytest.fixture(scope="class")
    def data(self, params):
        x = np.array(COLD_STATE)
        z = StageParams(np.array(COLD_DISTURBANCE), ModeFlags(), default_gamma(), operating_point(x, COLD_AMBIENT))
        return compute_terminal(x, np.array(COLD_INPUT), z, Bounds(), OcpWeights(), params)

    def test_shapes(self, data):
        assert data.A.shape == (NX, NX)
        assert data.B.shape == (NX, NU)
        assert data.K.shape == (NU, NX)

    def test_target_inside_boxes(self, data):
        bounds = Bounds()
        assert bounds.contains_state(data.x_st)
        assert np.all(data.u_st >= bounds.u_min) and np.all(data.u_st <= bounds.u_max)

    def test_positive_definite(self, data):
        assert np.all(np.linalg.eigvalsh(0.5 * (data.P + data.P.T)) > 0)

    def test_closed_loop_stable(self, data):
        assert closed_loop_radius(data) < 1.0

    def test_features_recorded(self, data):
        assert np.all(np.isfinite(data.features))
        assert data.modes == ModeFlags()


class TestSolveTarget:
    """Tester for solve_target()."""

    @pytest.fixture(scope="class")
    def target(self, params):
        x = np.array(COLD_STATE)
        z = StageParams(np.array(COLD_DISTURBANCE), ModeFlags(), default_gamma(), operating_point(x, COLD_AMBIENT))
        x_st, u_st, s = solve_target(z, Bounds(), OcpWeights(), params, x, np.array(COLD_INPUT))
        return z, x_st, u_st, s

    def test_within_boxes(self, target):
        _, x_st, u_st, _ = target
        bounds = Bounds()
        assert bounds.contains_state(x_st)
        assert np.all(u_st >= bounds.u_min) and np.all(u_st <= bounds.u_max)

    def test_residual_is_returned_slack(self, target, params):
        z, x_st, u_st, s = target
        phi = step(x_st, u_st, z, 1.0, params, smooth=True)
        assert np.linalg.norm(x_st - phi) == pytest.approx(np.linalg.norm(s), rel=1e-12, abs=1e-12)
