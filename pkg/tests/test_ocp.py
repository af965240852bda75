"""Tester for tem.ocp: bokser, skalering, layout og OCP-instansen."""

import numpy as np
import pytest

from tem.discretize import StageParams
from tem.errors import InfeasibleBoxesError
from tem.model import NU, NX, T_CAIR, ModeFlags
from tem.nlp import SolverOptions, Status, solve
from tem.ocp import (
    Bounds, OcpLayout, OcpWeights, build, scale_state, stage_cost, stage_cost_terms, unscale_state,
)
from tem.params import default_gamma


N = 4


@pytest.fixture
def instance(params, cold_point, cold_theta):
    x, u, d = cold_point
    bounds = Bounds()
    weights = OcpWeights()
    stages = StageParams(np.repeat(d[:, None], N, axis=1), ModeFlags(), default_gamma(), cold_theta)
    return build(N, x, bounds.clip_input(u), stages, bounds, weights, (x, bounds.clip_input(u), weights.q_p),
                 params)


class TestBounds:
    """Tester for Bounds."""

    def test_defaults_valid(self):
        Bounds().validate()

    def test_empty_state_box(self):
        bounds = Bounds()
        bounds.x_min[0] = bounds.x_max[0] + 1.0
        with pytest.raises(InfeasibleBoxesError):
            bounds.validate()

    def test_empty_input_box(self):
        bounds = Bounds()
        bounds.u_min[1] = bounds.u_max[1]
        with pytest.raises(InfeasibleBoxesError):
            bounds.validate()

    def test_preference_outside_hard_box(self):
        bounds = Bounds()
        bounds.x_pref_lo[T_CAIR] = bounds.x_min[T_CAIR] - 1.0
        with pytest.raises(InfeasibleBoxesError):
            bounds.validate()

    def test_soft_states(self):
        assert list(Bounds().soft_states) == [4, 8]

    def test_clip_input(self):
        bounds = Bounds()
        u = bounds.clip_input(np.full(NU, 1e9))
        assert np.array_equal(u, bounds.u_max)


class TestScaling:
    """Tester for scale_state() og unscale_state()."""

    def test_inverse(self, cold_point):
        x = cold_point[0]
        assert unscale_state(scale_state(x)) == pytest.approx(x)

    def test_horizon_layout(self, cold_point):
        x = cold_point[0]
        X = np.stack([x, x])                       # (N, 9)
        assert scale_state(X)[1] == pytest.approx(scale_state(x))

    def test_temperature_scale(self):
        x = np.array([323.15, 273.15, 273.15, 0.5, 273.15, 2e5, 8e5, 273.15, 273.15])
        xi = scale_state(x)
        assert xi[0] == pytest.approx(1.0)
        assert xi[5] == pytest.approx(2.0)


class TestWeights:
    """Tester for OcpWeights."""

    def test_reference_tracks_cabin_air(self):
        weights = OcpWeights(t_ref=295.0)
        assert weights.x_ref[T_CAIR] == 295.0

    def test_terminal_weight_positive_definite(self):
        assert np.all(np.linalg.eigvalsh(OcpWeights().q_p) > 0)

    def test_rejects_nonpositive_power_weight(self):
        with pytest.raises(ValueError):
            OcpWeights(w_pwr=0.0)

    def test_stage_cost_sum(self, params, cold_point, cold_stage):
        x, u, _ = cold_point
        bounds, weights = Bounds(), OcpWeights()
        terms = stage_cost_terms(x, u, u, cold_stage, weights, bounds, params)
        assert terms["rate"] == 0.0
        assert terms["power"] > 0
        assert stage_cost(x, u, u, cold_stage, weights, bounds, params) == pytest.approx(sum(terms.values()))


class TestLayout:
    """Tester for OcpLayout."""

    def test_sizes(self):
        layout = OcpLayout(N=5, soft=(4, 8), u_scale=tuple(np.ones(NU)))
        assert layout.n == 5 * (NX + NU + 2 + 2 + 2 + NU + NU)
        assert layout.m_eq == 5 * NX
        assert layout.m_in == 5 * (2 + 2 + 2 + NU + NU)

    def test_blocks_are_contiguous(self):
        layout = OcpLayout(N=3, soft=(4, 8), u_scale=tuple(np.ones(NU)))
        end = 0
        for name, width in layout.blocks:
            start, w = layout.offsets[name]
            assert start == end and w == width
            end = start + 3 * width
        assert end == layout.n


class TestOcpInstance:
    """Tester for OcpInstance."""

    def test_dimensions(self, instance):
        assert instance.n == instance.layout.n
        c_eq, c_in = instance.constraints(instance.initial_guess())
        assert c_eq.shape == (instance.m_eq,)
        assert c_in.shape == (instance.m_in,)

    def test_initial_guess_feasible_for_bounds(self, instance):
        w0 = instance.initial_guess()
        assert np.all(w0 >= instance.lb - 1e-12)
        assert np.all(w0 <= instance.ub + 1e-12)
        _, c_in = instance.constraints(w0)
        assert np.all(c_in >= -1e-9)

    def test_initial_guess_satisfies_dynamics(self, instance):
        c_eq, _ = instance.constraints(instance.initial_guess())
        assert np.max(np.abs(c_eq)) < 1e-8

    def test_initial_guess_logs_rejected_step(self, instance, monkeypatch, caplog):
        def rejecting_step(*args, **kwargs):
            raise ValueError("utenfor tabell")

        monkeypatch.setattr("tem.ocp.step", rejecting_step)
        with caplog.at_level("DEBUG", logger="tem.ocp"):
            w0 = instance.initial_guess()
        assert w0.shape == (instance.n,)
        assert np.all(np.isfinite(w0))
        assert sum("Startgjetning" in r.getMessage() for r in caplog.records) == N

    def test_gradient_directional_derivative(self, instance):
        rng = np.random.default_rng(0)
        w = instance.initial_guess()
        direction = rng.standard_normal(instance.n) * 1e-2
        h = 1e-6
        fd = (instance.objective(w + h * direction) - instance.objective(w - h * direction)) / (2 * h)
        assert instance.gradient(w) @ direction == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_constraint_jacobian_directional(self, instance):
        rng = np.random.default_rng(1)
        w = instance.initial_guess()
        direction = rng.standard_normal(instance.n) * 1e-2
        h = 1e-6
        plus, minus = instance.constraints(w + h * direction), instance.constraints(w - h * direction)
        J_eq, J_in = instance.jacobians(w)
        assert J_eq @ direction == pytest.approx((plus[0] - minus[0]) / (2 * h), rel=1e-4, abs=1e-6)
        assert J_in @ direction == pytest.approx((plus[1] - minus[1]) / (2 * h), rel=1e-4, abs=1e-6)

    def test_hessian_shape_and_symmetry(self, instance):
        H = instance.hessian(instance.initial_guess()).toarray()
        assert H.shape == (instance.n, instance.n)
        assert H == pytest.approx(H.T)

    def test_breakdown_sums_to_objective(self, instance):
        w = instance.initial_guess()
        assert sum(instance.breakdown(w).values()) == pytest.approx(instance.objective(w))

    def test_solve_respects_hard_boxes(self, instance):
        sol = solve(instance, None, SolverOptions(max_iter=100))
        assert sol.status in (Status.CONVERGED, Status.MAX_ITER)
        u = sol.u
        assert u.shape == (N, NU)
        assert np.all(u >= instance.bounds.u_min - 1e-6)
        assert np.all(u <= instance.bounds.u_max + 1e-6)
        assert sol.x.shape == (N, NX)

    def test_short_horizon_rejected(self, params, cold_point, cold_theta):
        x, u, d = cold_point
        bounds, weights = Bounds(), OcpWeights()
        stages = StageParams(d[:, None], ModeFlags(), default_gamma(), cold_theta)
        with pytest.raises(ValueError):
            build(1, x, u, stages, bounds, weights, (x, u, weights.q_p), params)
