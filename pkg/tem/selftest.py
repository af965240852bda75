"""
Selvtester med uavhengige orakler.

Brukes både av `python -m tem selftest` og testene:

- DARE mot strukturert dobling (SDA) og den skalare rotløsningen
- interiørpunktløseren mot SLSQP på tilfeldige konvekse QP-er
- Jacobi-matriser for Φ mot sentrale differanser
- RK4-orden ved steghalvering
- varmstart mot kaldstart, reserveloven og identifikasjon på COM-data
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .config import Scenario
from .controller import ControllerContext, control_step, initial_state
from .discretize import StageParams, jacobians, operating_point, rk4, step
from .drive_cycle import disturbances, load_drive_cycle
from .fluid import saturation_pressure
from .harness import PlantTwin
from .ident import IdentWindow, fit_window
from .model import NU, NX, P_IN, P_OUT, SOC, TEMPERATURE_STATES, ModeFlags, rhs
from .nlp import QuadraticProgram, SolverOptions, Status, solve
from .ocp import STATE_SCALE, Bounds
from .params import N_GAMMA, ParameterSet, default_gamma, load_parameters, load_qgen_map
from .terminal import TerminalData, riccati_residual, solve_dare


logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


# ============================================================
# DARE
# ============================================================

def dare_doubling(A, B, Q, R, max_iter: int = 100, tol: float = 1e-14) -> np.ndarray:
    """Strukturert dobling: H_k → P kvadratisk for stabiliserbare par."""
    A_k = np.asarray(A, float).copy()
    G_k = B @ la.solve(R, B.T, assume_a="pos")
    H_k = np.asarray(Q, float).copy()
    eye = np.eye(A_k.shape[0])
    for _ in range(max_iter):
        W = eye + G_k @ H_k
        V1 = la.solve(W, A_k)
        V2 = la.solve(W, G_k)
        H_next = H_k + A_k.T @ H_k @ V1
        G_k = G_k + A_k @ V2 @ A_k.T
        A_k = A_k @ V1
        H_next = 0.5 * (H_next + H_next.T)
        if np.linalg.norm(H_next - H_k) <= tol * np.linalg.norm(H_next):
            return H_next
        H_k = H_next
    return H_k


def scalar_dare(a: float = 0.5, b: float = 1.0, q: float = 1.0, r: float = 1.0) -> float:
    """Positiv rot av b²p² + (r − a²r − qb²)p − qr = 0."""
    c2 = b * b
    c1 = r - a * a * r - q * b * b
    return float((-c1 + np.sqrt(c1 * c1 + 4 * c2 * q * r)) / (2 * c2))


def random_stabilizable(rng: np.random.Generator, n: int = NX, m: int = NU):
    A = rng.standard_normal((n, n))
    A *= rng.uniform(0.5, 1.2) / max(abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    return A, B


def check_dare(trials: int = 100, seed: int = 0, rtol: float = 1e-7) -> CheckResult:
    p = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])[0][0, 0]
    worst_scalar = abs(p - scalar_dare())
    rng = np.random.default_rng(seed)
    worst_rel, worst_res, all_pd = 0.0, 0.0, True
    for _ in range(trials):
        A, B = random_stabilizable(rng)
        Q, R = np.eye(NX), np.eye(NU)
        P, _, gamma_d = solve_dare(A, B, Q, R, rtol=1e-12)
        P_ref = dare_doubling(A, B, Q, R)
        worst_rel = max(worst_rel, np.linalg.norm(P - P_ref) / np.linalg.norm(P_ref))
        worst_res = max(worst_res, riccati_residual(P, A, B, Q, R) / np.linalg.norm(P))
        all_pd &= bool(np.all(np.linalg.eigvalsh(P) > 0)) and gamma_d == 1.0
    passed = worst_scalar < 1e-5 and worst_rel < rtol and worst_res <= 1e-8 and all_pd
    return CheckResult("dare", passed, f"skalar {p:.6f}, maks rel. avvik {worst_rel:.2e}, "
                                       f"maks residual {worst_res:.2e}")


def closed_loop_radius(data: TerminalData) -> float:
    """Spektralradius til √γ_d·A − BK på den lineariserte modellen."""
    return float(max(abs(np.linalg.eigvals(np.sqrt(data.gamma_d) * data.A - data.B @ data.K))))


# ============================================================
# QP
# ============================================================

def random_qp(rng: np.random.Generator, n: int = 20, n_box: int = 10, n_eq: int = 5) -> QuadraticProgram:
    M = rng.standard_normal((n, n))
    H = M @ M.T / n + 0.1 * np.eye(n)
    g = rng.standard_normal(n)
    A_eq = rng.standard_normal((n_eq, n))
    w0 = np.concatenate([rng.uniform(-0.5, 0.5, n_box), rng.standard_normal(n - n_box)])
    lb = np.concatenate([np.full(n_box, -1.0), np.full(n - n_box, -np.inf)])
    ub = np.concatenate([np.full(n_box, 1.0), np.full(n - n_box, np.inf)])
    return QuadraticProgram(H, g, A_eq=A_eq, b_eq=A_eq @ w0, lb=lb, ub=ub)


def slsqp_oracle(qp: QuadraticProgram) -> float:
    H = qp.H.toarray()
    A = qp.A_eq.toarray()
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(qp.lb, qp.ub)]
    res = minimize(lambda w: 0.5 * w @ H @ w + qp.g @ w, np.zeros(qp.n), jac=lambda w: H @ w + qp.g,
                   method="SLSQP", bounds=bounds,
                   constraints=[{"type": "eq", "fun": lambda w: A @ w - qp.b_eq, "jac": lambda w: A}],
                   options={"ftol": 1e-14, "maxiter": 1000})
    return float(res.fun)


def check_qp(trials: int = 10, seed: int = 0, rtol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, statuses = 0.0, []
    for _ in range(trials):
        qp = random_qp(rng)
        sol = solve(qp, None, SolverOptions(tol=1e-10, max_iter=200))
        statuses.append(sol.status)
        ref = slsqp_oracle(qp)
        worst = max(worst, abs(sol.objective - ref) / max(1.0, abs(ref)))
    passed = worst < rtol and all(s == Status.CONVERGED for s in statuses)
    return CheckResult("qp", passed, f"maks rel. objektivavvik {worst:.2e}")


# ============================================================
# JACOBI-MATRISER OG RK4
# ============================================================

def random_point(rng: np.random.Generator, bounds: Bounds = Bounds()):
    """Tilfeldig tillatt (x, u, z) i varmepumpemodus."""
    T_amb = rng.uniform(258.15, 283.15)
    x = np.zeros(NX)
    for i in TEMPERATURE_STATES:
        x[i] = rng.uniform(T_amb, 310.0)
    x[SOC] = rng.uniform(0.3, 0.9)
    x[P_IN] = float(saturation_pressure(rng.uniform(250.0, 275.0)))
    x[P_OUT] = float(saturation_pressure(rng.uniform(300.0, 335.0)))
    u = bounds.u_min + rng.uniform(0.1, 0.9, NU) * (bounds.u_max - bounds.u_min)
    d = np.array([T_amb, rng.uniform(0, 30), rng.uniform(0, 80),
                  rng.uniform(100, 2000), rng.uniform(20, 200), rng.uniform(50, 600)])
    z = StageParams(d, ModeFlags(), default_gamma(), operating_point(x, T_amb))
    return x, u, z


def finite_difference(x, u, z: StageParams, dt: float, params: ParameterSet, h: float = 1e-5):
    """Sentrale differanser av Φ med relativt steg h."""
    def phi(v):
        return step(v[:NX], v[NX:], z, dt, params, smooth=True)

    v0 = np.concatenate([x, u])
    J = np.zeros((NX, NX + NU))
    for j in range(NX + NU):
        e = np.zeros_like(v0)
        e[j] = h * max(abs(v0[j]), 1.0)
        J[:, j] = (phi(v0 + e) - phi(v0 - e)) / (2 * e[j])
    return J[:, :NX], J[:, NX:]


def jacobian_error(x, u, z: StageParams, dt: float, params: ParameterSet, bounds: Bounds = Bounds()):
    """Maks avvik (AD mot FD) i skalerte koordinater, relativt med absolutt gulv."""
    A, B = jacobians(x, u, z, dt, params)
    A_fd, B_fd = finite_difference(x, u, z, dt, params)
    sx, su = STATE_SCALE, bounds.u_scale
    exact = np.hstack([A * sx[None, :] / sx[:, None], B * su[None, :] / sx[:, None]])
    approx = np.hstack([A_fd * sx[None, :] / sx[:, None], B_fd * su[None, :] / sx[:, None]])
    return np.abs(exact - approx), np.abs(approx)


def check_jacobians(points: int = 50, seed: int = 0, params: Optional[ParameterSet] = None,
                    rtol: float = 1e-6, atol: float = 1e-9) -> CheckResult:
    params = params or load_parameters()
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    for _ in range(points):
        x, u, z = random_point(rng)
        err, ref = jacobian_error(x, u, z, 1.0, params)
        failures += int(np.any(err > rtol * ref + atol))
        worst = max(worst, float(np.max(err / (ref + atol))))
    return CheckResult("jacobians", failures == 0, f"{failures}/{points} punkter utenfor toleranse, "
                                                   f"maks rel. avvik {worst:.2e}")


def rk4_error_ratio(f: Callable, x0, span: float, h: float, scale=1.0, ref_factor: int = 64) -> float:
    """Feilforholdet e(h)/e(h/2) over span; ≈16 for et fjerdeordens skjema."""
    def integrate(dt):
        x = np.asarray(x0, dtype=float)
        for _ in range(int(round(span / dt))):
            x = rk4(f, x, dt)
        return x

    ref = integrate(h / ref_factor)
    e1 = np.linalg.norm((integrate(h) - ref) / scale)
    e2 = np.linalg.norm((integrate(h / 2) - ref) / scale)
    return float(e1 / e2) if e2 > 0 else np.inf


def check_rk4_order(points: int = 10, seed: int = 0, params: Optional[ParameterSet] = None,
                    span: float = 2.0, h: float = 0.5) -> CheckResult:
    exact = abs(float(rk4(lambda x: -x, 1.0, 0.1)) - np.exp(-0.1))
    params = params or load_parameters()
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(points):
        x, u, z = random_point(rng)

        def f(xi, u=u, z=z):
            return rhs(xi, u, z.d, z.v, z.gamma, z.theta, params, smooth=True)

        ratios.append(rk4_error_ratio(f, x, span, h, scale=STATE_SCALE))
    ratios = np.array(ratios)
    passed = exact < 1e-7 and bool(np.all((ratios >= 12) & (ratios <= 20)))
    return CheckResult("rk4", passed, f"ẋ=−x-feil {exact:.1e}, forhold {ratios.min():.1f}–{ratios.max():.1f}")


# ============================================================
# LØKKESJEKKER
# ============================================================

def warm_start_study(steps: int = 20, horizon: int = 10, ambient: float = 263.15):
    """
    Iterasjoner med forskjøvet varmstart og kaldstart på de samme instansene
    langs en kort lukket sløyfe. Returnerer (varm, kald) som arrays.
    """
    scenario = Scenario(ambient=ambient, horizon=horizon, duration=float(steps))
    params = load_parameters()
    ctx = ControllerContext(params, scenario.bounds, scenario.ocp_weights(), scenario.controller_config())
    D = disturbances(load_drive_cycle(), ambient, load_qgen_map(), np.arange(steps + horizon) * scenario.dt)
    twin = PlantTwin(params, scenario.twin, scenario.seed)
    state = initial_state(scenario.bounds)
    x = scenario.initial_state()
    warm, cold = [], []
    for k in range(steps):
        preview = D[:, k:k + horizon]
        u, diag, next_state = control_step(x, preview, state, ctx)
        if state.solution is not None:
            _, cold_diag, _ = control_step(x, preview, replace(state, solution=None), ctx)
            warm.append(diag.iterations)
            cold.append(cold_diag.iterations)
        x = twin.step(x, u, D[:, k], diag.modes, scenario.dt)
        state = next_state
    return np.array(warm), np.array(cold)


def check_warm_start(steps: int = 20) -> CheckResult:
    warm, cold = warm_start_study(steps)
    ratio = float(np.median(warm) / max(np.median(cold), 1.0))
    return CheckResult("warm_start", ratio <= 0.7, f"median {np.median(warm):.0f} mot {np.median(cold):.0f} "
                                                   f"iterasjoner (forhold {ratio:.2f})")


def fallback_study(steps: int = 10, horizon: int = 10, ambient: float = 263.15):
    """Løkke med iterasjonsbudsjett 0: (alle steg reserve, innenfor bokser, maks spektralradius)."""
    scenario = Scenario(ambient=ambient, horizon=horizon, duration=float(steps),
                        solver=SolverOptions(max_iter=0))
    params = load_parameters()
    bounds = scenario.bounds
    ctx = ControllerContext(params, bounds, scenario.ocp_weights(), scenario.controller_config())
    D = disturbances(load_drive_cycle(), ambient, load_qgen_map(), np.arange(steps + horizon) * scenario.dt)
    twin = PlantTwin(params, scenario.twin, scenario.seed)
    state = initial_state(bounds)
    x = scenario.initial_state()
    all_fallback, in_bounds, radius = True, True, 0.0
    for k in range(steps):
        u, diag, state = control_step(x, D[:, k:k + horizon], state, ctx)
        all_fallback &= diag.fallback
        in_bounds &= bool(np.all(u >= bounds.u_min) and np.all(u <= bounds.u_max))
        if np.all(np.isfinite(state.terminal.features)):
            radius = max(radius, closed_loop_radius(state.terminal))
        x = twin.step(x, u, D[:, k], diag.modes, scenario.dt)
        in_bounds &= bounds.contains_state(x, tol=1e-6)
    return all_fallback, in_bounds, radius


def check_fallback(steps: int = 10) -> CheckResult:
    all_fallback, in_bounds, radius = fallback_study(steps)
    return CheckResult("fallback", all_fallback and in_bounds and radius < 1.0,
                       f"reserve i alle steg: {all_fallback}, innenfor bokser: {in_bounds}, "
                       f"spektralradius {radius:.3f}")


def synthetic_window(gamma_true, params: ParameterSet, samples: int = 241, seed: int = 0,
                     hold: float = 20.0, ambient: float = 268.15) -> IdentWindow:
    """Vindu generert av COM med kjent γ og rik eksitasjon (stykkevis konstante pådrag)."""
    rng = np.random.default_rng(seed)
    bounds = Bounds()
    t = np.arange(samples, dtype=float)
    u = np.zeros((NU, samples))
    for start in range(0, samples, int(hold)):
        u[:, start:start + int(hold)] = (bounds.u_min + rng.uniform(0.2, 0.8, NU)
                                         * (bounds.u_max - bounds.u_min))[:, None]
    d = np.zeros((6, samples))
    d[0] = ambient
    d[1] = 15.0 + 10.0 * np.sin(2 * np.pi * t / 120.0)
    d[2] = 40.0 + 30.0 * np.sin(2 * np.pi * t / 90.0)
    d[3] = 800.0 + 400.0 * np.sin(2 * np.pi * t / 70.0)
    d[4] = 80.0
    d[5] = 250.0 + 100.0 * np.cos(2 * np.pi * t / 60.0)

    x = np.zeros((NX, samples))
    x[:, 0] = [295.0, 293.0, 291.0, 0.8, 285.0, float(saturation_pressure(262.0)),
               float(saturation_pressure(318.0)), 290.0, 288.0]
    modes = ModeFlags()
    for k in range(samples - 1):
        z = StageParams(d[:, k], modes, np.asarray(gamma_true, float), operating_point(x[:, k], d[0, k]))
        x[:, k + 1] = step(x[:, k], u[:, k], z, 1.0, params, smooth=True)
    return IdentWindow(t, x, u, d, modes)


def check_identification(seed: int = 0, rtol: float = 1e-4) -> CheckResult:
    params = load_parameters()
    rng = np.random.default_rng(seed)
    gamma_true = rng.uniform(0.8, 1.25, N_GAMMA)
    window = synthetic_window(gamma_true, params, seed=seed)
    gamma, residual = fit_window(window, default_gamma(), params=params, max_nfev=200)
    worst = float(np.max(np.abs(gamma - gamma_true) / gamma_true))
    return CheckResult("identification", worst <= rtol, f"maks rel. avvik {worst:.2e}, residual {residual:.2e}")


# ============================================================
# SAMLET
# ============================================================

CHECKS = {
    "dare": check_dare,
    "qp": check_qp,
    "jacobians": check_jacobians,
    "rk4": check_rk4_order,
    "warm_start": check_warm_start,
    "fallback": check_fallback,
    "identification": check_identification,
}


def run_selftests(names=None) -> list[CheckResult]:
    """Kjør de valgte sjekkene (alle som standard); en sjekk som kaster feil regnes som feilet."""
    results = []
    for name in names or CHECKS:
        if name not in CHECKS:
            raise ValueError(f"Ukjent selvtest: {name}")
        try:
            result = CHECKS[name]()
        except Exception as exc:
            logger.exception("Selvtest %s kastet feil", name)
            result = CheckResult(name, False, f"{type(exc).__name__}: {exc}")
        logger.info("%s: %s (%s)", name, "OK" if result.passed else "FEIL", result.detail)
        results.append(result)
    return results
