"""
Terminalingrediensene: kvasistasjonært målpar (x_st, u_st), linearisering
der, og diskontert DARE for terminalstraffen P og LQR-forsterkningen K.

Alt regnes i de skalerte koordinatene fra tem.ocp, slik at P kan brukes
direkte i OCP-et. Diskontering skalerer A med √γ_d; B skaleres ikke, så
lukket sløyfe er √γ_d·A − B·K.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import ad
from .discretize import StageParams, jacobians, seeded, step
from .errors import SolverDivergedError, UnstabilizableError
from .model import I_B, NU, NX, SOC, T_AMB, T_CAIR, V_VEH, ModeFlags
from .nlp import NlpInstance, SolverOptions, Status, solve
from .ocp import STATE_OFFSET, STATE_SCALE, Bounds, OcpWeights, scale_state
from .params import ParameterSet


logger = logging.getLogger(__name__)

DISCOUNT_SCHEDULE = (0.98, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55)
DISCOUNT_LIMIT = 0.5


@dataclass(frozen=True)
class TerminalConfig:
    skip_threshold: float = 0.05     # endring i (T_amb/50, v/30, I_b/100) under dette gjenbruker P
    always_discount: bool = False
    dare_max_iter: int = 10_000
    dare_rtol: float = 1e-10
    rho_anchor: float = 1e-6         # fester SOC-integratoren i målproblemet
    target_max_iter: int = 60


@dataclass(frozen=True)
class TerminalData:
    """Målpar og DARE-løsning; A, B, P og K er i skalerte koordinater."""
    x_st: np.ndarray
    u_st: np.ndarray
    s: np.ndarray
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    K: np.ndarray
    gamma_d: float
    features: np.ndarray = field(default_factory=lambda: np.zeros(3))
    modes: Optional[ModeFlags] = None


# === MÅLPAR ===

class TargetProblem(NlpInstance):
    """
    min λ(ξ_t − ξ_ref)² + ρ_s‖σ‖² + ρ_u‖ν‖² + ρ_a‖ξ_a − ξ̄_a‖²
    s.t. ξ − Φ̃(ξ, ν) − σ = 0, harde bokser på ξ og ν.

    Variabler w = [ξ (nx), ν (nu), σ (nx)]; phi(x, u) returnerer
    (Φ, A, B) i fysiske enheter.
    """

    def __init__(self, phi: Callable, x_scale, x_offset, u_scale, x_lb, x_ub, u_lb, u_ub,
                 track: int, x_ref: float, lam: float, rho_s: float, rho_u: float,
                 x_guess, u_guess, anchor: Optional[int] = None, rho_anchor: float = 0.0):
        self.phi = phi
        self.sx = np.asarray(x_scale, float)
        self.ox = np.asarray(x_offset, float)
        self.su = np.asarray(u_scale, float)
        self.nx, self.nu = len(self.sx), len(self.su)
        self.n = 2 * self.nx + self.nu
        self.m_eq, self.m_in = self.nx, 0
        self.track, self.lam = track, lam
        self.xi_ref = (x_ref - self.ox[track]) / self.sx[track]
        self.rho_s, self.rho_u = rho_s, rho_u
        self.anchor, self.rho_anchor = anchor, rho_anchor
        self.xi_guess = (np.asarray(x_guess, float) - self.ox) / self.sx
        self.nu_guess = np.asarray(u_guess, float) / self.su
        self.lb = np.concatenate([(np.asarray(x_lb, float) - self.ox) / self.sx,
                                  np.asarray(u_lb, float) / self.su, np.full(self.nx, -np.inf)])
        self.ub = np.concatenate([(np.asarray(x_ub, float) - self.ox) / self.sx,
                                  np.asarray(u_ub, float) / self.su, np.full(self.nx, np.inf)])
        self._cache = (None, None)

    def _split(self, w):
        return w[:self.nx], w[self.nx:self.nx + self.nu], w[self.nx + self.nu:]

    def _phys(self, w):
        xi, nu, _ = self._split(w)
        return xi * self.sx + self.ox, nu * self.su

    def _eval(self, w):
        key = w.tobytes()
        if self._cache[0] != key:
            x, u = self._phys(w)
            self._cache = (key, self.phi(x, u))
        return self._cache[1]

    def breakdown(self, w) -> dict:
        xi, nu, sigma = self._split(w)
        out = {
            "tracking": float(self.lam * (xi[self.track] - self.xi_ref) ** 2),
            "residual": float(self.rho_s * sigma @ sigma),
            "input": float(self.rho_u * nu @ nu),
            "anchor": 0.0,
        }
        if self.anchor is not None:
            out["anchor"] = float(self.rho_anchor * (xi[self.anchor] - self.xi_guess[self.anchor]) ** 2)
        return out

    def objective(self, w) -> float:
        return float(sum(self.breakdown(w).values()))

    def gradient(self, w):
        xi, nu, sigma = self._split(w)
        gx = np.zeros(self.nx)
        gx[self.track] = 2.0 * self.lam * (xi[self.track] - self.xi_ref)
        if self.anchor is not None:
            gx[self.anchor] += 2.0 * self.rho_anchor * (xi[self.anchor] - self.xi_guess[self.anchor])
        return np.concatenate([gx, 2.0 * self.rho_u * nu, 2.0 * self.rho_s * sigma])

    def constraints(self, w):
        xi, _, sigma = self._split(w)
        phi, _, _ = self._eval(w)
        return xi - (np.asarray(phi) - self.ox) / self.sx - sigma, np.zeros(0)

    def jacobians(self, w):
        _, A, B = self._eval(w)
        A_s = A * self.sx[None, :] / self.sx[:, None]
        B_s = B * self.su[None, :] / self.sx[:, None]
        J = np.hstack([np.eye(self.nx) - A_s, -B_s, -np.eye(self.nx)])
        return sp.csr_matrix(J), sp.csr_matrix((0, self.n))

    def hessian(self, w):
        diag = np.concatenate([np.zeros(self.nx), np.full(self.nu, 2.0 * self.rho_u),
                               np.full(self.nx, 2.0 * self.rho_s)])
        diag[self.track] += 2.0 * self.lam
        if self.anchor is not None:
            diag[self.anchor] += 2.0 * self.rho_anchor
        return sp.diags(diag)

    def initial_guess(self):
        xi = np.clip(self.xi_guess, self.lb[:self.nx], self.ub[:self.nx])
        nu = np.clip(self.nu_guess, self.lb[self.nx:self.nx + self.nu], self.ub[self.nx:self.nx + self.nu])
        w = np.concatenate([xi, nu, np.zeros(self.nx)])
        c_eq, _ = self.constraints(w)
        w[self.nx + self.nu:] = c_eq
        return w


def com_map(z: StageParams, params: ParameterSet, dt: float = 1.0) -> Callable:
    """Φ og Jacobi-matriser for COM bundet til z."""
    def phi(x, u):
        xd, ud = seeded(x, u)
        out = step(xd, ud, z, dt, params, smooth=True)
        tangent = ad.jacobian(out)
        return ad.value(out), tangent[:, :NX], tangent[:, NX:]
    return phi


def solve_target(z_N: StageParams, bounds: Bounds, weights: OcpWeights, params: ParameterSet,
                 x_guess, u_guess, dt: float = 1.0, cfg: TerminalConfig = TerminalConfig(),
                 opts: Optional[SolverOptions] = None):
    """
    Kvasistasjonært målpar ved z_N.

    Returnerer (x_st, u_st, s) med s = x_st − Φ(x_st, u_st) regnet på nytt
    etter løsningen, slik at ‖x_st − Φ‖ = ‖s‖ eksakt.

    Raises:
        SolverDivergedError: Løseren divergerte
    """
    opts = opts or SolverOptions(max_iter=cfg.target_max_iter, warm_start=False)
    problem = TargetProblem(
        com_map(z_N, params, dt), STATE_SCALE, STATE_OFFSET, bounds.u_scale,
        bounds.x_min, bounds.x_max, bounds.u_min, bounds.u_max,
        track=T_CAIR, x_ref=weights.t_ref, lam=weights.lambda_t,
        rho_s=weights.rho_2, rho_u=weights.rho_u,
        x_guess=bounds.clip_state(x_guess), u_guess=bounds.clip_input(u_guess),
        anchor=SOC, rho_anchor=cfg.rho_anchor,
    )
    sol = solve(problem, None, opts)
    if sol.status == Status.DIVERGED:
        raise SolverDivergedError("Målproblemet divergerte")
    if sol.status != Status.CONVERGED:
        logger.debug("Målproblemet stoppet etter %d iterasjoner (KKT %.1e)", sol.iterations, sol.kkt_error)
    x_st, u_st = problem._phys(sol.w)
    x_st = bounds.clip_state(x_st)
    u_st = bounds.clip_input(u_st)
    phi = step(x_st, u_st, z_N, dt, params, smooth=True)
    return x_st, u_st, x_st - np.asarray(phi)


# === RICCATI ===

def _riccati(A, B, Q, R, max_iter: int, rtol: float):
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        K = la.solve(R + BtP @ B, BtP @ A, assume_a="pos")
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ K
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            return None
        if np.linalg.norm(P_next - P) <= rtol * np.linalg.norm(P):
            return P_next
        P = P_next
    return None


def _positive_definite(P) -> bool:
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True


def riccati_residual(P, A, B, Q, R) -> float:
    BtP = B.T @ P
    rhs = Q + A.T @ P @ A - A.T @ P @ B @ la.solve(R + BtP @ B, BtP @ A, assume_a="pos")
    return float(np.linalg.norm(P - rhs))


def solve_dare(A, B, Q_P, R_P, gamma_d_init: float = 1.0, max_iter: int = 10_000,
               rtol: float = 1e-10):
    """
    Fastpunktiterasjon av Riccati-rekursjonen fra P₀ = Q_P.

    Uten konvergens (eller tap av positiv definitthet) diskonteres A ← √γ_d·A
    med γ_d = 0.98, 0.95, 0.9, … Returnerer (P, K, γ_d) der
    K = (BᵀPB + R)⁻¹BᵀP(√γ_d·A).

    Raises:
        UnstabilizableError: γ_d nådde 0.5 uten konvergens
    """
    A, B = np.asarray(A, float), np.asarray(B, float)
    Q_P, R_P = np.asarray(Q_P, float), np.asarray(R_P, float)
    schedule = [g for g in (1.0,) + DISCOUNT_SCHEDULE if g <= gamma_d_init + 1e-12]
    for gamma_d in schedule:
        A_d = np.sqrt(gamma_d) * A
        P = _riccati(A_d, B, Q_P, R_P, max_iter, rtol)
        if P is None or not _positive_definite(P):
            continue
        if gamma_d < 1.0:
            logger.info("DARE konvergerte med diskontering γ_d=%.2f", gamma_d)
        BtP = B.T @ P
        K = la.solve(R_P + BtP @ B, BtP @ A_d, assume_a="pos")
        return P, K, gamma_d
    raise UnstabilizableError(f"Riccati-iterasjonen konvergerte ikke for γ_d ned til {DISCOUNT_LIMIT}")


# === STRAFF OG RESERVELOV ===

def terminal_penalty(x_N, data: TerminalData) -> float:
    """(x_N − x_st)ᵀP(x_N − x_st) i skalerte koordinater."""
    e = scale_state(x_N) - scale_state(data.x_st)
    return float(e @ data.P @ e)


def lqr_fallback(x_hat, data: TerminalData, bounds: Bounds) -> np.ndarray:
    """u = sat(u_st + K(x_st − x̂)), regnet i skalerte koordinater."""
    su = bounds.u_scale
    nu = np.asarray(data.u_st, float) / su + data.K @ (scale_state(data.x_st) - scale_state(x_hat))
    return bounds.clip_input(nu * su)


# === OPPDATERING ===

def operating_features(d) -> np.ndarray:
    """Normaliserte driftstrekk brukt til å avgjøre om P må regnes på nytt."""
    d = np.asarray(d, float)
    return np.array([d[T_AMB] / 50.0, d[V_VEH] / 30.0, d[I_B] / 100.0])


def needs_update(prev: Optional[TerminalData], d_N, modes: ModeFlags, cfg: TerminalConfig) -> bool:
    if prev is None or prev.modes != modes or not np.all(np.isfinite(prev.features)):
        return True
    return bool(np.linalg.norm(operating_features(d_N) - prev.features) >= cfg.skip_threshold)


def compute_terminal(x_hat, u_prev, z_N: StageParams, bounds: Bounds, weights: OcpWeights,
                     params: ParameterSet, dt: float = 1.0, cfg: TerminalConfig = TerminalConfig(),
                     prev: Optional[TerminalData] = None) -> TerminalData:
    """
    Målpar, linearisering og DARE ved z_N.

    Raises:
        SolverDivergedError: Målproblemet divergerte
        UnstabilizableError: DARE konvergerte ikke
    """
    x_guess = x_hat if prev is None else prev.x_st
    u_guess = u_prev if prev is None else prev.u_st
    x_st, u_st, s = solve_target(z_N, bounds, weights, params, x_guess, u_guess, dt, cfg)
    A, B = jacobians(x_st, u_st, z_N, dt, params)
    su = bounds.u_scale
    A_s = A * STATE_SCALE[None, :] / STATE_SCALE[:, None]
    B_s = B * su[None, :] / STATE_SCALE[:, None]
    gamma_init = DISCOUNT_SCHEDULE[0] if cfg.always_discount else 1.0
    if prev is not None:
        gamma_init = min(gamma_init, prev.gamma_d)
    P, K, gamma_d = solve_dare(A_s, B_s, weights.q_p, weights.r_p, gamma_init, cfg.dare_max_iter, cfg.dare_rtol)
    return TerminalData(x_st=x_st, u_st=u_st, s=s, A=A_s, B=B_s, P=P, K=K, gamma_d=gamma_d,
                        features=operating_features(z_N.d), modes=z_N.v)


def fallback_terminal(x_hat, u_prev, bounds: Bounds, weights: OcpWeights,
                      modes: Optional[ModeFlags] = None) -> TerminalData:
    """Nødterminal når ingen tidligere TerminalData finnes: P = Q_P, K = 0."""
    x_st = bounds.clip_state(x_hat)
    return TerminalData(
        x_st=x_st, u_st=bounds.clip_input(u_prev), s=np.zeros(NX),
        A=np.zeros((NX, NX)), B=np.zeros((NX, NU)), P=weights.q_p, K=np.zeros((NU, NX)),
        gamma_d=1.0, features=np.full(3, np.nan), modes=modes,
    )

