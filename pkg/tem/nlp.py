"""
Primal-dual indre-punkt-løser for glisne NLP-er med filterlinjesøk.

Problemform:
    min f(w)  s.t.  c_E(w) = 0,  c_I(w) ≥ 0,  lb ≤ w ≤ ub

Ulikhetene får interne slakkvariabler t ≥ 0 (c_I(w) − t = 0), slik at
løseren arbeider på x = [w; t] med bare likheter og enkle grenser.
Hvert Newton-steg løser det regulariserte KKT-systemet

    [ W + Σ + δ_w·I   Jᵀ     ] [dx]     [ ∇φ_μ + Jᵀy ]
    [ J               −δ_c·I ] [dy] = − [ c          ]

med scipy.sparse.linalg.splu. Barriereparameteren oppdateres monotont
(μ ← max(μ/5, tol/10)).
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DimensionMismatchError


logger = logging.getLogger(__name__)


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 100            # 0 = bare evaluer startpunktet
    tol: float = 1e-6
    mu_init: float = 0.1
    mu_warm: float = 1e-4
    mu_factor: float = 5.0
    kappa_eps: float = 10.0
    tau_min: float = 0.99
    reg_floor: float = 1e-8
    reg_growth: float = 10.0
    reg_max: float = 1e10
    bound_push: float = 1e-2
    warm_bound_push: float = 1e-6
    warm_start: bool = True
    diagnostics_path: Optional[str] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"Toleransen må være > 0 (fikk {self.tol})")
        if self.max_iter < 0:
            raise ValueError(f"max_iter kan ikke være negativ (fikk {self.max_iter})")


class NlpInstance:
    """
    Grensesnitt for et NLP. Underklasser setter n, m_eq, m_in, lb, ub og
    implementerer evalueringene; Jacobi- og Hesse-matriser er scipy.sparse.
    """
    n: int
    m_eq: int
    m_in: int
    lb: np.ndarray
    ub: np.ndarray
    layout = None

    def objective(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def constraints(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def jacobians(self, w: np.ndarray):
        raise NotImplementedError

    def hessian(self, w: np.ndarray):
        raise NotImplementedError

    def hessian_update(self, w_old: np.ndarray, w_new: np.ndarray) -> None:
        """Kvasi-Newton-korreksjon etter et akseptert steg (standard: ingen)."""

    def breakdown(self, w: np.ndarray) -> dict:
        return {"objective": self.objective(w)}

    def initial_guess(self) -> np.ndarray:
        lb = np.where(np.isfinite(self.lb), self.lb, -np.inf)
        ub = np.where(np.isfinite(self.ub), self.ub, np.inf)
        return np.clip(np.zeros(self.n), lb, ub)


class QuadraticProgram(NlpInstance):
    """min ½wᵀHw + gᵀw  s.t.  A_E w = b_E,  A_I w ≥ b_I,  lb ≤ w ≤ ub."""

    def __init__(self, H, g, A_eq=None, b_eq=None, A_in=None, b_in=None, lb=None, ub=None):
        self.H = sp.csc_matrix(H)
        self.g = np.asarray(g, dtype=float)
        self.n = len(self.g)
        self.A_eq = sp.csr_matrix(A_eq) if A_eq is not None else sp.csr_matrix((0, self.n))
        self.b_eq = np.asarray(b_eq, dtype=float) if b_eq is not None else np.zeros(0)
        self.A_in = sp.csr_matrix(A_in) if A_in is not None else sp.csr_matrix((0, self.n))
        self.b_in = np.asarray(b_in, dtype=float) if b_in is not None else np.zeros(0)
        self.m_eq, self.m_in = self.A_eq.shape[0], self.A_in.shape[0]
        self.lb = np.full(self.n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
        self.ub = np.full(self.n, np.inf) if ub is None else np.asarray(ub, dtype=float)

    def objective(self, w):
        return float(0.5 * w @ (self.H @ w) + self.g @ w)

    def gradient(self, w):
        return self.H @ w + self.g

    def constraints(self, w):
        return self.A_eq @ w - self.b_eq, self.A_in @ w - self.b_in

    def jacobians(self, w):
        return self.A_eq, self.A_in

    def hessian(self, w):
        return self.H


@dataclass
class NlpGuess:
    """Primal/dual startpunkt. Tomme dualer betyr kaldstart for den delen."""
    w: np.ndarray
    y_eq: Optional[np.ndarray] = None
    y_in: Optional[np.ndarray] = None
    z_lb: Optional[np.ndarray] = None
    z_ub: Optional[np.ndarray] = None


@dataclass
class OcpSolution:
    w: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    z_lb: np.ndarray
    z_ub: np.ndarray
    status: Status
    iterations: int
    wall_time: float
    objective: float
    breakdown: dict = field(default_factory=dict)
    kkt_error: float = np.inf
    layout: object = None

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED

    @property
    def x(self) -> Optional[np.ndarray]:
        return None if self.layout is None else self.layout.states(self.w)

    @property
    def u(self) -> Optional[np.ndarray]:
        return None if self.layout is None else self.layout.inputs(self.w)

    @property
    def slacks(self) -> Optional[dict]:
        return None if self.layout is None else self.layout.slacks(self.w)


# === LØSER ===

class _Augmented:
    """x = [w; t] med c(x) = [c_E(w); c_I(w) − t]."""

    def __init__(self, nlp: NlpInstance):
        self.nlp = nlp
        self.n, self.m_eq, self.m_in = nlp.n, nlp.m_eq, nlp.m_in
        self.nx = self.n + self.m_in
        self.m = self.m_eq + self.m_in
        self.lb = np.concatenate([np.asarray(nlp.lb, float), np.zeros(self.m_in)])
        self.ub = np.concatenate([np.asarray(nlp.ub, float), np.full(self.m_in, np.inf)])
        self.has_lb = np.isfinite(self.lb)
        self.has_ub = np.isfinite(self.ub)
        if np.any(self.lb[self.has_lb & self.has_ub] > self.ub[self.has_lb & self.has_ub]):
            raise ValueError("Tom boks: lb > ub")

    def f(self, x):
        return self.nlp.objective(x[:self.n])

    def grad(self, x):
        return np.concatenate([self.nlp.gradient(x[:self.n]), np.zeros(self.m_in)])

    def c(self, x):
        c_eq, c_in = self.nlp.constraints(x[:self.n])
        return np.concatenate([np.asarray(c_eq, float), np.asarray(c_in, float) - x[self.n:]])

    def jac(self, x):
        J_eq, J_in = self.nlp.jacobians(x[:self.n])
        blocks = []
        if self.m_eq:
            blocks.append(sp.hstack([sp.csr_matrix(J_eq), sp.csr_matrix((self.m_eq, self.m_in))]))
        if self.m_in:
            blocks.append(sp.hstack([sp.csr_matrix(J_in), -sp.identity(self.m_in, format="csr")]))
        if not blocks:
            return sp.csr_matrix((0, self.nx))
        return sp.vstack(blocks, format="csr")

    def hess(self, x):
        H = sp.csr_matrix(self.nlp.hessian(x[:self.n]))
        if self.m_in:
            H = sp.block_diag([H, sp.csr_matrix((self.m_in, self.m_in))], format="csr")
        return H


def _push_inside(x, lb, ub, kappa):
    x = np.array(x, dtype=float)
    has_lb, has_ub = np.isfinite(lb), np.isfinite(ub)
    width = np.where(has_lb & has_ub, ub - lb, np.inf)
    p_l = np.minimum(kappa * np.maximum(1.0, np.abs(np.where(has_lb, lb, 0.0))), 0.5 * width)
    p_u = np.minimum(kappa * np.maximum(1.0, np.abs(np.where(has_ub, ub, 0.0))), 0.5 * width)
    x = np.where(has_lb, np.maximum(x, lb + p_l), x)
    x = np.where(has_ub, np.minimum(x, ub - p_u), x)
    return x


def _fraction_to_boundary(v, dv, tau) -> float:
    """Største α ≤ 1 med v + α·dv ≥ (1 − τ)·v for v > 0."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


class InteriorPointSolver:
    """Én løser per problem; arbeidsområdet deles ikke."""

    # filterkonstanter
    GAMMA_THETA = 1e-5
    GAMMA_PHI = 1e-5
    ETA_PHI = 1e-4
    S_THETA = 1.1
    S_PHI = 2.3
    DELTA = 1.0
    KAPPA_SIGMA = 1e10
    ALPHA_MIN = 1e-12
    S_MAX = 100.0

    def __init__(self, nlp: NlpInstance, opts: SolverOptions = SolverOptions()):
        self.nlp = nlp
        self.opts = opts
        self.aug = _Augmented(nlp)
        self.history: list[dict] = []

    # --- hjelpere ---

    def _slacks(self, x):
        a = self.aug
        s_l = np.where(a.has_lb, x - np.where(a.has_lb, a.lb, 0.0), 1.0)
        s_u = np.where(a.has_ub, np.where(a.has_ub, a.ub, 0.0) - x, 1.0)
        return s_l, s_u

    def _barrier(self, x, mu) -> float:
        s_l, s_u = self._slacks(x)
        if np.any(s_l[self.aug.has_lb] <= 0) or np.any(s_u[self.aug.has_ub] <= 0):
            return np.inf
        f = self.aug.f(x)
        return f - mu * (np.sum(np.log(s_l[self.aug.has_lb])) + np.sum(np.log(s_u[self.aug.has_ub])))

    def _kkt_error(self, x, y, zl, zu, g, J, c, mu) -> tuple[float, float, float, float]:
        a = self.aug
        s_l, s_u = self._slacks(x)
        n_b = int(a.has_lb.sum() + a.has_ub.sum())
        z_sum = np.abs(zl).sum() + np.abs(zu).sum()
        s_d = max(self.S_MAX, (np.abs(y).sum() + z_sum) / max(1, len(y) + n_b)) / self.S_MAX
        s_c = max(self.S_MAX, z_sum / max(1, n_b)) / self.S_MAX
        dual = g + (J.T @ y if len(y) else 0.0) - zl + zu
        dual_inf = float(np.max(np.abs(dual))) / s_d if len(dual) else 0.0
        primal_inf = float(np.max(np.abs(c))) if len(c) else 0.0
        comp = 0.0
        if a.has_lb.any():
            comp = max(comp, float(np.max(np.abs(s_l[a.has_lb] * zl[a.has_lb] - mu))))
        if a.has_ub.any():
            comp = max(comp, float(np.max(np.abs(s_u[a.has_ub] * zu[a.has_ub] - mu))))
        comp /= s_c
        return max(dual_inf, primal_inf, comp), dual_inf, primal_inf, comp

    def _factor_and_solve(self, W, sigma, J, rhs, reg):
        """Løs KKT-systemet; øk regulariseringen til faktoriseringen lykkes og krumningen er positiv."""
        a = self.aug
        delta_w = reg
        delta_c = 0.0
        while True:
            top = W + sp.diags(sigma + delta_w)
            if a.m:
                lower = -delta_c * sp.identity(a.m, format="csr") if delta_c else sp.csr_matrix((a.m, a.m))
                K = sp.bmat([[top, J.T], [J, lower]], format="csc")
            else:
                K = sp.csc_matrix(top)
            try:
                sol = splu(K).solve(rhs)
            except RuntimeError:
                sol = None
            if sol is not None and np.all(np.isfinite(sol)):
                dx = sol[:a.nx]
                curvature = float(dx @ (top @ dx))
                if curvature >= 1e-12 * float(dx @ dx):
                    return sol, delta_w
            delta_c = max(delta_c, self.opts.reg_floor)
            delta_w = max(self.opts.reg_floor, delta_w * self.opts.reg_growth)
            logger.debug("Øker KKT-regularisering til δ_w=%.1e", delta_w)
            if delta_w > self.opts.reg_max:
                return None, delta_w

    def _filter_acceptable(self, filt, theta, phi) -> bool:
        return all(theta < th or phi < ph for th, ph in filt)

    # --- hovedløkke ---

    def solve(self, init: Optional[NlpGuess] = None) -> OcpSolution:
        start = time.perf_counter()
        a, opts = self.aug, self.opts
        nlp = self.nlp

        warm = (init is not None and opts.warm_start
                and all(v is not None for v in (init.y_eq, init.y_in, init.z_lb, init.z_ub)))
        w0 = nlp.initial_guess() if init is None else np.asarray(init.w, dtype=float)
        if len(w0) != a.n:
            raise DimensionMismatchError(f"Startpunktet har lengde {len(w0)}, forventet {a.n}")

        push = opts.warm_bound_push if warm else opts.bound_push
        w0 = _push_inside(w0, a.lb[:a.n], a.ub[:a.n], push)
        _, c_in0 = nlp.constraints(w0)
        t0 = np.maximum(np.asarray(c_in0, float), push * 10)
        x = np.concatenate([w0, t0])
        mu = opts.mu_warm if warm else opts.mu_init

        s_l, s_u = self._slacks(x)
        if warm:
            y = np.concatenate([init.y_eq, init.y_in])
            zl = np.zeros(a.nx)
            zu = np.zeros(a.nx)
            zl[:a.n] = init.z_lb
            zu[:a.n] = init.z_ub
            zl[a.n:] = np.maximum(-init.y_in, 0.0)
            zl = np.where(a.has_lb, np.maximum(zl, 0.1 * mu / s_l), 0.0)
            zu = np.where(a.has_ub, np.maximum(zu, 0.1 * mu / s_u), 0.0)
        else:
            y = np.zeros(a.m)
            zl = np.where(a.has_lb, 1.0, 0.0)
            zu = np.where(a.has_ub, 1.0, 0.0)

        status = Status.MAX_ITER
        filt: list[tuple[float, float]] = []
        theta_max = theta_min = None
        reg = 0.0
        kkt = np.inf
        it = 0
        self.history = []

        while True:
            if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > 1e20:
                status = Status.DIVERGED
                break
            f = a.f(x)
            g = a.grad(x)
            c = a.c(x)
            if not (np.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(c))):
                status = Status.DIVERGED
                break
            J = a.jac(x)

            kkt, dual_inf, primal_inf, comp = self._kkt_error(x, y, zl, zu, g, J, c, 0.0)
            if kkt <= opts.tol:
                status = Status.CONVERGED
                break
            if it >= opts.max_iter:
                break

            # barriereoppdatering, gjentatt så lenge delproblemet er løst
            mu_changed = False
            while mu > opts.tol / 10.0:
                e_mu = self._kkt_error(x, y, zl, zu, g, J, c, mu)[0]
                if e_mu > opts.kappa_eps * mu:
                    break
                mu = max(mu / opts.mu_factor, opts.tol / 10.0)
                mu_changed = True
            if mu_changed or theta_max is None:
                theta0 = float(np.abs(c).sum())
                theta_max = 1e4 * max(1.0, theta0)
                theta_min = 1e-4 * max(1.0, theta0)
                filt = [(theta_max, -np.inf)]

            s_l, s_u = self._slacks(x)
            sig_l = np.where(a.has_lb, zl / s_l, 0.0)
            sig_u = np.where(a.has_ub, zu / s_u, 0.0)
            grad_phi = g - np.where(a.has_lb, mu / s_l, 0.0) + np.where(a.has_ub, mu / s_u, 0.0)
            r_dual = grad_phi + (J.T @ y if a.m else 0.0)
            rhs = -np.concatenate([r_dual, c])
            W = a.hess(x)

            step = None
            for _ in range(12):
                sol, reg_used = self._factor_and_solve(W, sig_l + sig_u, J, rhs, reg)
                if sol is None:
                    break
                dx, dy = sol[:a.nx], sol[a.nx:]
                dzl = np.where(a.has_lb, mu / s_l - zl - sig_l * dx, 0.0)
                dzu = np.where(a.has_ub, mu / s_u - zu + sig_u * dx, 0.0)

                tau = max(opts.tau_min, 1.0 - mu)
                alpha_max = min(
                    _fraction_to_boundary(s_l[a.has_lb], dx[a.has_lb], tau),
                    _fraction_to_boundary(s_u[a.has_ub], -dx[a.has_ub], tau),
                )
                alpha_z = min(
                    _fraction_to_boundary(zl[a.has_lb], dzl[a.has_lb], tau),
                    _fraction_to_boundary(zu[a.has_ub], dzu[a.has_ub], tau),
                )
                alpha = self._line_search(x, dx, mu, c, grad_phi, alpha_max, filt, theta_min)
                if alpha is not None:
                    step = (dx, dy, dzl, dzu, alpha, alpha_z)
                    reg = reg_used / self.opts.reg_growth if reg_used > opts.reg_floor else 0.0
                    break
                reg = max(opts.reg_floor * 1e4, reg_used * self.opts.reg_growth)
                logger.debug("Linjesøk feilet, øker regularisering til %.1e", reg)

            if step is None:
                logger.warning("Indre-punkt-løseren stoppet: linjesøket fant ikke akseptabelt steg")
                break

            dx, dy, dzl, dzu, alpha, alpha_z = step
            x_new = x + alpha * dx
            y = y + alpha * dy
            zl = zl + alpha_z * dzl
            zu = zu + alpha_z * dzu
            # hold z innenfor κ_Σ-korridoren rundt μ/s
            s_l, s_u = self._slacks(x_new)
            zl = np.where(a.has_lb, np.clip(zl, mu / (self.KAPPA_SIGMA * s_l), self.KAPPA_SIGMA * mu / s_l), 0.0)
            zu = np.where(a.has_ub, np.clip(zu, mu / (self.KAPPA_SIGMA * s_u), self.KAPPA_SIGMA * mu / s_u), 0.0)
            nlp.hessian_update(x[:a.n], x_new[:a.n])
            x = x_new
            it += 1

            row = {"iter": it, "mu": mu, "objective": f, "primal_inf": primal_inf,
                   "dual_inf": dual_inf, "compl": comp, "alpha": alpha, "reg": reg}
            self.history.append(row)
            logger.debug("it=%d mu=%.1e f=%.6g inf_pr=%.2e inf_du=%.2e alpha=%.2e",
                         it, mu, f, primal_inf, dual_inf, alpha)

        if opts.diagnostics_path and self.history:
            pd.DataFrame(self.history).to_csv(opts.diagnostics_path, index=False)

        w = x[:a.n]
        finite = np.all(np.isfinite(w))
        objective = float(nlp.objective(w)) if finite else np.nan
        return OcpSolution(
            w=w,
            y_eq=y[:a.m_eq],
            y_in=y[a.m_eq:],
            z_lb=zl[:a.n],
            z_ub=zu[:a.n],
            status=status,
            iterations=it,
            wall_time=time.perf_counter() - start,
            objective=objective,
            breakdown=nlp.breakdown(w) if finite else {},
            kkt_error=float(kkt),
            layout=nlp.layout,
        )

    def _line_search(self, x, dx, mu, c, grad_phi, alpha_max, filt, theta_min) -> Optional[float]:
        a = self.aug
        theta = float(np.abs(c).sum())
        phi = self._barrier(x, mu)
        slope = float(grad_phi @ dx)
        alpha = alpha_max
        while alpha >= self.ALPHA_MIN:
            x_t = x + alpha * dx
            phi_t = self._barrier(x_t, mu)
            c_t = a.c(x_t)
            theta_t = float(np.abs(c_t).sum()) if len(c_t) else 0.0
            if np.isfinite(phi_t) and np.isfinite(theta_t) and self._filter_acceptable(filt, theta_t, phi_t):
                switching = slope < 0 and alpha * (-slope) ** self.S_PHI > self.DELTA * theta ** self.S_THETA
                if switching and theta <= theta_min:
                    if phi_t <= phi + self.ETA_PHI * alpha * slope:
                        return alpha
                elif theta_t <= (1 - self.GAMMA_THETA) * theta or phi_t <= phi - self.GAMMA_PHI * theta:
                    filt.append(((1 - self.GAMMA_THETA) * theta, phi - self.GAMMA_PHI * theta))
                    return alpha
            alpha *= 0.5
        return None


def solve(instance: NlpInstance, init: Optional[NlpGuess] = None,
          opts: SolverOptions = SolverOptions()) -> OcpSolution:
    """Løs instance fra init (kaldstart når init er None)."""
    return InteriorPointSolver(instance, opts).solve(init)


def shift_warm_start(prev: OcpSolution, layout, tail: str = "hold") -> NlpGuess:
    """
    Forskyv forrige løsning ett steg frem i tid.

    layout må kunne forskyve primal-, likhets- og ulikhetsvektorer og eie
    horisontlengden N. Siste steg dupliseres fra N−1 (tail="hold").

    Raises:
        DimensionMismatchError: Horisonten er endret siden forrige løsning
    """
    if tail != "hold":
        raise ValueError(f"Ukjent hale-policy: {tail}")
    if prev.layout is None or prev.layout.N != layout.N or len(prev.w) != layout.n:
        raise DimensionMismatchError("Forrige løsning passer ikke til ny horisont")
    return NlpGuess(
        w=layout.shift_primal(prev.w),
        y_eq=layout.shift_eq(prev.y_eq),
        y_in=layout.shift_ineq(prev.y_in),
        z_lb=layout.shift_primal(prev.z_lb),
        z_ub=layout.shift_primal(prev.z_ub),
    )
