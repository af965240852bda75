"""
Bygger det endelige-horisont optimalstyringsproblemet som et glisent NLP.

Beslutningsvektoren er skalert (temperaturer (T − 273.15)/50, trykk /1e5,
pådrag delt på boksbredden) og lagt ut blokkvis:

    [ X (x_1..x_N) | U (u_0..u_{N−1}) | S_xl | S_xu | S_y | S_dup | S_ddn ]

Dynamikken er flerskyting med x_0 = x̂ fast. Myke preferansebokser,
algebraiske rader g ≥ −s og ratebegrensninger har hver sin slakk med
kvadratisk straff. Hard bokser er variabelgrenser og relakseres aldri.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import ad
from .discretize import StageParams, seeded, step
from .errors import InfeasibleBoxesError
from .model import (
    NU, NX, P_IN, P_OUT, T_CAIR, total_power,
)
from .nlp import NlpInstance
from .params import ParameterSet


logger = logging.getLogger(__name__)


# === SKALERING ===

STATE_SCALE = np.array([50.0, 50.0, 50.0, 1.0, 50.0, 1e5, 1e5, 50.0, 50.0])
STATE_OFFSET = np.array([273.15, 273.15, 273.15, 0.0, 273.15, 0.0, 0.0, 273.15, 273.15])
N_G = 2  # trykkforhold og metningsgap


def scale_state(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[-1] == NX:
        return (x - STATE_OFFSET) / STATE_SCALE
    return (x - STATE_OFFSET.reshape((NX,) + (1,) * (x.ndim - 1))) / STATE_SCALE.reshape((NX,) + (1,) * (x.ndim - 1))


def unscale_state(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 2 and xi.shape[-1] == NX:
        return xi * STATE_SCALE + STATE_OFFSET
    return xi * STATE_SCALE.reshape((NX,) + (1,) * (xi.ndim - 1)) + STATE_OFFSET.reshape((NX,) + (1,) * (xi.ndim - 1))


# === KONFIGURASJON ===

def _arr(values) -> np.ndarray:
    return np.asarray(values, dtype=float)


@dataclass
class Bounds:
    """Harde bokser, myke preferansebokser (±inf = udefinert) og ratebegrensninger."""
    x_min: np.ndarray = field(default_factory=lambda: _arr(
        [233.15, 233.15, 233.15, 0.05, 233.15, 1.05e5, 1.5e5, 233.15, 233.15]))
    x_max: np.ndarray = field(default_factory=lambda: _arr(
        [423.15, 398.15, 398.15, 1.0, 333.15, 1.5e6, 2.8e6, 333.15, 343.15]))
    x_pref_lo: np.ndarray = field(default_factory=lambda: _arr(
        [-np.inf, -np.inf, -np.inf, -np.inf, 253.15, -np.inf, -np.inf, -np.inf, 292.65]))
    x_pref_hi: np.ndarray = field(default_factory=lambda: _arr(
        [np.inf, np.inf, np.inf, np.inf, 318.15, np.inf, np.inf, np.inf, 295.65]))
    u_min: np.ndarray = field(default_factory=lambda: _arr([0.0, 0.02, 300.0, 300.0, 0.0, 0.0]))
    u_max: np.ndarray = field(default_factory=lambda: _arr([8000.0, 0.25, 4000.0, 4000.0, 6000.0, 3000.0]))
    du_max: np.ndarray = field(default_factory=lambda: _arr([1000.0, 0.05, 1000.0, 1000.0, 2000.0, 1000.0]))
    ratio_max: float = 10.0
    sat_margin: float = 5.0

    def __post_init__(self):
        for name in ("x_min", "x_max", "x_pref_lo", "x_pref_hi", "u_min", "u_max", "du_max"):
            setattr(self, name, _arr(getattr(self, name)))

    def validate(self) -> "Bounds":
        """
        Raises:
            InfeasibleBoxesError: En hard boks er tom eller preferanseboksen ligger utenfor
        """
        if np.any(self.x_min > self.x_max):
            raise InfeasibleBoxesError(f"Tom tilstandsboks ved indeks {np.flatnonzero(self.x_min > self.x_max)}")
        if np.any(self.u_min >= self.u_max):
            raise InfeasibleBoxesError(f"Tom pådragsboks ved indeks {np.flatnonzero(self.u_min >= self.u_max)}")
        soft = self.soft_states
        lo = np.where(np.isfinite(self.x_pref_lo), self.x_pref_lo, self.x_min)
        hi = np.where(np.isfinite(self.x_pref_hi), self.x_pref_hi, self.x_max)
        if np.any(lo[soft] < self.x_min[soft]) or np.any(hi[soft] > self.x_max[soft]) or np.any(lo > hi):
            raise InfeasibleBoxesError("Preferanseboksen må ligge innenfor den harde boksen")
        if np.any(self.du_max <= 0):
            raise InfeasibleBoxesError("Ratebegrensningene må være > 0")
        return self

    @property
    def soft_states(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.x_pref_lo) | np.isfinite(self.x_pref_hi))

    @property
    def u_scale(self) -> np.ndarray:
        return self.u_max - self.u_min

    def clip_input(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.u_min, self.u_max)

    def clip_state(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.x_min, self.x_max)

    def contains_state(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.x_min - tol) and np.all(x <= self.x_max + tol))


@dataclass
class OcpWeights:
    """Vekter på skalerte størrelser; w_pwr virker på P_TEM i W."""
    w_st: np.ndarray = field(default_factory=lambda: _arr([0, 0, 0, 0, 0, 0, 0, 0, 2000.0]))
    t_ref: float = 294.15
    w_pwr: float = 1e-3
    r: np.ndarray = field(default_factory=lambda: np.full(NU, 1e-6))
    r_du: np.ndarray = field(default_factory=lambda: np.full(NU, 1e-4))
    w_xl: float = 1e3
    w_xu: float = 1e3
    w_y: float = 1e3
    w_du: float = 1e3
    beta_tie: float = 1e-3
    r_tie: np.ndarray = field(default_factory=lambda: np.ones(NU))
    q_p_reg: float = 1e-6
    r_p_reg: float = 1e-6
    lambda_t: float = 2000.0
    rho_2: float = 1e4
    rho_u: float = 1e-2

    def __post_init__(self):
        for name in ("w_st", "r", "r_du", "r_tie"):
            setattr(self, name, _arr(getattr(self, name)))
        if np.any(self.w_st < 0) or np.any(self.r < 0) or np.any(self.r_du < 0) or np.any(self.r_tie < 0):
            raise ValueError("Vektmatrisene må være positivt semidefinitte")
        if not self.w_pwr > 0:
            raise ValueError("w_pwr må være > 0")
        if min(self.w_xl, self.w_xu, self.w_y, self.w_du) <= 0:
            raise ValueError("Slakkvektene må være strengt positive")

    @property
    def x_ref(self) -> np.ndarray:
        ref = STATE_OFFSET.copy()
        ref[T_CAIR] = self.t_ref
        return ref

    @property
    def q_p(self) -> np.ndarray:
        return np.diag(self.w_st) + self.q_p_reg * np.eye(NX)

    @property
    def r_p(self) -> np.ndarray:
        return np.diag(self.r) + self.r_p_reg * np.eye(NU)


# === SCENEKOSTNAD ===

def stage_cost_terms(x_k, u_k, u_prev, z_k: StageParams, weights: OcpWeights, bounds: Bounds,
                     params: ParameterSet) -> dict:
    """De fire leddene i scenekostnaden, i skalerte koordinater."""
    su = bounds.u_scale
    dxi = scale_state(x_k) - scale_state(weights.x_ref)
    nu, nu_prev = np.asarray(u_k, float) / su, np.asarray(u_prev, float) / su
    return {
        "tracking": float(np.sum(weights.w_st * dxi ** 2)),
        "power": float(weights.w_pwr * total_power(np.asarray(x_k, float), np.asarray(u_k, float),
                                                   z_k.theta, params)),
        "input": float(np.sum(weights.r * nu ** 2)),
        "rate": float(np.sum(weights.r_du * (nu - nu_prev) ** 2)),
    }


def stage_cost(x_k, u_k, u_prev, z_k: StageParams, weights: OcpWeights, bounds: Bounds,
               params: ParameterSet) -> float:
    """ℓ_k = sporing + w_pwr·P_TEM + uᵀRu + rateledd."""
    terms = stage_cost_terms(x_k, u_k, u_prev, z_k, weights, bounds, params)
    return terms["tracking"] + terms["power"] + terms["input"] + terms["rate"]


# === LAYOUT ===

@dataclass(frozen=True)
class OcpLayout:
    N: int
    soft: tuple
    u_scale: tuple

    @property
    def ns(self) -> int:
        return len(self.soft)

    @property
    def blocks(self) -> list[tuple[str, int]]:
        """(navn, bredde per steg) i rekkefølge; alle blokker har N steg."""
        return [("X", NX), ("U", NU), ("S_xl", self.ns), ("S_xu", self.ns), ("S_y", N_G),
                ("S_dup", NU), ("S_ddn", NU)]

    @property
    def offsets(self) -> dict:
        out, pos = {}, 0
        for name, width in self.blocks:
            out[name] = (pos, width)
            pos += self.N * width
        return out

    @property
    def n(self) -> int:
        return self.N * sum(width for _, width in self.blocks)

    @property
    def m_eq(self) -> int:
        return self.N * NX

    @property
    def ineq_blocks(self) -> list[tuple[str, int]]:
        return [("pref_lo", self.ns), ("pref_hi", self.ns), ("g", N_G), ("rate_up", NU), ("rate_dn", NU)]

    @property
    def m_in(self) -> int:
        return self.N * sum(width for _, width in self.ineq_blocks)

    def block(self, w, name: str) -> np.ndarray:
        start, width = self.offsets[name]
        return np.asarray(w[start:start + self.N * width]).reshape(self.N, width)

    def index(self, name: str, k, j) -> np.ndarray:
        """Globale indekser til blokk name, steg k, komponent j (kringkastes)."""
        start, width = self.offsets[name]
        return start + np.asarray(k) * width + np.asarray(j)

    def states(self, w) -> np.ndarray:
        """x_1..x_N i fysiske enheter, form (N, 9)."""
        return unscale_state(self.block(w, "X"))

    def inputs(self, w) -> np.ndarray:
        """u_0..u_{N−1} i fysiske enheter, form (N, 6)."""
        return self.block(w, "U") * np.asarray(self.u_scale)

    def slacks(self, w) -> dict:
        return {name: self.block(w, name) for name, _ in self.blocks[2:]}

    @staticmethod
    def _shift(arr: np.ndarray) -> np.ndarray:
        return np.vstack([arr[1:], arr[-1:]])

    def _shift_blocks(self, vec, blocks) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        parts, pos = [], 0
        for _, width in blocks:
            size = self.N * width
            parts.append(self._shift(vec[pos:pos + size].reshape(self.N, width)).ravel())
            pos += size
        return np.concatenate(parts)

    def shift_primal(self, w) -> np.ndarray:
        return self._shift_blocks(w, self.blocks)

    def shift_eq(self, y) -> np.ndarray:
        return self._shift_blocks(y, [("dyn", NX)])

    def shift_ineq(self, y) -> np.ndarray:
        return self._shift_blocks(y, self.ineq_blocks)


# === INSTANS ===

class OcpInstance(NlpInstance):
    """
    OCP-et som NlpInstance. Hesse-matrisen er Gauss-Newton for de kvadratiske
    leddene pluss en dempet BFGS-blokk per steg for effektleddet;
    krumningen fra dynamikken ignoreres.
    """

    BFGS_INIT = 1.0

    def __init__(self, N: int, x_hat, u_prev, stages: StageParams, bounds: Bounds, weights: OcpWeights,
                 x_st, u_st, P, params: ParameterSet, dt: float = 1.0):
        if N < 2:
            raise ValueError(f"Horisonten må være minst 2 (fikk {N})")
        bounds.validate()
        d = np.asarray(stages.d, dtype=float)
        if d.shape != (6, N):
            raise ValueError(f"Forstyrrelsene må ha form (6, {N}), fikk {d.shape}")
        P = np.asarray(P, dtype=float)
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(x_st)) and np.all(np.isfinite(u_st))):
            raise ValueError("Terminaldata må være endelige")
        np.linalg.cholesky(0.5 * (P + P.T))

        self.N, self.dt, self.params = N, dt, params
        self.stages = StageParams(d, stages.v, np.asarray(stages.gamma, float), stages.theta)
        self.bounds, self.weights = bounds, weights
        self.su = bounds.u_scale
        self.layout = OcpLayout(N, tuple(int(i) for i in bounds.soft_states), tuple(self.su))
        L = self.layout
        self.n, self.m_eq, self.m_in = L.n, L.m_eq, L.m_in

        self.x_hat = np.asarray(x_hat, dtype=float)
        self.xi_hat = scale_state(self.x_hat)
        self.nu_prev = np.asarray(u_prev, dtype=float) / self.su
        self.xi_st = scale_state(x_st)
        self.nu_st = np.asarray(u_st, dtype=float) / self.su
        self.P = 0.5 * (P + P.T)
        self.xi_ref = scale_state(weights.x_ref)

        soft = np.asarray(L.soft, dtype=int)
        self.xi_lo = scale_state(np.where(np.isfinite(bounds.x_pref_lo), bounds.x_pref_lo, bounds.x_min))[soft]
        self.xi_hi = scale_state(np.where(np.isfinite(bounds.x_pref_hi), bounds.x_pref_hi, bounds.x_max))[soft]
        self.dnu_max = bounds.du_max / self.su

        lb, ub = np.zeros(self.n), np.full(self.n, np.inf)
        xs, us = L.offsets["X"][0], L.offsets["U"][0]
        lb[xs:xs + N * NX] = np.tile(scale_state(bounds.x_min), N)
        ub[xs:xs + N * NX] = np.tile(scale_state(bounds.x_max), N)
        lb[us:us + N * NU] = np.tile(bounds.u_min / self.su, N)
        ub[us:us + N * NU] = np.tile(bounds.u_max / self.su, N)
        self.lb, self.ub = lb, ub

        self._bfgs = np.tile(self.BFGS_INIT * np.eye(NX + NU), (N, 1, 1))
        self._cache: dict = {}
        self._static_hessian = self._build_static_hessian()

    # --- evaluering ---

    def _trajectories(self, w):
        L = self.layout
        X = L.block(w, "X")
        U = L.block(w, "U")
        x_prev = unscale_state(np.vstack([self.xi_hat, X[:-1]])).T     # (9, N)
        u_phys = (U * self.su).T                                       # (6, N)
        return X, U, x_prev, u_phys

    def _evaluate(self, w, derivatives: bool = False) -> dict:
        key = (w.tobytes(), derivatives)
        if key in self._cache:
            return self._cache[key]
        if not derivatives and (w.tobytes(), True) in self._cache:
            return self._cache[(w.tobytes(), True)]

        X, U, x_prev, u_phys = self._trajectories(w)
        z, theta = self.stages, self.stages.theta
        if derivatives:
            xd, ud = seeded(x_prev, u_phys)
            phi = step(xd, ud, z, self.dt, self.params, smooth=True)
            power = total_power(xd, ud, theta, self.params)
            tangent = np.moveaxis(ad.jacobian(phi), 1, 0)             # (N, 9, 15)
            ptan = ad.jacobian(power)                                  # (N, 15)
            out = {
                "phi": ad.value(phi).T,
                "power": np.array(ad.value(power)),
                "A": tangent[:, :, :NX],
                "B": tangent[:, :, NX:],
                "dP": np.hstack([ptan[:, :NX] * STATE_SCALE, ptan[:, NX:] * self.su]),
            }
        else:
            phi = step(x_prev, u_phys, z, self.dt, self.params, smooth=True)
            out = {"phi": np.asarray(phi).T, "power": np.asarray(total_power(x_prev, u_phys, theta, self.params))}
        out["X"], out["U"] = X, U
        if len(self._cache) > 4:
            self._cache.clear()
        self._cache[key] = out
        return out

    def breakdown(self, w) -> dict:
        L, wt = self.layout, self.weights
        ev = self._evaluate(w)
        X, U = ev["X"], ev["U"]
        xi_track = np.vstack([self.xi_hat, X[:-1]])                    # ξ_0..ξ_{N−1}
        nu_prev = np.vstack([self.nu_prev, U[:-1]])
        e_N = X[-1] - self.xi_st
        e_tie = U[-1] - self.nu_st
        s = L.slacks(w)
        return {
            "tracking": float(np.sum(wt.w_st * (xi_track - self.xi_ref) ** 2)),
            "power": float(wt.w_pwr * np.sum(ev["power"])),
            "input": float(np.sum(wt.r * U ** 2)),
            "rate": float(np.sum(wt.r_du * (U - nu_prev) ** 2)),
            "terminal": float(e_N @ self.P @ e_N),
            "tie": float(wt.beta_tie * np.sum(wt.r_tie * e_tie ** 2)),
            "slack_xl": float(wt.w_xl * np.sum(s["S_xl"] ** 2)),
            "slack_xu": float(wt.w_xu * np.sum(s["S_xu"] ** 2)),
            "slack_y": float(wt.w_y * np.sum(s["S_y"] ** 2)),
            "slack_du": float(wt.w_du * (np.sum(s["S_dup"] ** 2) + np.sum(s["S_ddn"] ** 2))),
        }

    def objective(self, w) -> float:
        return float(sum(self.breakdown(w).values()))

    def gradient(self, w) -> np.ndarray:
        L, wt, N = self.layout, self.weights, self.N
        ev = self._evaluate(w, derivatives=True)
        X, U = ev["X"], ev["U"]
        gX = np.zeros((N, NX))
        gU = np.zeros((N, NU))

        # sporing på ξ_1..ξ_{N−1}, terminal på ξ_N
        gX[:-1] += 2.0 * wt.w_st * (X[:-1] - self.xi_ref)
        gX[-1] += 2.0 * self.P @ (X[-1] - self.xi_st)
        # effekt: P_k avhenger av (ξ_k, ν_k), ξ_0 er fast
        dP = wt.w_pwr * ev["dP"]
        gX[:-1] += dP[1:, :NX]
        gU += dP[:, NX:]
        gU += 2.0 * wt.r * U
        nu_prev = np.vstack([self.nu_prev, U[:-1]])
        rate = 2.0 * wt.r_du * (U - nu_prev)
        gU += rate
        gU[:-1] -= rate[1:]
        gU[-1] += 2.0 * wt.beta_tie * wt.r_tie * (U[-1] - self.nu_st)

        s = L.slacks(w)
        return np.concatenate([
            gX.ravel(), gU.ravel(),
            (2.0 * wt.w_xl * s["S_xl"]).ravel(), (2.0 * wt.w_xu * s["S_xu"]).ravel(),
            (2.0 * wt.w_y * s["S_y"]).ravel(),
            (2.0 * wt.w_du * s["S_dup"]).ravel(), (2.0 * wt.w_du * s["S_ddn"]).ravel(),
        ])

    def _g_rows(self, X):
        """Algebraiske rader for k = 0..N−1 (x_0 = x̂)."""
        xi = np.vstack([self.xi_hat, X[:-1]])
        theta = self.stages.theta
        b = self.bounds
        xi_in, xi_out = xi[:, P_IN], xi[:, P_OUT]
        ratio = b.ratio_max - xi_out / xi_in
        p_in, p_out = xi_in * STATE_SCALE[P_IN], xi_out * STATE_SCALE[P_OUT]
        T_lp = theta.T_sat_lp + theta.dTsat_dp_lp * (p_in - theta.p_in)
        T_hp = theta.T_sat_hp + theta.dTsat_dp_hp * (p_out - theta.p_out)
        gap = (T_hp - T_lp - b.sat_margin) / 50.0
        return np.column_stack([ratio, gap]), xi_in, xi_out

    def constraints(self, w):
        L = self.layout
        ev = self._evaluate(w)
        X, U = ev["X"], ev["U"]
        c_eq = X - scale_state(ev["phi"])
        soft = np.asarray(L.soft, dtype=int)
        s = L.slacks(w)
        g, _, _ = self._g_rows(X)
        dnu = U - np.vstack([self.nu_prev, U[:-1]])
        c_in = np.concatenate([
            (X[:, soft] - self.xi_lo + s["S_xl"]).ravel(),
            (self.xi_hi - X[:, soft] + s["S_xu"]).ravel(),
            (g + s["S_y"]).ravel(),
            (self.dnu_max - dnu + s["S_dup"]).ravel(),
            (self.dnu_max + dnu + s["S_ddn"]).ravel(),
        ])
        return c_eq.ravel(), c_in

    def jacobians(self, w):
        L, N = self.layout, self.N
        ev = self._evaluate(w, derivatives=True)
        X = ev["X"]
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r, c, v = np.broadcast_arrays(np.asarray(r), np.asarray(c), np.asarray(v, dtype=float))
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel())

        # dynamikk: ξ_{k+1} − S⁻¹(Φ_k − off)
        k = np.arange(N)[:, None]
        i = np.arange(NX)[None, :]
        add(k * NX + i, L.index("X", k, i), 1.0)
        A_s = ev["A"] * STATE_SCALE[None, None, :] / STATE_SCALE[None, :, None]
        B_s = ev["B"] * self.su[None, None, :] / STATE_SCALE[None, :, None]
        kk, ii, jj = np.meshgrid(np.arange(1, N), np.arange(NX), np.arange(NX), indexing="ij")
        add(kk * NX + ii, L.index("X", kk - 1, jj), -A_s[1:])
        kk, ii, jj = np.meshgrid(np.arange(N), np.arange(NX), np.arange(NU), indexing="ij")
        add(kk * NX + ii, L.index("U", kk, jj), -B_s)
        J_eq = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.m_eq, self.n))

        rows, cols, vals = [], [], []
        ns = L.ns
        soft = np.asarray(L.soft, dtype=int)
        r0 = 0
        if ns:
            kk, jj = np.meshgrid(np.arange(N), np.arange(ns), indexing="ij")
            add(r0 + kk * ns + jj, L.index("X", kk, soft[jj]), 1.0)
            add(r0 + kk * ns + jj, L.index("S_xl", kk, jj), 1.0)
            r0 += N * ns
            add(r0 + kk * ns + jj, L.index("X", kk, soft[jj]), -1.0)
            add(r0 + kk * ns + jj, L.index("S_xu", kk, jj), 1.0)
            r0 += N * ns

        _, xi_in, xi_out = self._g_rows(X)
        theta = self.stages.theta
        kk = np.arange(1, N)
        add(r0 + kk * N_G, L.index("X", kk - 1, P_IN), xi_out[1:] / xi_in[1:] ** 2)
        add(r0 + kk * N_G, L.index("X", kk - 1, P_OUT), -1.0 / xi_in[1:])
        add(r0 + kk * N_G + 1, L.index("X", kk - 1, P_IN), -theta.dTsat_dp_lp * STATE_SCALE[P_IN] / 50.0)
        add(r0 + kk * N_G + 1, L.index("X", kk - 1, P_OUT), theta.dTsat_dp_hp * STATE_SCALE[P_OUT] / 50.0)
        kk, jj = np.meshgrid(np.arange(N), np.arange(N_G), indexing="ij")
        add(r0 + kk * N_G + jj, L.index("S_y", kk, jj), 1.0)
        r0 += N * N_G

        kk, jj = np.meshgrid(np.arange(N), np.arange(NU), indexing="ij")
        for sign, slack in ((-1.0, "S_dup"), (1.0, "S_ddn")):
            add(r0 + kk * NU + jj, L.index("U", kk, jj), sign)
            k1, j1 = kk[1:], jj[1:]
            add(r0 + k1 * NU + j1, L.index("U", k1 - 1, j1), -sign)
            add(r0 + kk * NU + jj, L.index(slack, kk, jj), 1.0)
            r0 += N * NU

        J_in = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.m_in, self.n))
        return J_eq, J_in

    # --- Hesse-matrise ---

    def _build_static_hessian(self):
        L, wt, N = self.layout, self.weights, self.N
        diag = np.zeros(self.n)
        xs, us = L.offsets["X"][0], L.offsets["U"][0]
        diag[xs:xs + (N - 1) * NX] = np.tile(2.0 * wt.w_st, N - 1)
        diag[us:us + N * NU] = np.tile(2.0 * (wt.r + wt.r_du), N)
        diag[us:us + (N - 1) * NU] += np.tile(2.0 * wt.r_du, N - 1)
        diag[L.index("U", N - 1, np.arange(NU))] += 2.0 * wt.beta_tie * wt.r_tie
        for name, weight in (("S_xl", wt.w_xl), ("S_xu", wt.w_xu), ("S_y", wt.w_y),
                             ("S_dup", wt.w_du), ("S_ddn", wt.w_du)):
            start, width = L.offsets[name]
            diag[start:start + N * width] = 2.0 * weight
        H = sp.diags(diag).tolil()
        kk, jj = np.meshgrid(np.arange(1, N), np.arange(NU), indexing="ij")
        a = L.index("U", kk, jj).ravel()
        b = L.index("U", kk - 1, jj).ravel()
        off = -2.0 * np.broadcast_to(wt.r_du, kk.shape).ravel()
        H[a, b] = off
        H[b, a] = off
        idx = L.index("X", N - 1, np.arange(NX))
        H[np.ix_(idx, idx)] = H[np.ix_(idx, idx)].toarray() + 2.0 * self.P
        return H.tocsr()

    def _stage_indices(self, k: int) -> np.ndarray:
        L = self.layout
        u_idx = L.index("U", k, np.arange(NU))
        if k == 0:
            return u_idx
        return np.concatenate([L.index("X", k - 1, np.arange(NX)), u_idx])

    def hessian(self, w):
        rows, cols, vals = [], [], []
        scale = self.weights.w_pwr
        for k in range(self.N):
            idx = self._stage_indices(k)
            block = self._bfgs[k] if k else self._bfgs[k][NX:, NX:]
            r, c = np.meshgrid(idx, idx, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(scale * block.ravel())
        power = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.n, self.n))
        return self._static_hessian + power

    def hessian_update(self, w_old, w_new):
        """Dempet (Powell) BFGS per steg for effektleddet."""
        old = self._evaluate(w_old, derivatives=True)
        new = self._evaluate(w_new, derivatives=True)
        for k in range(self.N):
            idx = self._stage_indices(k)
            s = w_new[idx] - w_old[idx]
            y = new["dP"][k] - old["dP"][k]
            B = self._bfgs[k]
            if k == 0:
                y = y[NX:]
                sub = B[NX:, NX:]
            else:
                sub = B
            ss = float(s @ s)
            if ss < 1e-20:
                continue
            Bs = sub @ s
            sBs = float(s @ Bs)
            sy = float(s @ y)
            if sy < 0.2 * sBs:
                t = 0.8 * sBs / (sBs - sy)
                y = t * y + (1.0 - t) * Bs
                sy = float(s @ y)
            updated = sub - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
            if k == 0:
                B[NX:, NX:] = updated
            else:
                self._bfgs[k] = updated

    # --- startpunkt ---

    def initial_guess(self) -> np.ndarray:
        """Utrulling med u_{t−1} holdt fast, klippet inn i boksene, og minimale slakker."""
        L, N = self.layout, self.N
        u = self.bounds.clip_input(self.nu_prev * self.su)
        xs = []
        x = self.x_hat
        for k in range(N):
            zk = StageParams(self.stages.d[:, k], self.stages.v, self.stages.gamma, self.stages.theta)
            try:
                x = np.asarray(step(x, u, zk, self.dt, self.params, smooth=True), dtype=float)
            except ValueError as exc:
                logger.debug("Startgjetning: steg %d avvist (%s), beholder forrige tilstand", k, exc)
            x = self.bounds.clip_state(x)
            xs.append(x)
        w = np.zeros(self.n)
        xs_ = L.offsets["X"][0]
        us_ = L.offsets["U"][0]
        X = scale_state(np.array(xs))
        w[xs_:xs_ + N * NX] = X.ravel()
        w[us_:us_ + N * NU] = np.tile(u / self.su, N)
        _, c_in = self.constraints(w)
        # slakker lik bruddet i hver rad (radene er lineære i sin slakk)
        viol = np.maximum(-c_in, 0.0)
        pos = 0
        for name, width in L.ineq_blocks:
            slack = {"pref_lo": "S_xl", "pref_hi": "S_xu", "g": "S_y", "rate_up": "S_dup",
                     "rate_dn": "S_ddn"}[name]
            size = N * width
            start, _ = L.offsets[slack]
            w[start:start + size] = viol[pos:pos + size]
            pos += size
        return w


def build(N: int, x_hat, u_prev, stages: StageParams, bounds: Bounds, weights: OcpWeights,
          terminal: tuple, params: ParameterSet, dt: float = 1.0) -> OcpInstance:
    """
    Bygg OCP-instansen for horisont N fra x̂_t.

    terminal er (x_st, u_st, P) med P i skalerte koordinater.

    Raises:
        InfeasibleBoxesError: En hard boks er tom
    """
    x_st, u_st, P = terminal
    return OcpInstance(N, x_hat, u_prev, stages, bounds, weights, x_st, u_st, P, params, dt)
