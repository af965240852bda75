"""
Diskretisering av COM med klassisk RK4 og Jacobi-matriser for
diskret avbildning Φ(x, u; z).

Jacobi-matrisene regnes med foroverderivering gjennom alle fire RK4-trinn
(tem.ad), slik at de er eksakte opp til avrundingsfeil. Alle funksjoner
tar både enkelttilstander (9,) og hele horisonter (9, N) i ett kall.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ad
from .errors import NonFiniteError
from .fluid import FluidState, eval_fluid_state, load_refrigerant_table
from .model import (
    ModeFlags, NU, NX, P_IN, P_OUT, SOC, T_B, T_DCDC, T_INV, T_MOT, TEMPERATURE_STATES, rhs,
)
from .params import ParameterSet


# Simuleringsboksen (fysiske invarianter)
T_MIN, T_MAX = 200.0, 450.0
MIN_PRESSURE_RATIO = 1.02


@dataclass(frozen=True)
class StageParams:
    """
    Stegparametre z_k = (d_k, v, γ, θ).

    d kan være (6,) for ett steg eller (6, N) for en hel horisont;
    v, γ og θ er felles for hele horisonten.
    """
    d: np.ndarray
    v: ModeFlags
    gamma: np.ndarray
    theta: FluidState


def rk4(f: Callable, x, dt: float):
    """Ett klassisk RK4-steg for ẋ = f(x)."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(x, where: str):
    if not np.all(np.isfinite(ad.value(x))):
        raise NonFiniteError(f"Ikke-endelig verdi i {where}")
    if ad.is_dual(x) and not np.all(np.isfinite(x.tangent)):
        raise NonFiniteError(f"Ikke-endelig derivert i {where}")


def clamp_state(x) -> np.ndarray:
    """Klipp x inn i den fysiske boksen (kun simuleringsmodus)."""
    table = load_refrigerant_table()
    x = np.array(x, dtype=float)
    for i in TEMPERATURE_STATES:
        x[i] = np.clip(x[i], T_MIN, T_MAX)
    x[SOC] = np.clip(x[SOC], 0.0, 1.0)
    x[P_IN] = np.clip(x[P_IN], table.lower, table.upper / MIN_PRESSURE_RATIO)
    x[P_OUT] = np.clip(x[P_OUT], x[P_IN] * MIN_PRESSURE_RATIO, table.upper)
    return x


def step(x, u, z: StageParams, dt: float, params: ParameterSet, smooth: bool = True,
         clamp: bool = False):
    """
    x_{k+1} = Φ(x_k, u_k; z_k) med ett RK4-steg.

    smooth=True er optimeringsmodus (glatte strømningsgulv, ingen klipping).
    Simuleringsmodus bruker smooth=False, clamp=True.

    Raises:
        NonFiniteError: Et RK4-trinn ga NaN/Inf
    """
    if dt <= 0:
        raise ValueError(f"dt må være > 0 (fikk {dt})")
    if not ad.is_dual(x):
        x = np.asarray(x, dtype=float)
    if not ad.is_dual(u):
        u = np.asarray(u, dtype=float)

    def f(xi):
        out = rhs(xi, u, z.d, z.v, z.gamma, z.theta, params, smooth=smooth)
        _check_finite(out, "RK4-trinn")
        return out

    x_next = rk4(f, x, dt)
    _check_finite(x_next, "diskret steg")
    if clamp:
        return clamp_state(x_next)
    return x_next


def seeded(x, u):
    """Dual-frø for (x, u) med retningene x → 0..8 og u → 9..14."""
    nd = NX + NU
    return ad.seed(x, 0, nd), ad.seed(u, NX, nd)


def jacobians(x, u, z: StageParams, dt: float, params: ParameterSet):
    """
    A = ∂Φ/∂x og B = ∂Φ/∂u via tangentpropagering gjennom RK4.

    For x med form (9,) returneres (9×9, 9×6); for (9, N) returneres
    (N×9×9, N×9×6), ett par per horisontsteg.
    """
    xd, ud = seeded(x, u)
    out = step(xd, ud, z, dt, params, smooth=True)
    tangent = ad.jacobian(out)
    if tangent.ndim == 2:
        return tangent[:, :NX], tangent[:, NX:]
    tangent = np.moveaxis(tangent, 1, 0)
    return tangent[:, :, :NX], tangent[:, :, NX:]


@dataclass(frozen=True)
class DiscreteModel:
    """Φ bundet til (parametre, Δt) for konsumenter som målpunkt og identifikasjon."""
    params: ParameterSet
    dt: float = 1.0
    smooth: bool = True

    def step(self, x, u, z: StageParams):
        return step(x, u, z, self.dt, self.params, smooth=self.smooth)

    def jacobians(self, x, u, z: StageParams):
        return jacobians(x, u, z, self.dt, self.params)

    def rollout(self, x0, U, z: StageParams) -> np.ndarray:
        """Simuler U (6, N) fra x0; z.d må ha form (6, N). Returnerer (9, N+1)."""
        U = np.asarray(U, dtype=float)
        xs = [np.asarray(x0, dtype=float)]
        for k in range(U.shape[1]):
            zk = StageParams(z.d[:, k], z.v, z.gamma, z.theta)
            xs.append(self.step(xs[-1], U[:, k], zk))
        return np.stack(xs, axis=1)


def operating_point(x, T_amb: float) -> FluidState:
    """
    θ i tilstanden x: trykkene fra x, kjølevæskeegenskaper ved snittet av
    komponenttemperaturene og lufta ved T_amb.
    """
    x = clamp_state(x)
    coolant = float(np.mean([x[T_MOT], x[T_INV], x[T_DCDC], x[T_B]]))
    return eval_fluid_state(x[P_IN], x[P_OUT],
                            T_coolant=float(np.clip(coolant, 230.0, 400.0)),
                            T_air=float(np.clip(T_amb, 230.0, 400.0)))
