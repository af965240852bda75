"""
Rullerende-horisont NMPC: ett kall til control_step per samplingstidspunkt.

Rekkefølgen per steg er tilstand inn, modus fra overvåkningslaget, γ fra
parameterkartet, θ i arbeidspunktet, terminaloppdatering, forskjøvet
varmstart, OCP-løsning, og til slutt u₀* eller mettet LQR-reservelov.
Ingen feil slipper ut av control_step.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .discretize import StageParams, clamp_state, operating_point
from .errors import DimensionMismatchError, EmptyMapError, TemError
from .ident import GammaMap, anchor_features
from .model import I_B, T_AMB, ModeFlags
from .nlp import OcpSolution, SolverOptions, Status, shift_warm_start, solve
from .ocp import STATE_SCALE, Bounds, OcpWeights, build
from .params import ParameterSet, default_gamma
from .supervisor import SupervisorConfig, select_modes
from .terminal import (
    TerminalConfig, TerminalData, compute_terminal, fallback_terminal, lqr_fallback, needs_update,
)


logger = logging.getLogger(__name__)

ACTIVE_SLACK = 1e-6


@dataclass(frozen=True)
class ControllerConfig:
    horizon: int = 30
    dt: float = 1.0
    hold_disturbance: bool = False   # hold d_t konstant over horisonten
    state_noise: float = 0.0         # std for målestøy på x̂, i skalerte enheter
    solver: SolverOptions = field(default_factory=SolverOptions)
    terminal: TerminalConfig = field(default_factory=TerminalConfig)
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError(f"Horisonten må være minst 2 (fikk {self.horizon})")
        if not self.dt > 0:
            raise ValueError(f"dt må være > 0 (fikk {self.dt})")
        if self.state_noise < 0:
            raise ValueError(f"state_noise må være ≥ 0 (fikk {self.state_noise})")


@dataclass(frozen=True)
class ControllerContext:
    """Alt som er fast over en kjøring."""
    params: ParameterSet
    bounds: Bounds
    weights: OcpWeights
    cfg: ControllerConfig = field(default_factory=ControllerConfig)
    gamma_map: Optional[GammaMap] = None


@dataclass(frozen=True)
class ControllerState:
    u_prev: np.ndarray
    solution: Optional[OcpSolution] = None
    terminal: Optional[TerminalData] = None
    modes: Optional[ModeFlags] = None
    step: int = 0


@dataclass
class StepDiagnostics:
    status: str
    iterations: int
    solve_ms: float
    objective: float
    breakdown: dict
    active_slacks: int
    fallback: bool
    clamped: bool
    terminal_reused: bool
    modes: ModeFlags
    gamma: np.ndarray
    x_pred: Optional[np.ndarray] = None


def initial_state(bounds: Bounds, u0=None) -> ControllerState:
    u = bounds.u_min.copy() if u0 is None else bounds.clip_input(u0)
    return ControllerState(u_prev=u)


def measured_state(x, cfg: ControllerConfig, rng: np.random.Generator) -> np.ndarray:
    """x̂ = x + støy med standardavvik cfg.state_noise i skalerte enheter."""
    x = np.asarray(x, dtype=float)
    if cfg.state_noise <= 0:
        return x
    return x + cfg.state_noise * STATE_SCALE * rng.standard_normal(len(x))


# === PARAMETERPLAN ===

def schedule_gamma(T_amb: float, x, I_b: float, gamma_map: GammaMap, power: float = 2.0) -> np.ndarray:
    """
    Invers-avstandsvektet interpolasjon av γ over kartets ankre.

    Raises:
        EmptyMapError: Kartet har ingen ankre
    """
    if gamma_map is None or len(gamma_map) == 0:
        raise EmptyMapError("Parameterkartet har ingen ankre")
    feats = gamma_map.feature_matrix()
    gammas = gamma_map.gamma_matrix()
    dist = np.linalg.norm(feats - anchor_features(T_amb, x, I_b), axis=1)
    hit = np.flatnonzero(dist < 1e-12)
    if hit.size:
        return gammas[hit[0]].copy()
    w = dist ** -power
    return (w[:, None] * gammas).sum(axis=0) / w.sum()


# === KONTROLLSTEG ===

def _count_active(solution: OcpSolution) -> int:
    slacks = solution.slacks or {}
    return int(sum(np.count_nonzero(v > ACTIVE_SLACK) for v in slacks.values()))


def control_step(x_hat, preview, state: ControllerState, ctx: ControllerContext):
    """
    Ett NMPC-steg. preview er (6, N) med d_t..d_{t+N−1}.

    Returnerer (u_t, StepDiagnostics, ControllerState').
    """
    cfg, bounds = ctx.cfg, ctx.bounds
    N = cfg.horizon
    preview = np.asarray(preview, dtype=float)
    if preview.shape != (6, N):
        raise DimensionMismatchError(f"Forhåndsvisningen må ha form (6, {N}), fikk {preview.shape}")
    if cfg.hold_disturbance:
        preview = np.repeat(preview[:, :1], N, axis=1)

    x = np.asarray(x_hat, dtype=float)
    clamped = not bounds.contains_state(x)
    if clamped:
        logger.warning("Tilstandsestimatet lå utenfor de harde boksene og ble klippet (steg %d)", state.step)
        x = bounds.clip_state(clamp_state(x))

    d0 = preview[:, 0]
    modes = select_modes(d0[T_AMB], x, state.modes, cfg.supervisor)
    if ctx.gamma_map is not None and len(ctx.gamma_map):
        gamma = schedule_gamma(d0[T_AMB], x, d0[I_B], ctx.gamma_map)
    else:
        gamma = default_gamma()

    terminal, terminal_reused = state.terminal, False
    solution: Optional[OcpSolution] = None
    started = time.perf_counter()
    try:
        theta = operating_point(x, d0[T_AMB])
        z_N = StageParams(preview[:, -1], modes, gamma, theta)
        if needs_update(terminal, preview[:, -1], modes, cfg.terminal):
            try:
                terminal = compute_terminal(x, state.u_prev, z_N, bounds, ctx.weights, ctx.params,
                                            cfg.dt, cfg.terminal, prev=terminal)
            except (TemError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                terminal_reused = True
                if terminal is None:
                    logger.warning("Terminalberegning feilet uten tidligere data (%s); bruker nødterminal", exc)
                    terminal = fallback_terminal(x, state.u_prev, bounds, ctx.weights, modes)
                else:
                    logger.warning("Terminalberegning feilet (%s); gjenbruker forrige terminal", exc)
        else:
            terminal_reused = True

        instance = build(N, x, state.u_prev, StageParams(preview, modes, gamma, theta), bounds,
                         ctx.weights, (terminal.x_st, terminal.u_st, terminal.P), ctx.params, cfg.dt)
        guess = None
        if state.solution is not None and state.modes == modes:
            try:
                guess = shift_warm_start(state.solution, instance.layout)
            except DimensionMismatchError:
                guess = None
        solution = solve(instance, guess, cfg.solver)
    except (TemError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("OCP-løsningen feilet i steg %d: %s", state.step, exc)
        solution = None
        if terminal is None:
            terminal = fallback_terminal(x, state.u_prev, bounds, ctx.weights, modes)
    solve_ms = 1e3 * (time.perf_counter() - started)

    converged = solution is not None and solution.status == Status.CONVERGED
    if converged:
        u = bounds.clip_input(solution.u[0])
    else:
        u = lqr_fallback(x, terminal, bounds)
        logger.info("Steg %d: reservelov brukt (status %s)", state.step,
                    "Diverged" if solution is None else solution.status.value)

    keep = solution if solution is not None and solution.status != Status.DIVERGED else None
    diag = StepDiagnostics(
        status=Status.DIVERGED.value if solution is None else solution.status.value,
        iterations=0 if solution is None else solution.iterations,
        solve_ms=solve_ms,
        objective=np.nan if solution is None else solution.objective,
        breakdown={} if solution is None else dict(solution.breakdown),
        active_slacks=0 if keep is None else _count_active(keep),
        fallback=not converged,
        clamped=clamped,
        terminal_reused=terminal_reused,
        modes=modes,
        gamma=np.asarray(gamma, dtype=float),
        x_pred=None if keep is None else keep.x[0].copy(),
    )
    new_state = replace(state, u_prev=u, solution=keep, terminal=terminal, modes=modes, step=state.step + 1)
    return u, diag, new_state

