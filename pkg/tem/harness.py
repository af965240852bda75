"""
Lukket-sløyfe-simulering: anleggstvilling, regelbasert referansekontroller,
kjøringer med artefakter, metrikker og parrede sammenligninger.

Tvillingen er COM med forstyrrede parametre (seedet), γ ≡ 1 og delsteg på
0.05 s i simuleringsmodus. Begge kontrollere kjøres mot samme tvilling og
samme forstyrrelser, slik at sammenligningene er parrede.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .config import BaselineConfig, Scenario, TwinConfig, load_scenario, save_scenario
from .controller import ControllerContext, control_step, initial_state, measured_state, schedule_gamma
from .database import register_run
from .discretize import StageParams, operating_point, step
from .drive_cycle import DriveCycle, disturbances, load_drive_cycle
from .errors import ConfigError, NonFiniteError, ScenarioMismatchError
from .ident import GammaMap
from .model import (
    DISTURBANCE_NAMES, I_B, INPUT_NAMES, MDOT_BL, MODE_NAMES, NU, OMEGA_B_P, OMEGA_COMP,
    OMEGA_FAN, OMEGA_MOT_P, POWER_NAMES, Q_HT, STATE_NAMES, T_AMB, T_CAIR, T_MOT,
    TEMPERATURE_STATES, ModeFlags, power_breakdown,
)
from .params import ParameterSet, default_gamma, load_parameters, load_qgen_map
from .supervisor import select_modes


logger = logging.getLogger(__name__)

COMFORT_ENTRY = 1.0      # K rundt settpunktet for "nådd"
COMFORT_BAND = 1.5       # K etter første inngang
HARD_TOL = 1e-6

TIMESERIES_COLUMNS = (
    ["t_s", *STATE_NAMES, *INPUT_NAMES, *DISTURBANCE_NAMES, "P_TEM_W"]
    + [f"{name}_W" for name in POWER_NAMES]
    + [*MODE_NAMES, "solver_status", "iterations", "active_slacks", "fallback"]
)


# === TVILLING ===

class PlantTwin:
    """Forstyrret COM som stedfortreder for det virkelige anlegget."""

    def __init__(self, params: ParameterSet, cfg: TwinConfig = TwinConfig(), seed: int = 0):
        self.cfg = cfg
        self.nominal = params
        if cfg.rel > 0:
            self.params = params.perturbed(np.random.default_rng(seed), cfg.rel)
        else:
            self.params = params
        self.gamma = default_gamma()

    def substeps(self, dt: float) -> int:
        n = dt / self.cfg.substep
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(f"dt={dt} s lar seg ikke dele i delsteg på {self.cfg.substep} s")
        return int(round(n))

    def step(self, x, u, d, v: ModeFlags, dt: float) -> np.ndarray:
        """
        Raises:
            NonFiniteError: Integrasjonen ga NaN/Inf
        """
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        d = np.asarray(d, dtype=float)
        h = dt / self.substeps(dt)
        for _ in range(self.substeps(dt)):
            theta = operating_point(x, d[T_AMB])
            x = step(x, u, StageParams(d, v, self.gamma, theta), h, self.params, smooth=False, clamp=True)
        return x

    def powers(self, x, u, d) -> dict:
        theta = operating_point(x, d[T_AMB])
        return {k: float(v) for k, v in power_breakdown(x, u, theta, self.params).items()}


def plant_twin_step(twin: PlantTwin, x, u, d, v: ModeFlags, dt: float) -> np.ndarray:
    return twin.step(x, u, d, v, dt)


# === REFERANSEKONTROLLER ===

@dataclass(frozen=True)
class BaselineState:
    heater_on: bool = False
    comp_on: bool = True


def baseline_controller(x, d, cfg: BaselineConfig, setpoint: float,
                        prev: Optional[BaselineState] = None) -> tuple[np.ndarray, BaselineState]:
    """
    Termostat med hysterese på T_cair for varmeren (av/full), kompressorhastighet
    fra en tabell over T_amb, faste pumpehastigheter, trinnvis vifte etter
    T_mot og vifteluft per omgivelsesbånd.
    """
    prev = prev or BaselineState()
    T = float(x[T_CAIR])
    T_amb = float(d[T_AMB])

    heater_on = prev.heater_on
    if T < setpoint - cfg.heater_band:
        heater_on = True
    elif T > setpoint + cfg.heater_band:
        heater_on = False

    comp_on = prev.comp_on
    if T > setpoint + cfg.comp_off_offset:
        comp_on = False
    elif T < setpoint:
        comp_on = True

    fan = 0.0
    for threshold, speed in zip(cfg.fan_thresholds, cfg.fan_speeds):
        if x[T_MOT] > threshold:
            fan = speed

    u = np.zeros(NU)
    u[OMEGA_COMP] = float(np.interp(T_amb, cfg.comp_ambients, cfg.comp_speeds)) if comp_on else 0.0
    u[MDOT_BL] = cfg.blower_flows[int(np.searchsorted(cfg.blower_ambients, T_amb, side="right"))]
    u[OMEGA_MOT_P] = cfg.pump_speed
    u[OMEGA_B_P] = cfg.pump_speed
    u[Q_HT] = cfg.heater_max if heater_on else 0.0
    u[OMEGA_FAN] = fan
    return u, BaselineState(heater_on=heater_on, comp_on=comp_on)


# === RESULTATER ===

@dataclass
class RunResult:
    scenario: Scenario
    timeseries: pd.DataFrame
    metrics: dict
    violations: pd.DataFrame
    timing: pd.DataFrame
    run_dir: Optional[Path] = None

    @property
    def energy_wh(self) -> float:
        return float(self.metrics["energy_wh"])

    def solver_stats(self) -> dict:
        ms = self.timing["solve_ms"].to_numpy(dtype=float) if len(self.timing) else np.zeros(0)
        return {
            "mean_solve_ms": float(ms.mean()) if ms.size else 0.0,
            "max_solve_ms": float(ms.max()) if ms.size else 0.0,
            "fallback_count": int(self.metrics.get("fallback_count", 0)),
        }

    def save(self, run_dir: Union[str, Path]) -> Path:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.timeseries.to_csv(run_dir / "timeseries.csv", index=False)
        pd.DataFrame({"metric": list(self.metrics), "value": list(self.metrics.values())}) \
            .to_csv(run_dir / "metrics.csv", index=False)
        self.violations.to_csv(run_dir / "violations.csv", index=False)
        self.timing.to_csv(run_dir / "timing.csv", index=False)
        save_scenario(self.scenario, run_dir / "run.cfg")
        self.run_dir = run_dir
        return run_dir

    @classmethod
    def load(cls, run_dir: Union[str, Path]) -> "RunResult":
        run_dir = Path(run_dir)
        if not (run_dir / "timeseries.csv").exists():
            raise ConfigError(f"{run_dir} inneholder ingen kjøring")
        metrics = pd.read_csv(run_dir / "metrics.csv")
        timing_path = run_dir / "timing.csv"
        return cls(
            scenario=load_scenario(run_dir / "run.cfg"),
            timeseries=pd.read_csv(run_dir / "timeseries.csv"),
            metrics=dict(zip(metrics["metric"], metrics["value"].astype(float))),
            violations=pd.read_csv(run_dir / "violations.csv"),
            timing=pd.read_csv(timing_path) if timing_path.exists() else pd.DataFrame(columns=["t_s", "solve_ms"]),
            run_dir=run_dir,
        )


# === METRIKKER ===

def trapezoid_energy_wh(power_w, dt: float) -> float:
    """Trapesintegral av en jevnt samplet effektserie, i Wh."""
    p = np.asarray(power_w, dtype=float)
    if p.size < 2:
        return 0.0
    return float(np.sum(0.5 * (p[1:] + p[:-1])) * dt / 3600.0)


def comfort_metrics(t, T_cair, setpoint: float) -> dict:
    """Tid til settpunkt (±1 K) og andel samples innenfor ±1.5 K etter første inngang."""
    t = np.asarray(t, dtype=float)
    err = np.abs(np.asarray(T_cair, dtype=float) - setpoint)
    inside = np.flatnonzero(err <= COMFORT_ENTRY)
    if inside.size == 0:
        return {"time_to_setpoint_s": np.nan, "comfort_fraction": 0.0, "comfort_violations": 0}
    first = inside[0]
    after = err[first + 1:]
    within = float(np.mean(after <= COMFORT_BAND)) if after.size else 1.0
    return {
        "time_to_setpoint_s": float(t[first] - t[0]),
        "comfort_fraction": within,
        "comfort_violations": int(np.sum(after > COMFORT_BAND)),
    }


def violation_ledger(df: pd.DataFrame, bounds) -> pd.DataFrame:
    """Brudd på harde bokser (tilstand og pådrag) og myke preferansebokser."""
    rows = []

    def check(names, lo, hi, kind):
        for j, name in enumerate(names):
            values = df[name].to_numpy(dtype=float)
            for limit, sign, label in ((lo[j], -1.0, "min"), (hi[j], 1.0, "max")):
                if not np.isfinite(limit):
                    continue
                excess = sign * (values - limit)
                tol = HARD_TOL * max(1.0, abs(limit)) if kind == "hard" else 0.0
                for k in np.flatnonzero(excess > tol):
                    rows.append({"t_s": float(df["t_s"].iloc[k]), "kind": kind, "variable": name,
                                 "bound": label, "value": float(values[k]), "limit": float(limit),
                                 "amount": float(excess[k])})

    check(STATE_NAMES, bounds.x_min, bounds.x_max, "hard")
    check(INPUT_NAMES, bounds.u_min, bounds.u_max, "hard")
    check(STATE_NAMES, bounds.x_pref_lo, bounds.x_pref_hi, "soft")
    columns = ["t_s", "kind", "variable", "bound", "value", "limit", "amount"]
    return pd.DataFrame(rows, columns=columns)


def prediction_metrics(errors: list) -> dict:
    """RMSE/MAE (K) for ett-stegs prediksjoner av temperaturtilstandene."""
    out = {}
    if errors:
        e = np.array(errors)
    for i in TEMPERATURE_STATES:
        name = STATE_NAMES[i]
        if errors:
            out[f"pred_rmse_{name}"] = float(np.sqrt(np.mean(e[:, i] ** 2)))
            out[f"pred_mae_{name}"] = float(np.mean(np.abs(e[:, i])))
        else:
            out[f"pred_rmse_{name}"] = np.nan
            out[f"pred_mae_{name}"] = np.nan
    return out


def compute_metrics(df: pd.DataFrame, scenario: Scenario, ledger: pd.DataFrame, pred_errors: list) -> dict:
    dt = scenario.dt
    metrics = {"steps": int(len(df)), "energy_wh": trapezoid_energy_wh(df["P_TEM_W"], dt)}
    for name in POWER_NAMES:
        metrics[f"energy_{name}_wh"] = trapezoid_energy_wh(df[f"{name}_W"], dt)
    metrics.update(comfort_metrics(df["t_s"], df["T_cair"], scenario.setpoint))
    metrics["hard_violations"] = int(np.sum(ledger["kind"] == "hard")) if len(ledger) else 0
    metrics["soft_violations"] = int(np.sum(ledger["kind"] == "soft")) if len(ledger) else 0
    metrics["fallback_count"] = int(df["fallback"].sum())
    iterations = df["iterations"].to_numpy(dtype=float)
    metrics["mean_iterations"] = float(iterations.mean()) if iterations.size else 0.0
    metrics["median_iterations"] = float(np.median(iterations)) if iterations.size else 0.0
    metrics["final_soc"] = float(df["SOC"].iloc[-1])
    metrics.update(prediction_metrics(pred_errors))
    return metrics


# === KJØRING ===

def _load_inputs(scenario: Scenario, params: Optional[ParameterSet], cycle: Optional[DriveCycle],
                 gamma_map: Optional[GammaMap]):
    params = params or load_parameters(scenario.params)
    qgen = load_qgen_map(scenario.params)
    cycle = cycle or load_drive_cycle(scenario.cycle)
    if not cycle.covers(scenario.duration - scenario.dt):
        raise ConfigError(f"Kjøresyklusen ({cycle.duration:g} s) dekker ikke {scenario.duration:g} s")
    if gamma_map is None and scenario.gamma_map:
        gamma_map = GammaMap.load(scenario.gamma_map)
    return params, qgen, cycle, gamma_map


def run(scenario: Scenario, out_dir: Optional[Union[str, Path]] = None, params: Optional[ParameterSet] = None,
        cycle: Optional[DriveCycle] = None, gamma_map: Optional[GammaMap] = None,
        db_path: Optional[Path] = None) -> RunResult:
    """
    Simuler scenariet med valgt kontroller mot tvillingen.

    Ved NonFiniteError skrives de delvise artefaktene før feilen sendes videre.
    """
    params, qgen, cycle, gamma_map = _load_inputs(scenario, params, cycle, gamma_map)
    dt, N = scenario.dt, scenario.horizon
    steps = int(round(scenario.duration / dt))
    times = np.arange(steps + N) * dt
    D = disturbances(cycle, scenario.ambient, qgen, times)
    twin = PlantTwin(params, scenario.twin, scenario.seed)
    bounds = scenario.bounds
    noise_rng = np.random.default_rng([scenario.seed, 1])

    nmpc = scenario.controller == "nmpc"
    if nmpc:
        ctx = ControllerContext(params, bounds, scenario.ocp_weights(), scenario.controller_config(), gamma_map)
        cstate = initial_state(bounds)
    bstate, modes = None, None

    x = scenario.initial_state()
    rows, timing, pred_errors = [], [], []
    logger.info("Starter %s-kjøring '%s' ved %.1f °C (%d steg)", scenario.controller, scenario.name,
                scenario.ambient - 273.15, steps)
    failure = None
    try:
        for k in range(steps):
            d = D[:, k]
            if nmpc:
                x_hat = measured_state(x, ctx.cfg, noise_rng)
                u, diag, cstate = control_step(x_hat, D[:, k:k + N], cstate, ctx)
                modes = diag.modes
                status, iterations, active, fallback = diag.status, diag.iterations, diag.active_slacks, diag.fallback
                solve_ms = diag.solve_ms
            else:
                modes = select_modes(d[T_AMB], x, modes, scenario.supervisor)
                u, bstate = baseline_controller(x, d, scenario.baseline, scenario.setpoint, bstate)
                u = bounds.clip_input(u)
                status, iterations, active, fallback, solve_ms = "baseline", 0, 0, False, 0.0

            powers = twin.powers(x, u, d)
            row = {"t_s": k * dt}
            row.update(zip(STATE_NAMES, map(float, x)))
            row.update(zip(INPUT_NAMES, map(float, u)))
            row.update(zip(DISTURBANCE_NAMES, map(float, d)))
            row["P_TEM_W"] = float(sum(powers[name] for name in POWER_NAMES))
            row.update({f"{name}_W": powers[name] for name in POWER_NAMES})
            row.update(zip(MODE_NAMES, modes.as_tuple()))
            row.update({"solver_status": status, "iterations": int(iterations),
                        "active_slacks": int(active), "fallback": bool(fallback)})
            rows.append(row)
            timing.append({"t_s": k * dt, "solve_ms": solve_ms})

            x_next = twin.step(x, u, d, modes, dt)
            if nmpc and diag.x_pred is not None:
                pred_errors.append(diag.x_pred - x_next)
            x = x_next
    except NonFiniteError as exc:
        failure = exc
        logger.error("Kjøringen stoppet etter %d steg: %s", len(rows), exc)

    df = pd.DataFrame(rows, columns=TIMESERIES_COLUMNS)
    ledger = violation_ledger(df, bounds)
    metrics = compute_metrics(df, scenario, ledger, pred_errors) if len(df) else {"steps": 0, "energy_wh": 0.0}
    result = RunResult(scenario, df, metrics, ledger, pd.DataFrame(timing, columns=["t_s", "solve_ms"]))
    if out_dir is not None:
        result.save(out_dir)
        if db_path is not None and failure is None:
            register_run(out_dir, scenario.name, scenario.controller, scenario.ambient - 273.15, scenario.seed,
                         scenario.horizon, scenario.duration, metrics, db_path)
    if failure is not None:
        raise failure
    logger.info("Ferdig: %.1f Wh, %d reserveløsninger", metrics["energy_wh"], metrics.get("fallback_count", 0))
    return result


# === SAMMENLIGNING ===

@dataclass
class ComparisonReport:
    """Rad per metrikk: verdi for A (referanse) og B, differanse og reduksjon i prosent."""
    metadata: dict
    rows: pd.DataFrame = field(default_factory=pd.DataFrame)

    def reduction(self, metric: str = "energy_wh") -> float:
        row = self.rows.loc[self.rows["metric"] == metric]
        return float(row["reduction_pct"].iloc[0])

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.rows.to_csv(path, index=False)
        return path


COMPARED_METRICS = (
    ["energy_wh"] + [f"energy_{name}_wh" for name in POWER_NAMES]
    + ["time_to_setpoint_s", "comfort_fraction", "comfort_violations", "hard_violations", "soft_violations",
       "fallback_count"]
)


def compare(a: RunResult, b: RunResult) -> ComparisonReport:
    """
    Parret sammenligning av to kjøringer på samme scenario.

    Raises:
        ScenarioMismatchError: Scenario-metadata er ulike
    """
    meta_a, meta_b = a.scenario.metadata(), b.scenario.metadata()
    if meta_a != meta_b:
        diff = sorted(k for k in meta_a if meta_a[k] != meta_b.get(k))
        raise ScenarioMismatchError(f"Kjøringene har ulike scenarier ({', '.join(diff)})")
    rows = []
    for metric in COMPARED_METRICS:
        va, vb = float(a.metrics.get(metric, np.nan)), float(b.metrics.get(metric, np.nan))
        reduction = 100.0 * (va - vb) / va if metric.startswith("energy") and va != 0 else 0.0
        rows.append({"metric": metric, "a": va, "b": vb, "delta": vb - va, "reduction_pct": reduction})
    meta = dict(meta_a, controller_a=a.scenario.controller, controller_b=b.scenario.controller)
    return ComparisonReport(meta, pd.DataFrame(rows, columns=["metric", "a", "b", "delta", "reduction_pct"]))


# === VALIDERING ===

def validate(scenario: Scenario, gamma_map: Optional[GammaMap] = None, reference: Optional[RunResult] = None,
             params: Optional[ParameterSet] = None, cycle: Optional[DriveCycle] = None) -> pd.DataFrame:
    """
    Åpen-sløyfe COM mot tvillingen: COM simuleres med tvillingens registrerte
    pådrag, forstyrrelser og modus over hele kjøringen. Returnerer RMSE/MAE (K)
    per temperaturtilstand.
    """
    params, _, cycle, gamma_map = _load_inputs(scenario, params, cycle, gamma_map)
    if reference is None:
        reference = run(replace(scenario, controller="baseline"), params=params, cycle=cycle)
    df = reference.timeseries
    X = df[list(STATE_NAMES)].to_numpy(dtype=float)
    U = df[list(INPUT_NAMES)].to_numpy(dtype=float)
    D = df[list(DISTURBANCE_NAMES)].to_numpy(dtype=float)
    M = df[list(MODE_NAMES)].to_numpy(dtype=int)
    dt = float(df["t_s"].iloc[1] - df["t_s"].iloc[0]) if len(df) > 1 else scenario.dt

    x = X[0].copy()
    predicted = [x]
    for k in range(len(df) - 1):
        d = D[k]
        gamma = schedule_gamma(d[T_AMB], x, d[I_B], gamma_map) if gamma_map is not None else default_gamma()
        theta = operating_point(x, d[T_AMB])
        z = StageParams(d, ModeFlags(*map(int, M[k])), gamma, theta)
        x = step(x, U[k], z, dt, params, smooth=True, clamp=True)
        predicted.append(x)
    err = np.array(predicted) - X
    rows = []
    for i in TEMPERATURE_STATES:
        rows.append({"state": STATE_NAMES[i], "rmse_K": float(np.sqrt(np.mean(err[:, i] ** 2))),
                     "mae_K": float(np.mean(np.abs(err[:, i])))})
    return pd.DataFrame(rows, columns=["state", "rmse_K", "mae_K"])
