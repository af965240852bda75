"""
Scenariofiler og kjøringsoppsett.

Et scenario er en INI-fil med seksjonene [scenario], [controller],
[supervisor], [weights], [bounds], [solver], [terminal], [baseline] og
[twin]. Nøklene heter som feltene i de tilhørende dataklassene; arrays
skrives kommaseparert. Presedens: overstyringer > fil > innebygde standarder.
"""

import configparser
import dataclasses
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .controller import ControllerConfig
from .errors import ConfigError
from .fluid import saturation_pressure
from .model import NX, P_IN, P_OUT, SOC, TEMPERATURE_STATES
from .nlp import SolverOptions
from .ocp import Bounds, OcpWeights
from .supervisor import SupervisorConfig
from .terminal import TerminalConfig


logger = logging.getLogger(__name__)

CONTROLLERS = ("nmpc", "baseline")
KELVIN = 273.15
_BOOLEANS = {"1": True, "true": True, "yes": True, "on": True,
             "0": False, "false": False, "no": False, "off": False}


@dataclass(frozen=True)
class TwinConfig:
    rel: float = 0.1        # relativ parameterforstyrrelse
    substep: float = 0.05   # s

    def __post_init__(self):
        if not 0 <= self.rel < 1:
            raise ConfigError(f"twin.rel må ligge i [0, 1) (fikk {self.rel})")
        if not self.substep > 0:
            raise ConfigError(f"twin.substep må være > 0 (fikk {self.substep})")


@dataclass(frozen=True)
class BaselineConfig:
    heater_band: float = 1.0
    heater_max: float = 6000.0
    comp_ambients: tuple = (263.15, 268.15, 273.15, 283.15)
    comp_speeds: tuple = (6000.0, 5000.0, 4000.0, 3000.0)
    comp_off_offset: float = 2.0
    pump_speed: float = 2000.0
    fan_thresholds: tuple = (313.15, 328.15)
    fan_speeds: tuple = (1500.0, 3000.0)
    blower_ambients: tuple = (268.15, 278.15)
    blower_flows: tuple = (0.15, 0.12, 0.08)

    def __post_init__(self):
        if len(self.comp_ambients) != len(self.comp_speeds):
            raise ConfigError("baseline.comp_ambients og comp_speeds må ha like mange verdier")
        if len(self.fan_thresholds) != len(self.fan_speeds):
            raise ConfigError("baseline.fan_thresholds og fan_speeds må ha like mange verdier")
        if len(self.blower_flows) != len(self.blower_ambients) + 1:
            raise ConfigError("baseline.blower_flows må ha én verdi mer enn blower_ambients")
        if not self.heater_band > 0:
            raise ConfigError("baseline.heater_band må være > 0")


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    ambient: float = 263.15       # K
    setpoint: float = 294.15      # K
    duration: float = 3600.0      # s
    dt: float = 1.0
    controller: str = "nmpc"
    seed: int = 0
    soc0: float = 0.9
    cycle: Optional[str] = None
    params: Optional[str] = None
    gamma_map: Optional[str] = None
    horizon: int = 30
    hold_disturbance: bool = False
    state_noise: float = 0.0
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    weights: OcpWeights = field(default_factory=OcpWeights)
    bounds: Bounds = field(default_factory=Bounds)
    solver: SolverOptions = field(default_factory=SolverOptions)
    terminal: TerminalConfig = field(default_factory=TerminalConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    twin: TwinConfig = field(default_factory=TwinConfig)

    def validate(self) -> "Scenario":
        if not self.duration > 0:
            raise ConfigError(f"Varigheten må være > 0 (fikk {self.duration})")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"Ukjent kontroller '{self.controller}' (gyldige: {', '.join(CONTROLLERS)})")
        substeps = self.dt / self.twin.substep
        if abs(substeps - round(substeps)) > 1e-9 or round(substeps) < 1:
            raise ConfigError(f"dt={self.dt} s lar seg ikke dele i delsteg på {self.twin.substep} s")
        self.bounds.validate()
        if not self.bounds.contains_state(self.initial_state()):
            raise ConfigError("Starttilstanden ligger utenfor de harde boksene")
        try:
            self.controller_config()
            self.ocp_weights()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"Ugyldig kontrolleroppsett: {exc}") from exc
        return self

    def initial_state(self) -> np.ndarray:
        """I ro ved omgivelsestemperatur: trykkutjevnet kretsløp ved T_sat = T_amb."""
        x = np.zeros(NX)
        for i in TEMPERATURE_STATES:
            x[i] = self.ambient
        x[SOC] = self.soc0
        x[P_IN] = float(saturation_pressure(self.ambient))
        x[P_OUT] = 1.02 * x[P_IN]
        return x

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(horizon=self.horizon, dt=self.dt, hold_disturbance=self.hold_disturbance,
                                state_noise=self.state_noise, solver=self.solver, terminal=self.terminal,
                                supervisor=self.supervisor)

    def ocp_weights(self) -> OcpWeights:
        """Vektene med scenariets settpunkt."""
        return replace(self.weights, t_ref=self.setpoint)

    def metadata(self) -> dict:
        """Nøkkeltall som må være like for parrede sammenligninger."""
        return {
            "name": self.name,
            "ambient_c": round(self.ambient - KELVIN, 6),
            "setpoint_c": round(self.setpoint - KELVIN, 6),
            "duration_s": self.duration,
            "dt_s": self.dt,
            "seed": self.seed,
            "cycle": self.cycle or "synthetic",
        }


# === PARSING ===

def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return _BOOLEANS[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, np.ndarray):
            return np.array([float(v) for v in raw.split(",")])
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(","))
    except (KeyError, ValueError):
        raise ConfigError(f"{key} = {raw!r} kan ikke tolkes som {type(default).__name__}")
    return raw or None


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (np.ndarray, tuple, list)):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _update(obj, section, name: str):
    """Kopi av dataklassen obj med verdiene fra section."""
    known = {f.name: f for f in fields(obj)}
    values = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"Ukjent nøkkel '{key}' i seksjon [{name}]")
        values[key] = _coerce(raw, getattr(obj, key), f"[{name}] {key}")
    try:
        return replace(obj, **values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"Ugyldige verdier i [{name}]: {exc}")


_SCENARIO_KEYS = {
    "name": ("name", None),
    "ambient_c": ("ambient", KELVIN),
    "setpoint_c": ("setpoint", KELVIN),
    "duration_s": ("duration", None),
    "dt_s": ("dt", None),
    "controller": ("controller", None),
    "seed": ("seed", None),
    "soc0": ("soc0", None),
    "cycle": ("cycle", None),
    "params": ("params", None),
    "gamma_map": ("gamma_map", None),
}
_CONTROLLER_KEYS = ("horizon", "hold_disturbance", "state_noise")
_SUB_SECTIONS = ("supervisor", "weights", "bounds", "solver", "terminal", "baseline", "twin")
_PATH_KEYS = ("cycle", "params", "gamma_map")


def _resolve(value: Optional[str], base: Path) -> Optional[str]:
    if not value:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else (base / p).resolve())


def load_scenario(path: Optional[Union[str, Path]] = None, overrides: Optional[dict] = None) -> Scenario:
    """
    Les et scenario. Relative stier i filen tolkes fra filens katalog.

    overrides kan inneholde ambient (°C), controller, horizon, dt, seed og duration.

    Raises:
        ConfigError: Manglende fil, ukjent nøkkel eller ugyldig verdi
    """
    scenario = Scenario()
    if path is not None:
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"Fant ikke scenariofil: {path}")
        unknown = [s for s in parser.sections() if s not in ("scenario", "controller", *_SUB_SECTIONS)]
        if unknown:
            raise ConfigError(f"Ukjente seksjoner i {path.name}: {', '.join(unknown)}")

        values = {}
        if parser.has_section("scenario"):
            for key, raw in parser["scenario"].items():
                if key not in _SCENARIO_KEYS:
                    raise ConfigError(f"Ukjent nøkkel '{key}' i seksjon [scenario]")
                attr, offset = _SCENARIO_KEYS[key]
                val = _coerce(raw, getattr(scenario, attr) if attr not in _PATH_KEYS else None, key)
                if offset is not None:
                    val = float(raw) + offset
                if attr in _PATH_KEYS:
                    val = _resolve(val, path.parent)
                values[attr] = val
        if parser.has_section("controller"):
            for key, raw in parser["controller"].items():
                if key not in _CONTROLLER_KEYS:
                    raise ConfigError(f"Ukjent nøkkel '{key}' i seksjon [controller]")
                values[key] = _coerce(raw, getattr(scenario, key), f"[controller] {key}")
        for name in _SUB_SECTIONS:
            if parser.has_section(name):
                values[name] = _update(getattr(scenario, name), parser[name], name)
        scenario = replace(scenario, **values)

    scenario = apply_overrides(scenario, overrides or {})
    return scenario.validate()


def apply_overrides(scenario: Scenario, overrides: dict) -> Scenario:
    values = {}
    for key, val in overrides.items():
        if val is None:
            continue
        if key == "ambient":
            values["ambient"] = float(val) + KELVIN
        elif key in ("controller", "horizon", "dt", "seed", "duration"):
            values[key] = val
        else:
            raise ConfigError(f"Ukjent overstyring: {key}")
    if values:
        logger.debug("Overstyringer: %s", values)
    return replace(scenario, **values)


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    """Skriv hele scenariet, inkludert standardverdier, slik at load_scenario gjenskaper det."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    section = {}
    for key, (attr, offset) in _SCENARIO_KEYS.items():
        val = getattr(scenario, attr)
        section[key] = _format(val - offset if offset is not None else val)
    parser["scenario"] = section
    parser["controller"] = {key: _format(getattr(scenario, key)) for key in _CONTROLLER_KEYS}
    for name in _SUB_SECTIONS:
        obj = getattr(scenario, name)
        parser[name] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
    return path