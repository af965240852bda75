"""
Konstante modellparametre (overstrek-størrelsene) og varmegenereringskart.

Parametrene er gruppert i frosne dataklasser per delsystem. Standardverdiene
ligger i tem/data/default_params.cfg; hver INI-seksjon svarer til ett felt i
ParameterSet, og hver nøkkel til et felt i delsystemets dataklasse.
"""

import configparser
import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, OutOfRangeError


logger = logging.getLogger(__name__)

DEFAULT_PARAMS_PATH = Path(__file__).parent / "data" / "default_params.cfg"

N_GAMMA = 10


@dataclass(frozen=True)
class ComponentParams:
    """Termisk masse med kjøleplate (motor, inverter, DC-DC, batteri)."""
    mass: float
    cp: float
    area: float          # varmeoverførende flate mot kjølevæsken (m²)
    d_ch: float          # hydraulisk diameter i kjølekanalen (m)
    flow_area: float     # strømningstverrsnitt (m²)
    kappa_cond: float    # ledningsevne i huset (W/(m·K))
    a_hx: float          # ledningsflate (m²)


@dataclass(frozen=True)
class BatteryParams:
    c_nom: float         # nominell kapasitet (C)
    psi: tuple           # 3x3 koeffisienter, R_b = sum psi[i][j] T^i SOC^j


@dataclass(frozen=True)
class PumpParams:
    alpha: float
    eta_vol: float
    v_disp: float        # m³/omdreining
    k_circuit: float     # Pa/(kg/s)²
    eta: float


@dataclass(frozen=True)
class HeaterParams:
    eta: float
    alpha: float


@dataclass(frozen=True)
class FanParams:
    p_nom: float
    omega_ref: float
    eta: float
    alpha_ram: float     # kg/s per m/s
    alpha_fan: float     # kg/s per rpm


@dataclass(frozen=True)
class BlowerParams:
    p_nom: float
    mdot_ref: float


@dataclass(frozen=True)
class CompressorParams:
    alpha_v: float
    beta_v: float
    v_disp: float
    alpha_mf: float
    eta_isen: float
    eta_mech: float
    eta_elec: float
    alpha_sh: float


@dataclass(frozen=True)
class RefrigerantParams:
    phi_ab: float
    phi_rj: float
    v_ab: float
    v_rj: float
    m_wab: float
    m_wrj: float
    c_ab: float
    c_rj: float
    mu_l: float
    k_l: float
    cp_l: float
    two_phase_factor: float


@dataclass(frozen=True)
class ExchangerParams:
    """Geometri for en varmeveksler. Side a er luft/kjølevæske, side b den andre strømmen."""
    area: float
    d_a: float
    flow_area_a: float
    d_b: float
    flow_area_b: float


@dataclass(frozen=True)
class EnvelopeParams:
    u: float
    area: float
    thickness: float
    conductivity: float
    beta: float


@dataclass(frozen=True)
class CabinParams:
    m_int: float
    cp_int: float
    alpha_int: float
    alpha_r_int: float
    c_air: float
    cp_air: float
    q_human: float
    r_rec: float


@dataclass(frozen=True)
class ParameterSet:
    motor: ComponentParams
    inverter: ComponentParams
    dcdc: ComponentParams
    battery_mass: ComponentParams
    battery: BatteryParams
    pump_mot: PumpParams
    pump_b: PumpParams
    heater: HeaterParams
    fan: FanParams
    blower: BlowerParams
    compressor: CompressorParams
    refrigerant: RefrigerantParams
    hx_ce: ExchangerParams
    hx_ic: ExchangerParams
    hx_ev: ExchangerParams
    hx_rb: ExchangerParams
    hx_ch: ExchangerParams
    hx_rad: ExchangerParams
    glass: EnvelopeParams
    doors: EnvelopeParams
    roof: EnvelopeParams
    cabin: CabinParams

    def validate(self) -> "ParameterSet":
        """Kontroller fysiske krav; returnerer seg selv for kjeding."""
        strictly_positive = []
        for comp in ("motor", "inverter", "dcdc", "battery_mass"):
            c = getattr(self, comp)
            strictly_positive += [(f"{comp}.mass", c.mass), (f"{comp}.cp", c.cp), (f"{comp}.area", c.area)]
        r = self.refrigerant
        strictly_positive += [
            ("battery.c_nom", self.battery.c_nom),
            ("refrigerant.v_ab", r.v_ab), ("refrigerant.v_rj", r.v_rj),
            ("refrigerant.m_wab", r.m_wab), ("refrigerant.m_wrj", r.m_wrj),
            ("refrigerant.c_ab", r.c_ab), ("refrigerant.c_rj", r.c_rj),
            ("cabin.m_int", self.cabin.m_int), ("cabin.cp_int", self.cabin.cp_int),
            ("cabin.c_air", self.cabin.c_air),
        ]
        for hx in ("hx_ce", "hx_ic", "hx_ev", "hx_rb", "hx_ch", "hx_rad"):
            strictly_positive.append((f"{hx}.area", getattr(self, hx).area))
        for env in ("glass", "doors", "roof"):
            strictly_positive.append((f"{env}.area", getattr(self, env).area))
        for name, val in strictly_positive:
            if not val > 0:
                raise OutOfRangeError(f"Parameter {name} må være > 0 (fikk {val})")

        efficiencies = [
            ("pump_mot.eta", self.pump_mot.eta), ("pump_mot.eta_vol", self.pump_mot.eta_vol),
            ("pump_b.eta", self.pump_b.eta), ("pump_b.eta_vol", self.pump_b.eta_vol),
            ("heater.eta", self.heater.eta), ("fan.eta", self.fan.eta),
            ("compressor.eta_isen", self.compressor.eta_isen),
            ("compressor.eta_mech", self.compressor.eta_mech),
            ("compressor.eta_elec", self.compressor.eta_elec),
        ]
        for name, val in efficiencies:
            if not 0 < val <= 1:
                raise OutOfRangeError(f"Virkningsgrad {name} må ligge i (0, 1] (fikk {val})")

        for name, val in [("refrigerant.phi_ab", r.phi_ab), ("refrigerant.phi_rj", r.phi_rj),
                          ("cabin.r_rec", self.cabin.r_rec)]:
            if not 0 <= val <= 1:
                raise OutOfRangeError(f"Andel {name} må ligge i [0, 1] (fikk {val})")
        return self

    def perturbed(self, rng: np.random.Generator, rel: float = 0.1) -> "ParameterSet":
        """
        Uavhengige multiplikative forstyrrelser U(1-rel, 1+rel) på alle felt.

        Unntak: batteriets kapasitet holdes fast, motstandspolynomet skaleres
        med én felles faktor, og virkningsgrader/andeler klippes til gyldig område.
        """
        updates = {}
        for f in fields(self):
            sub = getattr(self, f.name)
            if f.name == "battery":
                factor = 1.0 + rng.uniform(-rel, rel)
                psi = tuple(tuple(v * factor for v in row) for row in sub.psi)
                updates[f.name] = replace(sub, psi=psi)
                continue
            sub_updates = {}
            for sf in fields(sub):
                val = getattr(sub, sf.name)
                new = val * (1.0 + rng.uniform(-rel, rel))
                if sf.name.startswith("eta") or sf.name.startswith("phi") or sf.name == "r_rec":
                    new = min(new, 1.0)
                sub_updates[sf.name] = new
            updates[f.name] = replace(sub, **sub_updates)
        return replace(self, **updates)


@dataclass(frozen=True)
class QgenMap:
    """Syntetiske varmegenereringskart Q_gen,i = a_i + b_i·v² (v i m/s)."""
    a_mot: float
    b_mot: float
    a_inv: float
    b_inv: float
    a_dcdc: float
    b_dcdc: float

    def evaluate(self, v_veh):
        v2 = np.asarray(v_veh, dtype=float) ** 2
        return (self.a_mot + self.b_mot * v2,
                self.a_dcdc + self.b_dcdc * v2,
                self.a_inv + self.b_inv * v2)


# === INNLESING ===

def _read_config(path: Optional[Union[str, Path]]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # bevar store/små bokstaver i nøkler
    read = parser.read(DEFAULT_PARAMS_PATH)
    if not read:
        raise ConfigError(f"Fant ikke standardparametre: {DEFAULT_PARAMS_PATH}")
    if path is not None:
        if not parser.read(path):
            raise ConfigError(f"Fant ikke parameterfil: {path}")
    return parser


def _section(parser: configparser.ConfigParser, name: str, cls):
    if not parser.has_section(name):
        raise ConfigError(f"Mangler seksjon [{name}] i parameterfilen")
    section = parser[name]
    values = {}
    for f in fields(cls):
        if f.name not in section:
            raise ConfigError(f"Mangler nøkkel '{f.name}' i seksjon [{name}]")
        try:
            values[f.name] = float(section[f.name])
        except ValueError:
            raise ConfigError(f"[{name}] {f.name} = {section[f.name]!r} er ikke et tall")
    return cls(**values)


def load_parameters(path: Optional[Union[str, Path]] = None) -> ParameterSet:
    """
    Les ParameterSet fra standardfilen, eventuelt overstyrt av en egen fil.

    Nøkler i path overstyrer standardverdiene; manglende nøkler arves.
    """
    parser = _read_config(path)
    values = {}
    for f in fields(ParameterSet):
        if f.name == "battery":
            section = parser["battery"] if parser.has_section("battery") else None
            if section is None:
                raise ConfigError("Mangler seksjon [battery] i parameterfilen")
            psi = tuple(
                tuple(float(section.get(f"psi_{i}{j}", "0")) for j in range(3)) for i in range(3)
            )
            values["battery"] = BatteryParams(c_nom=float(section["c_nom"]), psi=psi)
            continue
        values[f.name] = _section(parser, f.name, f.type)
    return ParameterSet(**values).validate()


def load_qgen_map(path: Optional[Union[str, Path]] = None) -> QgenMap:
    return _section(_read_config(path), "qgen", QgenMap)


def default_gamma() -> np.ndarray:
    return np.ones(N_GAMMA)
