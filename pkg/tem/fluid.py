"""
Termofysiske egenskaper (θ) for kuldemedium, kjølevæske og luft.

Kuldemediet beskrives av en innebygd metningstabell for et R134a-lignende
medium (50 log-fordelte trykknoder, 100 kPa–3 MPa). Kjølevæske og luft
slås opp i temperaturindekserte tabeller. Alle tabeller er CSV-filer i
tem/data og leses én gang.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from .errors import InvertedPressuresError, OutOfRangeError


logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
REFRIGERANT_CSV = DATA_DIR / "r134a_saturation.csv"
COOLANT_CSV = DATA_DIR / "coolant_props.csv"
AIR_CSV = DATA_DIR / "air_props.csv"

REFRIGERANT_COLUMNS = ["p_Pa", "Tsat_K", "hl_J_per_kg", "hg_J_per_kg", "rhol", "rhog", "s_l", "s_g"]
STREAM_COLUMNS = ["T_K", "rho_kg_m3", "cp_J_per_kgK", "mu_Pa_s", "k_W_per_mK"]

# Varmekapasitet for overhetet damp (konstant i driftsområdet)
VAPOR_CP = 1030.0

DEFAULT_SUPERHEAT = 5.0
DEFAULT_SUBCOOL = 5.0


@dataclass(frozen=True)
class PropertyTable:
    """
    Stykkevis lineær egenskapstabell over et strengt stigende gitter.

    Deriverte er sekanter over nabonodene (ensidige i endene), lineært
    interpolert mellom nodene. I en node gir både verdi og derivert
    nodeverdien eksakt.
    """
    grid: np.ndarray
    columns: dict = field(default_factory=dict)
    order: str = "linear"
    name: str = ""

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 2:
            raise ValueError(f"{self.name}: gitteret må være en vektor med minst to noder")
        if not np.all(np.diff(grid) > 0):
            raise ValueError(f"{self.name}: gitteret er ikke strengt stigende")
        if self.order != "linear":
            raise ValueError(f"{self.name}: ukjent interpolasjonsorden '{self.order}'")
        for key, values in self.columns.items():
            if len(values) != len(grid):
                raise ValueError(f"{self.name}: kolonne '{key}' har feil lengde")
        object.__setattr__(self, "grid", grid)

    @property
    def lower(self) -> float:
        return float(self.grid[0])

    @property
    def upper(self) -> float:
        return float(self.grid[-1])

    def check_range(self, x, label: str = "verdi"):
        lo, hi = np.min(x), np.max(x)
        if lo < self.grid[0] or hi > self.grid[-1]:
            raise OutOfRangeError(
                f"{self.name}: {label} {float(lo if lo < self.grid[0] else hi):g} er utenfor "
                f"tabellen [{self.lower:g}, {self.upper:g}]"
            )

    def interp(self, key: str, x):
        self.check_range(x)
        return np.interp(x, self.grid, self.columns[key])

    def node_slopes(self, key: str) -> np.ndarray:
        return _node_slopes(self.grid, np.asarray(self.columns[key], dtype=float))

    def derivative(self, key: str, x):
        self.check_range(x)
        return np.interp(x, self.grid, self.node_slopes(key))

    def with_column(self, key: str, values) -> "PropertyTable":
        columns = dict(self.columns)
        columns[key] = np.asarray(values, dtype=float)
        return PropertyTable(self.grid, columns, self.order, self.name)

    @classmethod
    def from_csv(cls, path: Path, index_column: str, name: str = "") -> "PropertyTable":
        df = pd.read_csv(path)
        if index_column not in df.columns:
            raise ValueError(f"{path}: mangler kolonnen '{index_column}'")
        columns = {c: df[c].to_numpy(dtype=float) for c in df.columns if c != index_column}
        return cls(df[index_column].to_numpy(dtype=float), columns, "linear", name or Path(path).stem)


def _node_slopes(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    slopes = np.empty_like(values)
    slopes[1:-1] = (values[2:] - values[:-2]) / (grid[2:] - grid[:-2])
    slopes[0] = (values[1] - values[0]) / (grid[1] - grid[0])
    slopes[-1] = (values[-1] - values[-2]) / (grid[-1] - grid[-2])
    return slopes


# === TABELL-LASTING ===

@lru_cache(maxsize=None)
def load_refrigerant_table(path: Optional[str] = None) -> PropertyTable:
    """Les metningstabellen og legg til produktkolonnene ρ·h for kapasitansene."""
    path = Path(path) if path else REFRIGERANT_CSV
    df = pd.read_csv(path)
    missing = [c for c in REFRIGERANT_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: mangler kolonner {missing}")
    table = PropertyTable.from_csv(path, "p_Pa", name="kuldemedium")
    table = table.with_column("rhol_hl", table.columns["rhol"] * table.columns["hl_J_per_kg"])
    table = table.with_column("rhog_hg", table.columns["rhog"] * table.columns["hg_J_per_kg"])
    logger.debug("Lastet metningstabell med %d noder fra %s", len(table.grid), path)
    return table


@lru_cache(maxsize=None)
def load_stream_table(kind: str) -> PropertyTable:
    paths = {"coolant": COOLANT_CSV, "air": AIR_CSV}
    if kind not in paths:
        raise ValueError(f"Ukjent strømtype: {kind}")
    return PropertyTable.from_csv(paths[kind], "T_K", name=kind)


# === TYPER ===

class StreamProps(NamedTuple):
    """Egenskaper for en enfase-strøm ved én temperatur."""
    rho: float
    cp: float
    mu: float
    k: float


@dataclass(frozen=True)
class FluidState:
    """
    Parametervektoren θ, evaluert i arbeidspunktet og holdt fast over horisonten.

    Indeks _lp gjelder lavtrykkssiden (p_in), _hp høytrykkssiden (p_out).
    """
    p_in: float
    p_out: float
    T_sat_lp: float
    T_sat_hp: float
    h_l_lp: float
    h_g_lp: float
    h_l_hp: float
    h_g_hp: float
    rho_l_lp: float
    rho_g_lp: float
    rho_l_hp: float
    rho_g_hp: float
    v_in: float
    h1: float
    h2s: float
    h3: float
    h4: float
    cp_ref_vh: float
    drhohl_dp_lp: float
    drhohg_dp_lp: float
    drhohl_dp_hp: float
    drhohg_dp_hp: float
    dTsat_dp_lp: float
    dTsat_dp_hp: float
    coolant: StreamProps
    air: StreamProps


# === OPERASJONER ===

def saturation_temperature(p, table: Optional[PropertyTable] = None):
    table = table or load_refrigerant_table()
    return table.interp("Tsat_K", p)


def saturation_pressure(T, table: Optional[PropertyTable] = None):
    """Invers av metningskurven (T_sat er strengt stigende i p)."""
    table = table or load_refrigerant_table()
    tsat = table.columns["Tsat_K"]
    if np.min(T) < tsat[0] or np.max(T) > tsat[-1]:
        raise OutOfRangeError(
            f"Metningstemperatur {float(np.min(T)):g}–{float(np.max(T)):g} K er utenfor "
            f"tabellen [{tsat[0]:g}, {tsat[-1]:g}]"
        )
    return np.interp(T, tsat, table.grid)


def coolant_air_props(T: float) -> tuple[StreamProps, StreamProps]:
    """Tetthet, varmekapasitet, viskositet og ledningsevne for (kjølevæske, luft)."""
    out = []
    for kind in ("coolant", "air"):
        table = load_stream_table(kind)
        table.check_range(T, "temperatur")
        out.append(StreamProps(*(float(table.interp(c, T)) for c in STREAM_COLUMNS[1:])))
    return out[0], out[1]


def eval_fluid_state(
    p_in: float,
    p_out: float,
    superheat: float = DEFAULT_SUPERHEAT,
    subcool: float = DEFAULT_SUBCOOL,
    T_coolant: float = 293.15,
    T_air: float = 273.15,
    table: Optional[PropertyTable] = None,
) -> FluidState:
    """
    Evaluer θ ved (p_in, p_out).

    h1 er mettet damp ved p_in pluss overhetingen; h3 er mettet væske ved
    p_out minus underkjølingen, og h4 = h3 (isentalpisk strupning). h2s
    følger isentropen fra innløpet opp til p_out via entropitabellen.

    Raises:
        OutOfRangeError: Et trykk ligger utenfor tabellen
        InvertedPressuresError: p_out <= p_in
    """
    table = table or load_refrigerant_table()
    p_in, p_out = float(p_in), float(p_out)
    table.check_range(p_in, "p_in")
    table.check_range(p_out, "p_out")
    if p_out <= p_in:
        raise InvertedPressuresError(f"p_out ({p_out:g} Pa) må være større enn p_in ({p_in:g} Pa)")

    def at(key, p):
        return float(table.interp(key, p))

    def slope(key, p):
        return float(table.derivative(key, p))

    T_lp, T_hp = at("Tsat_K", p_in), at("Tsat_K", p_out)
    cp_v = VAPOR_CP

    h1 = at("hg_J_per_kg", p_in) + cp_v * superheat
    s1 = at("s_g", p_in) + cp_v * np.log((T_lp + superheat) / T_lp)
    T2s = T_hp * np.exp((s1 - at("s_g", p_out)) / cp_v)
    h2s = at("hg_J_per_kg", p_out) + cp_v * (T2s - T_hp)

    dTsat_hp = slope("Tsat_K", p_out)
    cp_l = slope("hl_J_per_kg", p_out) / dTsat_hp
    h3 = at("hl_J_per_kg", p_out) - cp_l * subcool

    # Idealgass-korreksjon av innløpsvolumet for overhetingen
    v_in = (T_lp + superheat) / T_lp / at("rhog", p_in)

    coolant, _ = coolant_air_props(T_coolant)
    _, air = coolant_air_props(T_air)

    return FluidState(
        p_in=p_in,
        p_out=p_out,
        T_sat_lp=T_lp,
        T_sat_hp=T_hp,
        h_l_lp=at("hl_J_per_kg", p_in),
        h_g_lp=at("hg_J_per_kg", p_in),
        h_l_hp=at("hl_J_per_kg", p_out),
        h_g_hp=at("hg_J_per_kg", p_out),
        rho_l_lp=at("rhol", p_in),
        rho_g_lp=at("rhog", p_in),
        rho_l_hp=at("rhol", p_out),
        rho_g_hp=at("rhog", p_out),
        v_in=v_in,
        h1=h1,
        h2s=float(h2s),
        h3=h3,
        h4=h3,
        cp_ref_vh=cp_v,
        drhohl_dp_lp=slope("rhol_hl", p_in),
        drhohg_dp_lp=slope("rhog_hg", p_in),
        drhohl_dp_hp=slope("rhol_hl", p_out),
        drhohg_dp_hp=slope("rhog_hg", p_out),
        dTsat_dp_lp=slope("Tsat_K", p_in),
        dTsat_dp_hp=dTsat_hp,
        coolant=coolant,
        air=air,
    )
