"""
Kjøresykluser: innlesing, resampling og omregning til forstyrrelsesvektorer.

Sykluser leses fra CSV (t_s, v_mps, I_b_A) med minst 1 Hz og interpoleres
lineært. Den innsjekkede syklusen er syntetisk (fire faser fra bykjøring til
motorvei, 10 Hz) med batteristrøm fra en enkel lengdedynamikkmodell.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .errors import ConfigError
from .params import QgenMap


logger = logging.getLogger(__name__)

DEFAULT_CYCLE_PATH = Path(__file__).parent / "data" / "drive_cycle_synthetic.csv"
CYCLE_COLUMNS = ("t_s", "v_mps", "I_b_A")

# Fasene i den syntetiske syklusen: (start, slutt, turlengde s, toppfart km/t)
SYNTHETIC_PHASES = (
    (0.0, 589.0, 98.0, 45.0),
    (589.0, 1022.0, 144.0, 75.0),
    (1022.0, 1477.0, 228.0, 95.0),
    (1477.0, 1800.0, 323.0, 130.0),
)

# Lengdedynamikk
VEHICLE_MASS = 1800.0
ROLLING_RESISTANCE = 0.01
DRAG_AREA = 0.65
AIR_DENSITY = 1.2
PACK_VOLTAGE = 350.0
AUX_POWER = 400.0
DRIVE_EFFICIENCY = 0.9
REGEN_EFFICIENCY = 0.6


@dataclass(frozen=True)
class DriveCycle:
    t: np.ndarray
    v: np.ndarray
    I_b: np.ndarray
    name: str = ""

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def at(self, t):
        """(v, I_b) ved tidene t; holdes konstant utenfor syklusen."""
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.t, self.v), np.interp(t, self.t, self.I_b)

    def resample(self, dt: float) -> "DriveCycle":
        grid = np.arange(self.t[0], self.t[-1] + 1e-9, dt)
        v, I_b = self.at(grid)
        return DriveCycle(grid, v, I_b, self.name)

    def covers(self, duration: float) -> bool:
        return self.duration + 1e-9 >= duration


def load_drive_cycle(path: Optional[Union[str, Path]] = None) -> DriveCycle:
    """
    Les en syklus fra CSV.

    Raises:
        ConfigError: Manglende kolonner, fallende tid eller lavere rate enn 1 Hz
    """
    path = Path(path) if path is not None else DEFAULT_CYCLE_PATH
    if not path.exists():
        raise ConfigError(f"Fant ikke kjøresyklus: {path}")
    df = pd.read_csv(path)
    missing = [c for c in CYCLE_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigError(f"{path.name} mangler kolonner: {', '.join(missing)}")
    t = df["t_s"].to_numpy(dtype=float)
    if len(t) < 2 or np.any(np.diff(t) <= 0):
        raise ConfigError(f"{path.name}: tidskolonnen må være strengt stigende")
    if np.max(np.diff(t)) > 1.0 + 1e-9:
        raise ConfigError(f"{path.name}: samplingsraten må være minst 1 Hz")
    logger.debug("Leste kjøresyklus %s (%d rader, %.0f s)", path.name, len(t), t[-1] - t[0])
    return DriveCycle(t, df["v_mps"].to_numpy(dtype=float), df["I_b_A"].to_numpy(dtype=float), path.stem)


def battery_current(v, a) -> np.ndarray:
    """Batteristrøm fra veimotstand, akselerasjon og et konstant hjelpeforbruk."""
    v, a = np.asarray(v, dtype=float), np.asarray(a, dtype=float)
    force = (VEHICLE_MASS * 9.81 * ROLLING_RESISTANCE * (v > 0)
             + 0.5 * AIR_DENSITY * DRAG_AREA * v ** 2 + VEHICLE_MASS * a)
    power = force * v
    battery = np.where(power > 0, power / DRIVE_EFFICIENCY, power * REGEN_EFFICIENCY)
    return (battery + AUX_POWER) / PACK_VOLTAGE


def synthetic_cycle(duration: float = 3600.0, rate: float = 10.0) -> DriveCycle:
    """
    Syntetisk WLTC-lignende syklus: fire faser à 1800 s som gjentas.

    Hver tur består av 10 % stillstand, myk akselerasjon, marsj med lett
    fartsvariasjon og myk nedbremsing.
    """
    t = np.arange(int(round(duration * rate)) + 1) / rate
    tc = np.where(t >= 3600.0, 1800.0, np.mod(t, 1800.0))
    v = np.zeros_like(t)
    a = np.zeros_like(t)
    for start, end, trip, vmax_kmh in SYNTHETIC_PHASES:
        in_phase = (tc >= start) & (tc < end)
        vm = vmax_kmh / 3.6
        frac = np.mod((tc - start) / trip, 1.0)
        up = (frac >= 0.1) & (frac < 0.3)
        cruise = (frac >= 0.3) & (frac < 0.8)
        down = frac >= 0.8
        ph = np.pi * (frac - 0.1) / 0.2
        v = np.where(in_phase & up, vm * 0.5 * (1 - np.cos(ph)), v)
        a = np.where(in_phase & up, vm * 0.5 * np.sin(ph) * (np.pi / 0.2) / trip, a)
        ph = 2 * np.pi * 3 * (frac - 0.3) / 0.5
        v = np.where(in_phase & cruise, vm * (1 + 0.08 * np.sin(ph)), v)
        a = np.where(in_phase & cruise, vm * 0.08 * np.cos(ph) * (2 * np.pi * 3 / 0.5) / trip, a)
        ph = np.pi * (frac - 0.8) / 0.2
        v = np.where(in_phase & down, vm * 0.5 * (1 + np.cos(ph)), v)
        a = np.where(in_phase & down, -vm * 0.5 * np.sin(ph) * (np.pi / 0.2) / trip, a)
    a = np.where(v < 1e-9, np.maximum(a, 0.0), a)
    v = np.where(v < 1e-9, 0.0, v)
    return DriveCycle(t, v, battery_current(v, a), "synthetic")


def disturbances(cycle: DriveCycle, T_amb: float, qgen: QgenMap, times) -> np.ndarray:
    """Forstyrrelsesmatrise (6, len(times)) i rekkefølgen T_amb, v, I_b, Q_gen (mot, dcdc, inv)."""
    times = np.asarray(times, dtype=float)
    v, I_b = cycle.at(times)
    q_mot, q_dcdc, q_inv = qgen.evaluate(v)
    return np.vstack([np.full_like(times, T_amb), v, I_b, q_mot, q_dcdc, q_inv])
