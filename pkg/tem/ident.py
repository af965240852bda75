"""
Vindusvis identifikasjon av skaleringsparametrene γ og parameterkartet
som controlleren interpolerer i.

Hvert vindu tilpasses med begrenset ikke-lineær minste kvadraters metode
(scipy.optimize.least_squares) ved enkel skyting fra referansetilstanden
ved vinduets start. Sensitivitetene dx/dγ kommer fra foroverderivering
gjennom RK4-stegene, så Jacobi-matrisen er eksakt.
"""

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from . import ad
from .discretize import StageParams, operating_point, step
from .errors import ConfigError, EmptyMapError, NonFiniteError, SolverDivergedError
from .model import (
    DISTURBANCE_NAMES, I_B, INPUT_NAMES, MODE_NAMES, NX, STATE_NAMES, T_AMB, ModeFlags,
)
from .ocp import STATE_SCALE, scale_state
from .params import N_GAMMA, ParameterSet, default_gamma


logger = logging.getLogger(__name__)

GAMMA_BOUNDS = (0.1, 10.0)
MIN_SPAN = 60.0
DUPLICATE_DISTANCE = 1e-9

# Tilstandsvekting: invers kvadrert fysisk skala
DEFAULT_G = 1.0 / STATE_SCALE ** 2


# === TYPER ===

@dataclass
class IdentWindow:
    """Referansetrajektorie over [t_0, t_M−1] med pådrag, forstyrrelser og modus per sample."""
    t: np.ndarray
    x_ref: np.ndarray                  # (9, M)
    u: np.ndarray                      # (6, M), holdt over [t_k, t_{k+1})
    d: np.ndarray                      # (6, M)
    modes: Sequence[ModeFlags]
    G: np.ndarray = field(default_factory=lambda: DEFAULT_G.copy())
    window_id: int = 0
    min_span: float = MIN_SPAN

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x_ref = np.asarray(self.x_ref, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        M = len(self.t)
        if M < 2 or np.any(np.diff(self.t) <= 0):
            raise ValueError("Vinduets tidsstempler må være strengt stigende")
        if self.t[-1] - self.t[0] < self.min_span:
            raise ValueError(f"Vinduet er {self.t[-1] - self.t[0]:g} s, minst {self.min_span:g} s kreves")
        if self.x_ref.shape != (NX, M) or self.u.shape[1] != M or self.d.shape[1] != M:
            raise ValueError("Referanse, pådrag og forstyrrelser må ha én kolonne per sample")
        if isinstance(self.modes, ModeFlags):
            self.modes = [self.modes] * M
        if len(self.modes) != M:
            raise ValueError("Det må finnes ett modussett per sample")
        if self.G.shape != (NX,) or np.any(self.G < 0):
            raise ValueError("G må være en ikke-negativ diagonal med 9 elementer")
        self._thetas = None

    @property
    def span(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def thetas(self) -> list:
        """θ_k fra referansetrykkene ved hvert sample."""
        if self._thetas is None:
            self._thetas = [operating_point(self.x_ref[:, k], self.d[T_AMB, k]) for k in range(len(self.t))]
        return self._thetas

    def mean_condition(self) -> tuple[float, np.ndarray, float]:
        """(snitt T_amb, snitt-tilstand, snitt I_b) over vinduet."""
        return float(np.mean(self.d[T_AMB])), self.x_ref.mean(axis=1), float(np.mean(self.d[I_B]))


@dataclass
class Anchor:
    T_amb: float
    x_mean: np.ndarray
    I_b: float
    gamma: np.ndarray
    window_id: int = 0
    residual: float = 0.0

    @property
    def features(self) -> np.ndarray:
        return anchor_features(self.T_amb, self.x_mean, self.I_b)


def anchor_features(T_amb: float, x, I_b: float) -> np.ndarray:
    """Normalisert driftspunkt [T_amb/10, skalert x, I_b/100]."""
    return np.concatenate([[T_amb / 10.0], scale_state(x), [I_b / 100.0]])


@dataclass
class GammaMap:
    anchors: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.anchors)

    def add(self, anchor: Anchor) -> None:
        """Legg til anker; samme driftspunkt erstatter det eldre ankeret."""
        gamma = np.asarray(anchor.gamma, dtype=float)
        if np.any(gamma < GAMMA_BOUNDS[0]) or np.any(gamma > GAMMA_BOUNDS[1]):
            raise ValueError(f"γ utenfor identifikasjonsgrensene {GAMMA_BOUNDS}")
        for i, old in enumerate(self.anchors):
            if np.linalg.norm(old.features - anchor.features) < DUPLICATE_DISTANCE:
                logger.warning("Ankeret fra vindu %d erstatter vindu %d (samme driftspunkt)",
                               anchor.window_id, old.window_id)
                self.anchors[i] = anchor
                return
        self.anchors.append(anchor)

    def feature_matrix(self) -> np.ndarray:
        if not self.anchors:
            raise EmptyMapError("Parameterkartet har ingen ankre")
        return np.stack([a.features for a in self.anchors])

    def gamma_matrix(self) -> np.ndarray:
        if not self.anchors:
            raise EmptyMapError("Parameterkartet har ingen ankre")
        return np.stack([np.asarray(a.gamma, dtype=float) for a in self.anchors])

    # --- lagring ---

    def save(self, path: Union[str, Path]) -> Path:
        """Skriv kartet som INI med én seksjon [anchor.N] per anker."""
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for i, a in enumerate(self.anchors):
            section = {
                "T_amb": repr(float(a.T_amb)),
                "I_b": repr(float(a.I_b)),
                "window_id": str(int(a.window_id)),
                "residual": repr(float(a.residual)),
            }
            for name, val in zip(STATE_NAMES, a.x_mean):
                section[f"x_{name}"] = repr(float(val))
            for j, val in enumerate(a.gamma):
                section[f"gamma_{j + 1}"] = repr(float(val))
            parser[f"anchor.{i}"] = section
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            parser.write(fh)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GammaMap":
        parser = configparser.ConfigParser()
        parser.optionxform = str
        if not parser.read(path):
            raise ConfigError(f"Fant ikke parameterkart: {path}")
        out = cls()
        sections = sorted((s for s in parser.sections() if s.startswith("anchor.")),
                          key=lambda s: int(s.split(".", 1)[1]))
        for name in sections:
            sec = parser[name]
            try:
                out.anchors.append(Anchor(
                    T_amb=float(sec["T_amb"]),
                    x_mean=np.array([float(sec[f"x_{s}"]) for s in STATE_NAMES]),
                    I_b=float(sec["I_b"]),
                    gamma=np.array([float(sec[f"gamma_{j + 1}"]) for j in range(N_GAMMA)]),
                    window_id=int(sec.get("window_id", "0")),
                    residual=float(sec.get("residual", "0")),
                ))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"Ugyldig seksjon [{name}] i {path}: {exc}")
        if not out.anchors:
            raise EmptyMapError(f"Ingen ankre i {path}")
        return out


# === SIMULERING OG TILPASNING ===

def simulate_window(window: IdentWindow, gamma, params: ParameterSet):
    """
    COM fra x_ref(t_0) med γ over vinduet; (9, M) som array eller Dual.

    Startverdien settes lik referansen og bærer ingen sensitivitet.
    """
    x = window.x_ref[:, 0].copy()
    out = [x]
    thetas = window.thetas
    for k in range(len(window.t) - 1):
        z = StageParams(window.d[:, k], window.modes[k], gamma, thetas[k])
        x = step(x, window.u[:, k], z, float(window.t[k + 1] - window.t[k]), params, smooth=True)
        out.append(x)
    return ad.stack(out, axis=1)


def _residual_weights(window: IdentWindow) -> np.ndarray:
    return np.sqrt(window.G)[:, None]


def window_residual(window: IdentWindow, gamma, params: ParameterSet) -> float:
    """Diskretisert ∫‖x_M − x(·;γ)‖²_G over vinduet."""
    x = ad.value(simulate_window(window, np.asarray(gamma, float), params))
    r = _residual_weights(window) * (x[:, 1:] - window.x_ref[:, 1:])
    return float(np.sum(r ** 2))


def fit_window(window: IdentWindow, gamma_init=None, bounds: tuple = GAMMA_BOUNDS,
               params: Optional[ParameterSet] = None, max_nfev: int = 50) -> tuple[np.ndarray, float]:
    """
    Tilpass γ for ett vindu. Returnerer (γ, residual).

    G = 0 gir gamma_init tilbake. Resultatet er aldri dårligere enn startgjetningen.

    Raises:
        SolverDivergedError: Simuleringen ga ikke-endelige verdier
    """
    if params is None:
        raise ValueError("fit_window trenger et ParameterSet")
    gamma0 = default_gamma() if gamma_init is None else np.asarray(gamma_init, dtype=float)
    lo, hi = bounds
    if np.any(gamma0 < lo) or np.any(gamma0 > hi):
        raise ValueError(f"gamma_init må ligge innenfor [{lo}, {hi}]")
    if not np.any(window.G > 0):
        return gamma0.copy(), 0.0

    weights = _residual_weights(window)
    M = len(window.t)

    def simulate(gamma):
        try:
            return simulate_window(window, ad.seed(gamma), params)
        except NonFiniteError as exc:
            raise SolverDivergedError(f"Identifikasjon i vindu {window.window_id} divergerte: {exc}")

    cache = {}

    def evaluate(gamma):
        key = np.asarray(gamma).tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = simulate(gamma)
        return cache[key]

    def fun(gamma):
        x = ad.value(evaluate(gamma))
        return (weights * (x[:, 1:] - window.x_ref[:, 1:])).ravel()

    def jac(gamma):
        tangent = ad.jacobian(evaluate(gamma))[:, 1:, :]
        return (weights[:, :, None] * tangent).reshape(NX * (M - 1), N_GAMMA)

    start_cost = float(np.sum(fun(gamma0) ** 2))
    result = least_squares(fun, gamma0, jac=jac, bounds=(lo, hi), method="trf", x_scale="jac",
                           max_nfev=max_nfev)
    if not np.all(np.isfinite(result.x)):
        raise SolverDivergedError(f"Identifikasjon i vindu {window.window_id} ga ikke-endelig γ")
    gamma = np.clip(result.x, lo, hi)
    cost = float(np.sum(fun(gamma) ** 2))
    if cost > start_cost:
        return gamma0.copy(), start_cost
    logger.debug("Vindu %d: residual %.3e -> %.3e (%d evalueringer)",
                 window.window_id, start_cost, cost, result.nfev)
    return gamma, cost


def build_map(windows: Sequence[IdentWindow], fits: Sequence[tuple]) -> GammaMap:
    """Forankre hvert vindus γ i vinduets snitt-driftspunkt."""
    if len(windows) != len(fits):
        raise ValueError("Det må være én tilpasning per vindu")
    out = GammaMap()
    for window, (gamma, residual) in zip(windows, fits):
        T_amb, x_mean, I_b = window.mean_condition()
        out.add(Anchor(T_amb=T_amb, x_mean=x_mean, I_b=I_b, gamma=np.asarray(gamma, float),
                       window_id=window.window_id, residual=float(residual)))
    return out


# === REFERANSEDATA ===

def load_reference(path: Union[str, Path]) -> pd.DataFrame:
    """Les en referansetrajektorie med samme kolonner som kjøringenes timeseries.csv."""
    df = pd.read_csv(path)
    required = ["t_s", *STATE_NAMES, *INPUT_NAMES, *DISTURBANCE_NAMES, *MODE_NAMES]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ConfigError(f"{path} mangler kolonner: {', '.join(missing)}")
    return df


def make_windows(df: pd.DataFrame, length: float = 300.0, overlap: float = 150.0,
                 G=None, first_id: int = 0) -> list[IdentWindow]:
    """Del en referanse i overlappende vinduer; en kort hale slås sammen med siste vindu."""
    if not 0 <= overlap < length:
        raise ValueError("Overlappen må ligge i [0, lengde)")
    t = df["t_s"].to_numpy(dtype=float)
    x = df[list(STATE_NAMES)].to_numpy(dtype=float).T
    u = df[list(INPUT_NAMES)].to_numpy(dtype=float).T
    d = df[list(DISTURBANCE_NAMES)].to_numpy(dtype=float).T
    flags = df[list(MODE_NAMES)].to_numpy(dtype=int)
    modes = [ModeFlags(*row) for row in flags]
    G = DEFAULT_G.copy() if G is None else np.asarray(G, dtype=float)

    windows = []
    stride = length - overlap
    start = t[0]
    while start + MIN_SPAN <= t[-1] + 1e-9:
        end = start + length
        if t[-1] - end < MIN_SPAN:
            end = t[-1]
        idx = np.flatnonzero((t >= start - 1e-9) & (t <= end + 1e-9))
        windows.append(IdentWindow(t[idx], x[:, idx], u[:, idx], d[:, idx], [modes[i] for i in idx],
                                   G=G, window_id=first_id + len(windows)))
        if end >= t[-1]:
            break
        start += stride
    return windows


def identify(frames: Sequence[pd.DataFrame], params: ParameterSet, length: float = 300.0,
             overlap: float = 150.0, gamma_init=None) -> GammaMap:
    """Hele identifikasjonsløpet: vinduer, tilpasning per vindu og kart."""
    windows = []
    for df in frames:
        windows.extend(make_windows(df, length, overlap, first_id=len(windows)))
    fits = []
    for window in windows:
        gamma, residual = fit_window(window, gamma_init, params=params)
        logger.info("Vindu %d (T_amb=%.1f K): residual %.3e", window.window_id,
                    float(np.mean(window.d[T_AMB])), residual)
        fits.append((gamma, residual))
    return build_map(windows, fits)
