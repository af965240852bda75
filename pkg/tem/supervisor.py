"""
Regelbasert overvåkningslag som velger modusflagg v ved hvert samplingstidspunkt.

Reglene er tilstandsløse bortsett fra forrige flagg, som gir hysterese:
et flagg skifter bare når triggeren har passert terskelen med et halvt bånd.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .fluid import saturation_temperature
from .model import P_IN, T_DCDC, T_INV, T_MOT, ModeFlags


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupervisorConfig:
    hp_threshold: float = 283.15        # VP-modus under 10 °C
    parallel_threshold: float = 308.15  # parallellkobling over 35 °C
    hysteresis: float = 2.0             # K, hele båndet
    rb_margin: float = 3.0              # K over T_sat(p_in) for spillvarmegjenvinning

    def __post_init__(self):
        if not self.parallel_threshold > self.hp_threshold:
            raise ConfigError("Parallellterskelen må ligge over varmepumpeterskelen")
        if not self.hysteresis > 0:
            raise ConfigError("Hysteresebåndet må være > 0")


def _switch(signal: float, threshold: float, half_band: float, prev_on: Optional[bool]) -> bool:
    """På når signal > terskel; med forrige tilstand flyttes terskelen et halvt bånd."""
    if prev_on is None:
        return signal > threshold
    if prev_on:
        return signal > threshold - half_band
    return signal > threshold + half_band


def waste_heat_trigger(x) -> float:
    """Motorsløyfens kjølevæsketemperatur minus metningstemperaturen ved p_in."""
    coolant = float(np.mean([x[T_MOT], x[T_INV], x[T_DCDC]]))
    return coolant - float(saturation_temperature(x[P_IN]))


def select_modes(T_amb: float, x, prev: Optional[ModeFlags] = None,
                 cfg: SupervisorConfig = SupervisorConfig()) -> ModeFlags:
    """
    Velg modusflagg fra omgivelsestemperatur og termisk behov.

    Kaldt: varmepumpe, seriekobling, spillvarme når kjølevæsken er varmere
    enn T_sat(p_in) + margin. Mildt: kun radiator. Varmt: parallell med
    chiller og kabinfordamper.
    """
    half = cfg.hysteresis / 2.0
    heat_pump = _switch(-T_amb, -cfg.hp_threshold, half,
                        None if prev is None else bool(prev.delta_hpm))
    hot = _switch(T_amb, cfg.parallel_threshold, half,
                  None if prev is None else prev.delta_ps == 0)

    if heat_pump:
        prev_rb = None if prev is None or not prev.delta_hpm else bool(prev.delta_rb)
        rb = _switch(waste_heat_trigger(x), cfg.rb_margin, half, prev_rb)
        flags = ModeFlags(delta_hpm=1, delta_ps=1, delta_rb=int(rb), delta_ev=0, delta_ch=0, delta_w=1)
    elif hot:
        flags = ModeFlags(delta_hpm=0, delta_ps=0, delta_rb=0, delta_ev=1, delta_ch=1, delta_w=0)
    else:
        flags = ModeFlags(delta_hpm=0, delta_ps=1, delta_rb=0, delta_ev=0, delta_ch=0, delta_w=0)

    if prev is not None and flags != prev:
        logger.debug("Modusskifte %s -> %s ved T_amb=%.2f K", prev.as_tuple(), flags.as_tuple(), T_amb)
    return flags
