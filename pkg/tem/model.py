"""
Kontrollorientert modell (COM) av det integrerte termiske systemet.

Høyresiden ẋ = f(x, u, d, v, γ, θ) er satt sammen av delmodeller for
batteri, pumper, varmevekslere (ε-NTU), varmeelement, vifte, komponenter,
kuldekrets med trykkdynamikk og kabin. Alle funksjoner tar float, arrays
eller ad.Dual, slik at samme kode brukes til simulering og derivasjon.

Tilstand (9):  T_mot, T_inv, T_dcdc, SOC, T_b, p_in, p_out, T_int, T_cair
Pådrag (6):    omega_comp, mdot_bl, omega_mot_p, omega_b_p, Q_ht, omega_fan
Forstyrrelse:  T_amb, v_veh, I_b, Q_gen_mot, Q_gen_dcdc, Q_gen_inv

smooth=True brukes inne i optimeringen: alle massestrømmer får et glatt gulv
(1e-6 kg/s) slik at divisjoner og deriverte er definert overalt. I vanlig
simuleringsmodus gir null strøm null varmeoverføring i vekslerne.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import ad
from .errors import DegenerateCapacitanceError, OutOfRangeError, ZeroFlowError
from .fluid import FluidState, StreamProps
from .params import ExchangerParams, ParameterSet


# === INDEKSER OG NAVN ===

STATE_NAMES = ("T_mot", "T_inv", "T_dcdc", "SOC", "T_b", "p_in", "p_out", "T_int", "T_cair")
INPUT_NAMES = ("omega_comp", "mdot_bl", "omega_mot_p", "omega_b_p", "Q_ht", "omega_fan")
DISTURBANCE_NAMES = ("T_amb", "v_veh", "I_b", "Q_gen_mot", "Q_gen_dcdc", "Q_gen_inv")
MODE_NAMES = ("delta_hpm", "delta_ps", "delta_rb", "delta_ev", "delta_ch", "delta_w")
POWER_NAMES = ("P_comp", "P_bl", "P_mp_pump", "P_bp_pump", "Q_ht", "P_fan")

NX, NU, ND = len(STATE_NAMES), len(INPUT_NAMES), len(DISTURBANCE_NAMES)

T_MOT, T_INV, T_DCDC, SOC, T_B, P_IN, P_OUT, T_INT, T_CAIR = range(NX)
OMEGA_COMP, MDOT_BL, OMEGA_MOT_P, OMEGA_B_P, Q_HT, OMEGA_FAN = range(NU)
T_AMB, V_VEH, I_B, QGEN_MOT, QGEN_DCDC, QGEN_INV = range(ND)

TEMPERATURE_STATES = (T_MOT, T_INV, T_DCDC, T_B, T_INT, T_CAIR)
PRESSURE_STATES = (P_IN, P_OUT)

ZERO_FLOW = 1e-9       # kg/s, grense for "ingen strøm" i simuleringsmodus
MDOT_FLOOR = 1e-6      # kg/s, glatt gulv i optimeringsmodus
ETA_V_MIN, ETA_V_MAX = 0.05, 1.0

COMPONENTS = {"mot": "motor", "inv": "inverter", "dcdc": "dcdc", "b": "battery_mass"}


# === DOMENETYPER ===

class StateVector(NamedTuple):
    T_mot: float
    T_inv: float
    T_dcdc: float
    SOC: float
    T_b: float
    p_in: float
    p_out: float
    T_int: float
    T_cair: float


class ControlInput(NamedTuple):
    omega_comp: float
    mdot_bl: float
    omega_mot_p: float
    omega_b_p: float
    Q_ht: float
    omega_fan: float


class DisturbanceFrame(NamedTuple):
    T_amb: float
    v_veh: float
    I_b: float
    Q_gen_mot: float
    Q_gen_dcdc: float
    Q_gen_inv: float


class GammaVector(NamedTuple):
    """γ1–γ3 motor/inverter/DC-DC, γ4 SOC, γ5 batteri, γ6–γ8 trykk, γ9–γ10 kabin."""
    gamma_1: float = 1.0
    gamma_2: float = 1.0
    gamma_3: float = 1.0
    gamma_4: float = 1.0
    gamma_5: float = 1.0
    gamma_6: float = 1.0
    gamma_7: float = 1.0
    gamma_8: float = 1.0
    gamma_9: float = 1.0
    gamma_10: float = 1.0


@dataclass(frozen=True)
class ModeFlags:
    """Diskrete modusvalg fra overvåkningslaget; holdes faste over horisonten."""
    delta_hpm: int = 1
    delta_ps: int = 1
    delta_rb: int = 0
    delta_ev: int = 0
    delta_ch: int = 0
    delta_w: int = 1

    def __post_init__(self):
        for name in MODE_NAMES:
            if getattr(self, name) not in (0, 1):
                raise OutOfRangeError(f"Modusflagg {name} må være 0 eller 1")
        if self.delta_hpm == 1 and (self.delta_ev or self.delta_ch):
            raise OutOfRangeError("Varmepumpemodus utelukker fordamper og chiller")
        if self.delta_w != self.delta_hpm:
            raise OutOfRangeError("delta_w må være lik delta_hpm")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, n) for n in MODE_NAMES)


def check_state(x) -> None:
    """Kontroller at x oppfyller de fysiske invariantene."""
    x = np.asarray(x, dtype=float)
    temps = x[list(TEMPERATURE_STATES)]
    if np.any(temps < 200.0) or np.any(temps > 450.0):
        raise OutOfRangeError(f"Temperatur utenfor [200, 450] K: {temps}")
    if not 0.0 <= x[SOC] <= 1.0:
        raise OutOfRangeError(f"SOC utenfor [0, 1]: {x[SOC]}")
    if not 0.0 < x[P_IN] < x[P_OUT]:
        raise OutOfRangeError(f"Krever 0 < p_in < p_out (fikk {x[P_IN]:g}, {x[P_OUT]:g})")


# === STRØMNINGSHJELPERE ===

def _flow(mdot, smooth: bool):
    """Effektiv massestrøm og aktiv-maske."""
    if smooth:
        return ad.smooth_floor(mdot, MDOT_FLOOR), True
    active = ad.value(mdot) > ZERO_FLOW
    return ad.where(active, mdot, 1.0), active


def _mask(q, active):
    if active is True:
        return q
    return ad.where(active, q, 0.0)


def dittus_boelter(re, pr):
    return 0.023 * re ** 0.8 * pr ** (1.0 / 3.0)


def effectiveness(ntu):
    return 1.0 - ad.exp(-ntu)


def stream_htc(mdot, props: StreamProps, d: float, flow_area: float):
    """Konvektiv varmeovergang h = Nu·k/D for en strøm gjennom et tverrsnitt."""
    re = mdot * d / (props.mu * flow_area)
    pr = props.cp * props.mu / props.k
    return dittus_boelter(re, pr) * props.k / d


def refrigerant_htc(mdot_ref, params: ParameterSet, geometry: ExchangerParams):
    r = params.refrigerant
    liquid = StreamProps(rho=1.0, cp=r.cp_l, mu=r.mu_l, k=r.k_l)
    return r.two_phase_factor * stream_htc(mdot_ref, liquid, geometry.d_b, geometry.flow_area_b)


# === DELMODELLER ===

def battery_resistance(T_b, soc, params: ParameterSet):
    psi = params.battery.psi
    total = 0.0
    for i in range(3):
        for j in range(3):
            if psi[i][j] != 0.0:
                total = total + psi[i][j] * T_b ** i * soc ** j
    return total


def battery_heat(I_b, T_b, soc, params: ParameterSet):
    """Joule-varme I²·R_b(T_b, SOC)."""
    return I_b * I_b * battery_resistance(T_b, soc, params)


def soc_dot(I_b, params: ParameterSet, gamma_4=1.0):
    """Coulomb-telling; γ4 er en ladeeffektivitetsfaktor (1 = ideell)."""
    return -gamma_4 * I_b / params.battery.c_nom


def pump_flow_power(omega_p, circuit: str, params: ParameterSet, props: StreamProps):
    """Volumetrisk pumpe: (massestrøm, elektrisk effekt)."""
    pump = {"mot": params.pump_mot, "b": params.pump_b}[circuit]
    mdot = props.rho * pump.alpha * pump.eta_vol * pump.v_disp * omega_p / 60.0
    dp = pump.k_circuit * mdot * mdot
    power = mdot * dp / (props.rho * pump.eta)
    return mdot, power


class HxResult(NamedTuple):
    Q: object
    hot_out: object
    cold_out: object
    eps: object
    zero_flow: object


def hx_transfer(hot_in, cold_in, mdot_hot, mdot_cold, stream_props, geometry: ExchangerParams,
                smooth: bool = False) -> HxResult:
    """
    To-strøms ε-NTU-veksler. Den "varme" strømmen bruker side a av geometrien.

    stream_props er (props_hot, props_cold). Q > 0 betyr varme fra varm til
    kald strøm. Ved null strøm i simuleringsmodus returneres Q = 0 og
    uendrede utløp, flagget med zero_flow.
    """
    props_h, props_c = stream_props
    m_h, act_h = _flow(mdot_hot, smooth)
    m_c, act_c = _flow(mdot_cold, smooth)
    active = True if smooth else np.logical_and(act_h, act_c)

    h_h = stream_htc(m_h, props_h, geometry.d_a, geometry.flow_area_a)
    h_c = stream_htc(m_c, props_c, geometry.d_b, geometry.flow_area_b)
    ua = 1.0 / (1.0 / (h_h * geometry.area) + 1.0 / (h_c * geometry.area))
    c_h = m_h * props_h.cp
    c_c = m_c * props_c.cp
    c_min = ad.minimum(c_h, c_c)
    eps = effectiveness(ua / c_min)
    q = _mask(eps * c_min * (hot_in - cold_in), active)
    zero_flow = False if smooth else np.logical_not(active)
    return HxResult(q, hot_in - q / c_h, cold_in + q / c_c, _mask(eps, active), zero_flow)


def hx_two_phase(T_in, T_sat, mdot, props: StreamProps, mdot_ref, params: ParameterSet,
                 geometry: ExchangerParams, smooth: bool = False):
    """
    Veksler mellom en enfase-strøm og tofase kuldemedium (C_ref = ∞).

    Returnerer (Q, T_out, eps); Q > 0 når strømmen avgir varme til kuldemediet.
    """
    m, act_s = _flow(mdot, smooth)
    m_ref, act_r = _flow(mdot_ref, smooth)
    active = True if smooth else np.logical_and(act_s, act_r)
    h_s = stream_htc(m, props, geometry.d_a, geometry.flow_area_a)
    h_r = refrigerant_htc(m_ref, params, geometry)
    ua = 1.0 / (1.0 / (h_s * geometry.area) + 1.0 / (h_r * geometry.area))
    c = m * props.cp
    eps = effectiveness(ua / c)
    q = _mask(eps * c * (T_in - T_sat), active)
    return q, T_in - q / c, _mask(eps, active)


def heater_rise(Q_ht, mdot, cp, params: ParameterSet, smooth: bool = False):
    """Temperaturløft over varmeelementet."""
    h = params.heater
    if smooth:
        return h.eta * Q_ht / (h.alpha * ad.smooth_floor(mdot, MDOT_FLOOR) * cp)
    m, active = _flow(mdot, smooth)
    if np.any(np.logical_not(active) & (ad.value(Q_ht) > 0.0)):
        raise ZeroFlowError("Varmeelementet er på uten kjølevæskestrøm")
    return _mask(h.eta * Q_ht / (h.alpha * m * cp), active)


def heater_outlet(T_in, Q_ht, mdot, cp, params: ParameterSet, smooth: bool = False):
    """
    Kjølevæsketemperatur etter varmeelementet.

    Raises:
        ZeroFlowError: mdot <= 1e-9 mens Q_ht > 0 (kun i simuleringsmodus)
    """
    return T_in + heater_rise(Q_ht, mdot, cp, params, smooth)


def fan_power_airflow(omega_fan, v_veh, params: ParameterSet):
    f = params.fan
    ratio = omega_fan / f.omega_ref
    return f.p_nom / f.eta * ratio * ratio * ratio, f.alpha_ram * v_veh + f.alpha_fan * omega_fan


def blower_power(mdot_bl, params: ParameterSet):
    b = params.blower
    ratio = mdot_bl / b.mdot_ref
    return b.p_nom * ratio * ratio * ratio


def component_cooling(i: str, T_i, coolant_in, mdot_clnt, params: ParameterSet, props: StreamProps,
                      smooth: bool = False):
    """Varme fjernet fra komponent i: konvektivt ε-NTU-ledd pluss ledning gjennom huset."""
    comp = getattr(params, COMPONENTS[i])
    m, active = _flow(mdot_clnt, smooth)
    c = m * props.cp
    ua = stream_htc(m, props, comp.d_ch, comp.flow_area) * comp.area
    eps = effectiveness(ua / c)
    conv = eps * c * (T_i - coolant_in)
    cond = comp.kappa_cond * comp.a_hx / comp.d_ch * (T_i - coolant_in)
    return _mask(conv, active), _mask(cond, active), eps


def component_temp_dot(i: str, T_i, coolant_in, mdot_clnt, Q_gen_i, gamma_i, params: ParameterSet,
                       props: StreamProps, smooth: bool = False):
    comp = getattr(params, COMPONENTS[i])
    conv, cond, _ = component_cooling(i, T_i, coolant_in, mdot_clnt, params, props, smooth)
    return gamma_i * (Q_gen_i - conv - cond) / (comp.mass * comp.cp)


def saturation_temps(p_in, p_out, theta: FluidState):
    """Metningstemperaturer, lineært utviklet rundt θ-punktet."""
    T_lp = theta.T_sat_lp + theta.dTsat_dp_lp * (p_in - theta.p_in)
    T_hp = theta.T_sat_hp + theta.dTsat_dp_hp * (p_out - theta.p_out)
    return T_lp, T_hp


def compressor(omega_comp, fluid: FluidState, params: ParameterSet, p_in=None, p_out=None):
    """(massestrøm, utløpsentalpi, elektrisk effekt, utløpstemperatur)."""
    c = params.compressor
    p_in = fluid.p_in if p_in is None else p_in
    p_out = fluid.p_out if p_out is None else p_out
    eta_v = c.alpha_v * p_out / p_in + c.beta_v
    eta_v = ad.minimum(ad.maximum(eta_v, ETA_V_MIN), ETA_V_MAX)
    mdot = eta_v * omega_comp * c.v_disp * c.alpha_mf / (60.0 * fluid.v_in)
    h2 = fluid.h1 + (fluid.h2s - fluid.h1) / c.eta_isen
    power = mdot * (h2 - fluid.h1) / (c.eta_mech * c.eta_elec)
    _, T_hp = saturation_temps(p_in, p_out, fluid)
    T_out = T_hp + c.alpha_sh * (fluid.h2s - fluid.h1) / fluid.cp_ref_vh
    return mdot, h2, power, T_out


class HxHeats(NamedTuple):
    """Vekslervarmer mot kuldemediet. Q_ce er orientert etter modus (opptak i VP-modus)."""
    Q_ce: object = 0.0
    Q_hx: object = 0.0
    Q_ev: object = 0.0
    Q_ch: object = 0.0
    Q_ic: object = 0.0


def capacitances(fluid: FluidState, params: ParameterSet) -> tuple[float, float]:
    """Termodynamiske kapasitanser Γ_ab og Γ_rj (J/Pa)."""
    r = params.refrigerant
    out = []
    for v, phi, m_w, c_w, drl, drg, dT in (
        (r.v_ab, r.phi_ab, r.m_wab, r.c_ab, fluid.drhohl_dp_lp, fluid.drhohg_dp_lp, fluid.dTsat_dp_lp),
        (r.v_rj, r.phi_rj, r.m_wrj, r.c_rj, fluid.drhohl_dp_hp, fluid.drhohg_dp_hp, fluid.dTsat_dp_hp),
    ):
        gamma = v * ((1 - phi) * drl + phi * drg - 1.0 + m_w * c_w / v * dT)
        nominal = v * ((1 - phi) * abs(drl) + phi * abs(drg) + 1.0 + m_w * c_w / v * abs(dT))
        if abs(gamma) < 1e-6 * nominal:
            raise DegenerateCapacitanceError(f"Kapasitans {gamma:g} J/Pa er degenerert")
        out.append(gamma)
    return out[0], out[1]


def pressure_dot(x, u, d, v: ModeFlags, gamma, fluid: FluidState, params: ParameterSet,
                 hx_heats: HxHeats):
    """Trykkderiverte fra middel-void-modellen for fordamper- og kondensatorsiden."""
    g_ab, g_rj = capacitances(fluid, params)
    mdot, h2, _, _ = compressor(u[OMEGA_COMP], fluid, params, x[P_IN], x[P_OUT])
    q_ab = (v.delta_hpm * hx_heats.Q_ce + v.delta_rb * hx_heats.Q_hx
            + v.delta_ev * hx_heats.Q_ev + v.delta_ch * hx_heats.Q_ch)
    q_rj = v.delta_w * hx_heats.Q_ic + (1 - v.delta_hpm) * hx_heats.Q_ce
    dp_in = gamma[5] * (q_ab + mdot * (fluid.h4 - fluid.h1)) / g_ab
    dp_out = gamma[6] * (-q_rj + gamma[7] * mdot * (h2 - fluid.h3)) / g_rj
    return dp_in, dp_out


def envelope_resistance(env) -> float:
    return env.beta * (1.0 / (env.u * env.area) + env.thickness / (env.conductivity * env.area))


def total_resistance(params: ParameterSet) -> float:
    """Parallellkobling av glass, dører og tak."""
    return 1.0 / sum(1.0 / envelope_resistance(e) for e in (params.glass, params.doors, params.roof))


def ic_air_inlet(T_amb, T_cair, params: ParameterSet):
    r = params.cabin.r_rec
    return (1.0 - r) * T_amb + r * T_cair


def cabin_dots(x, u, d, gamma, params: ParameterSet, Q_ic, Q_ev=0.0):
    """
    To-node kabinmodell (interiørmasse og kabinluft).

    Q_ic er varmen innerkondensatoren avgir til luften, Q_ev varmen
    fordamperen tar ut; begge allerede maskert med sine flagg.
    """
    cab = params.cabin
    r_total = total_resistance(params)
    T_int, T_cair, T_amb = x[T_INT], x[T_CAIR], d[T_AMB]
    dT_int = gamma[8] * ((T_amb - T_int) / r_total + cab.alpha_int * (T_cair - T_int) / r_total) \
        / (cab.m_int * cab.cp_int)
    # mdot·cp·(T_vent - T_cair) uten å dele på mdot_bl
    vent = u[MDOT_BL] * cab.cp_air * (ic_air_inlet(T_amb, T_cair, params) - T_cair) + Q_ic - Q_ev
    dT_cair = gamma[9] * (vent + cab.q_human + (T_int - T_cair) / (cab.alpha_r_int * r_total)) / cab.c_air
    return dT_int, dT_cair


# === KJØLEKRETS ===

def _loop_elements(names, T, mdot, theta: FluidState, T_lp, m_ref, T_amb, mdot_air, u, v: ModeFlags,
                   params: ParameterSet, smooth: bool):
    """Affine avbildninger T_ut = a·T_inn + b for hvert element i en sløyfe."""
    props = theta.coolant
    m, active = _flow(mdot, smooth)
    c = m * props.cp
    elements = []
    for name in names:
        if name in COMPONENTS:
            comp = getattr(params, COMPONENTS[name])
            eps = effectiveness(stream_htc(m, props, comp.d_ch, comp.flow_area) * comp.area / c)
            elements.append((name, 1.0 - eps, eps * T[name], eps))
        elif name == "heater":
            elements.append((name, 1.0, heater_rise(u[Q_HT], mdot, props.cp, params, smooth), None))
        elif name in ("rb", "ch"):
            geom = params.hx_rb if name == "rb" else params.hx_ch
            flag = v.delta_rb if name == "rb" else v.delta_ch
            m_r, _ = _flow(m_ref, smooth)
            h_c = stream_htc(m, props, geom.d_a, geom.flow_area_a)
            h_r = refrigerant_htc(m_r, params, geom)
            ua = 1.0 / (1.0 / (h_c * geom.area) + 1.0 / (h_r * geom.area))
            eps = effectiveness(ua / c)
            if not smooth:
                eps = _mask(eps, ad.value(m_ref) > ZERO_FLOW)
            elements.append((name, 1.0 - flag * eps, flag * eps * T_lp, eps))
        elif name == "rad":
            flag = 1 - v.delta_hpm
            geom = params.hx_rad
            m_a, act_a = _flow(mdot_air, smooth)
            h_c = stream_htc(m, props, geom.d_a, geom.flow_area_a)
            h_a = stream_htc(m_a, theta.air, geom.d_b, geom.flow_area_b)
            ua = 1.0 / (1.0 / (h_c * geom.area) + 1.0 / (h_a * geom.area))
            c_a = m_a * theta.air.cp
            c_min = ad.minimum(c, c_a)
            frac = _mask(flag * effectiveness(ua / c_min) * c_min / c, act_a)
            elements.append((name, 1.0 - frac, frac * T_amb, None))
    return elements, c, active


def coolant_loop(names, T, mdot, theta, T_lp, m_ref, T_amb, mdot_air, u, v, params, smooth):
    """
    Løs sløyfen uten termisk masse: innløpstemperaturen er fastpunktet til
    komposisjonen av alle affine elementer.

    Returnerer dict med Q_cool per komponent og kuldemediets varmeopptak
    (Q_rb, Q_ch, umaskert med flagg), samt innløpstemperaturer.
    """
    elements, c, active = _loop_elements(names, T, mdot, theta, T_lp, m_ref, T_amb, mdot_air, u, v,
                                         params, smooth)
    a_tot, b_tot = 1.0, 0.0
    for _, a, b, _ in elements:
        a_tot, b_tot = a * a_tot, a * b_tot + b
    T_in = b_tot / (1.0 - a_tot)

    out = {"inlets": {}}
    props = theta.coolant
    for name, a, b, eps in elements:
        out["inlets"][name] = T_in
        if name in COMPONENTS:
            comp = getattr(params, COMPONENTS[name])
            cond = comp.kappa_cond * comp.a_hx / comp.d_ch * (T[name] - T_in)
            out[f"Q_cool_{name}"] = _mask(eps * c * (T[name] - T_in) + cond, active)
        elif name in ("rb", "ch"):
            out[f"Q_{name}"] = _mask(eps * c * (T_in - T_lp), active)
        T_in = a * T_in + b
    out["outlet"] = T_in
    return out


SERIES_LOOP = ("mot", "inv", "dcdc", "heater", "b", "rb", "ch", "rad")
MOTOR_LOOP = ("mot", "inv", "dcdc", "rb", "rad")
BATTERY_LOOP = ("heater", "b", "ch")


@dataclass
class ModelOutputs:
    xdot: object
    powers: dict
    heats: HxHeats
    T_vent: object
    T_comp_out: object
    mdot_ref: object


def evaluate(x, u, d, v: ModeFlags, gamma, theta: FluidState, params: ParameterSet,
             smooth: bool = False) -> ModelOutputs:
    """Evaluer hele modellen og returner derivert pluss mellomstørrelser."""
    T = {"mot": x[T_MOT], "inv": x[T_INV], "dcdc": x[T_DCDC], "b": x[T_B]}
    p_in, p_out = x[P_IN], x[P_OUT]
    T_amb = d[T_AMB]
    T_lp, T_hp = saturation_temps(p_in, p_out, theta)

    m_mp, P_mp = pump_flow_power(u[OMEGA_MOT_P], "mot", params, theta.coolant)
    m_bp, P_bp = pump_flow_power(u[OMEGA_B_P], "b", params, theta.coolant)
    P_fan, m_air = fan_power_airflow(u[OMEGA_FAN], d[V_VEH], params)
    m_ref, h2, P_comp, T_comp_out = compressor(u[OMEGA_COMP], theta, params, p_in, p_out)

    # Frontveksler: fordamper i VP-modus, kondensator ellers
    q_ce_hp, _, _ = hx_two_phase(T_amb, T_lp, m_air, theta.air, m_ref, params, params.hx_ce, smooth)
    q_ce_ac, _, _ = hx_two_phase(T_amb, T_hp, m_air, theta.air, m_ref, params, params.hx_ce, smooth)
    q_ce = v.delta_hpm * q_ce_hp - (1 - v.delta_hpm) * q_ce_ac

    # Luftvei: blanding -> kabinfordamper -> innerkondensator -> kabin
    m_bl = u[MDOT_BL]
    T_mix = ic_air_inlet(T_amb, x[T_CAIR], params)
    q_ev, T_after_ev, _ = hx_two_phase(T_mix, T_lp, m_bl, theta.air, m_ref, params, params.hx_ev, smooth)
    T_ic_in = T_mix + v.delta_ev * (T_after_ev - T_mix)
    q_ic_neg, _, _ = hx_two_phase(T_ic_in, T_hp, m_bl, theta.air, m_ref, params, params.hx_ic, smooth)
    q_ic = -q_ic_neg
    m_bl_eff, _ = _flow(m_bl, smooth)
    T_vent = T_ic_in + v.delta_w * q_ic / (m_bl_eff * params.cabin.cp_air)

    if v.delta_ps:
        loops = [coolant_loop(SERIES_LOOP, T, m_mp + m_bp, theta, T_lp, m_ref, T_amb, m_air, u, v,
                              params, smooth)]
    else:
        loops = [
            coolant_loop(MOTOR_LOOP, T, m_mp, theta, T_lp, m_ref, T_amb, m_air, u, v, params, smooth),
            coolant_loop(BATTERY_LOOP, T, m_bp, theta, T_lp, m_ref, T_amb, m_air, u, v, params, smooth),
        ]
    merged = {}
    for loop in loops:
        merged.update({k: val for k, val in loop.items() if k.startswith("Q_")})

    heats = HxHeats(Q_ce=q_ce, Q_hx=merged.get("Q_rb", 0.0), Q_ev=q_ev, Q_ch=merged.get("Q_ch", 0.0),
                    Q_ic=q_ic)

    q_gen = {"mot": d[QGEN_MOT], "inv": d[QGEN_INV], "dcdc": d[QGEN_DCDC],
             "b": battery_heat(d[I_B], x[T_B], x[SOC], params)}
    gamma_idx = {"mot": 0, "inv": 1, "dcdc": 2, "b": 4}
    comp_dots = {}
    for name in ("mot", "inv", "dcdc", "b"):
        comp = getattr(params, COMPONENTS[name])
        comp_dots[name] = gamma[gamma_idx[name]] * (q_gen[name] - merged[f"Q_cool_{name}"]) \
            / (comp.mass * comp.cp)

    dp_in, dp_out = pressure_dot(x, u, d, v, gamma, theta, params, heats)
    dT_int, dT_cair = cabin_dots(x, u, d, gamma, params, v.delta_w * q_ic, v.delta_ev * q_ev)

    xdot = ad.stack([
        comp_dots["mot"], comp_dots["inv"], comp_dots["dcdc"],
        # γ4 skalerer SOC-leddet (ladeeffektivitet); soc_dot med standard γ4 = 1 er ren Coulomb-telling
        soc_dot(d[I_B], params, gamma[3]),
        comp_dots["b"], dp_in, dp_out, dT_int, dT_cair,
    ])
    powers = {
        "P_comp": P_comp,
        "P_bl": blower_power(m_bl, params),
        "P_mp_pump": P_mp,
        "P_bp_pump": P_bp,
        "Q_ht": u[Q_HT],
        "P_fan": P_fan,
    }
    return ModelOutputs(xdot, powers, heats, T_vent, T_comp_out, m_ref)


def rhs(x, u, d, v: ModeFlags, gamma, theta: FluidState, params: ParameterSet, smooth: bool = False):
    """ẋ = f(x, u, d, v, γ, θ)."""
    return evaluate(x, u, d, v, gamma, theta, params, smooth).xdot


def power_breakdown(x, u, theta: FluidState, params: ParameterSet) -> dict:
    """Alle ledd i P_TEM. Trykkene tas fra x, resten av θ holdes fast."""
    _, _, P_comp, _ = compressor(u[OMEGA_COMP], theta, params, x[P_IN], x[P_OUT])
    _, P_mp = pump_flow_power(u[OMEGA_MOT_P], "mot", params, theta.coolant)
    _, P_bp = pump_flow_power(u[OMEGA_B_P], "b", params, theta.coolant)
    P_fan, _ = fan_power_airflow(u[OMEGA_FAN], 0.0, params)
    return {
        "P_comp": P_comp,
        "P_bl": blower_power(u[MDOT_BL], params),
        "P_mp_pump": P_mp,
        "P_bp_pump": P_bp,
        "Q_ht": u[Q_HT],
        "P_fan": P_fan,
    }


def total_power(x, u, theta: FluidState, params: ParameterSet):
    """P_TEM = P_comp + P_bl + P_mp + P_bp + Q_ht + P_fan."""
    parts = power_breakdown(x, u, theta, params)
    total = 0.0
    for name in POWER_NAMES:
        total = total + parts[name]
    return total
