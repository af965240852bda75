"""
Genererer stoffdatatabellene i tem/data/.

R134a: 50 log-fordelte trykk fra 1 til 30 bar med en Antoine-tilpasning av
metningskurven, polynomer for entalpi og væsketetthet, realgasskorrigert
damptetthet og entropi integrert langs metningslinjen.
Kjølevæske (50/50 glykol) og luft: 230–400 K i steg på 5 K.

Bruk: python scripts/generate_property_tables.py
"""

from pathlib import Path

import numpy as np
import pandas as pd

DATA_DIR = Path(__file__).parent.parent / "tem" / "data"

R_GAS = 81.49          # J/(kg K), R134a
P_CRIT = 4.059e6       # Pa
S_G0 = 1747.0          # J/(kg K) ved 1 bar


def _fmt(df: pd.DataFrame, formats: dict) -> pd.DataFrame:
    return pd.DataFrame({col: [fmt % v for v in df[col]] for col, fmt in formats.items()})


def refrigerant_table(n: int = 50) -> pd.DataFrame:
    p = np.logspace(np.log10(1e5), np.log10(3e6), n)
    T = 2650.0 / (22.290 - np.log(p))
    dT = T - 273.15
    hl = 200000.0 + 1340.0 * dT + 3.2 * dT ** 2
    hg = 398600.0 + 560.0 * dT - 2.6 * dT ** 2
    rhol = 1295.0 - 3.3 * dT - 0.0135 * dT ** 2
    Z = 1.0 - 0.5 * (p / P_CRIT) ** 0.8
    rhog = p / (Z * R_GAS * T)

    # ds = dh/T − v dp/T langs metningslinjen (trapes)
    sg = np.empty(n)
    sg[0] = S_G0
    for k in range(1, n):
        Tm = 0.5 * (T[k] + T[k - 1])
        vm = 0.5 * (1.0 / rhog[k] + 1.0 / rhog[k - 1])
        sg[k] = sg[k - 1] + (hg[k] - hg[k - 1]) / Tm - vm * (p[k] - p[k - 1]) / Tm
    sl = sg - (hg - hl) / T

    df = pd.DataFrame({"p_Pa": p, "Tsat_K": T, "hl_J_per_kg": hl, "hg_J_per_kg": hg,
                       "rhol": rhol, "rhog": rhog, "s_l": sl, "s_g": sg})
    return _fmt(df, {"p_Pa": "%.6f", "Tsat_K": "%.6f", "hl_J_per_kg": "%.4f", "hg_J_per_kg": "%.4f",
                     "rhol": "%.6f", "rhog": "%.6f", "s_l": "%.6f", "s_g": "%.6f"})


def coolant_table() -> pd.DataFrame:
    T = np.arange(230.0, 400.0 + 1e-9, 5.0)
    dT = T - 273.15
    df = pd.DataFrame({
        "T_K": T,
        "rho_kg_m3": 1085.0 - 0.45 * dT - 0.0012 * dT ** 2,
        "cp_J_per_kgK": 3280.0 + 3.6 * dT,
        "mu_Pa_s": 3.8e-3 * np.exp(-0.028 * (T - 293.15)),
        "k_W_per_mK": 0.38 + 4e-4 * dT,
    })
    return _fmt(df, {"T_K": "%.2f", "rho_kg_m3": "%.4f", "cp_J_per_kgK": "%.4f",
                     "mu_Pa_s": "%.8e", "k_W_per_mK": "%.6f"})


def air_table() -> pd.DataFrame:
    T = np.arange(230.0, 400.0 + 1e-9, 5.0)
    dT = T - 273.15
    df = pd.DataFrame({
        "T_K": T,
        "rho_kg_m3": 101325.0 / (287.05 * T),
        "cp_J_per_kgK": 1005.0 + 0.01 * dT + 0.0004 * dT ** 2,
        "mu_Pa_s": 1.716e-5 * (T / 273.15) ** 1.5 * (273.15 + 110.4) / (T + 110.4),   # Sutherland
        "k_W_per_mK": 0.0241 * (T / 273.15) ** 0.81,
    })
    return _fmt(df, {"T_K": "%.2f", "rho_kg_m3": "%.6f", "cp_J_per_kgK": "%.4f",
                     "mu_Pa_s": "%.8e", "k_W_per_mK": "%.6f"})


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    for name, df in (("r134a_saturation.csv", refrigerant_table()),
                     ("coolant_props.csv", coolant_table()),
                     ("air_props.csv", air_table())):
        df.to_csv(DATA_DIR / name, index=False)
        print(f"Skrev {name} ({len(df)} rader)")


if __name__ == "__main__":
    main()
