"""
Rapportgenerator - Samler én eller flere kjøringer i en PDF med grafer.

Bruker matplotlib til kabintemperatur, effekt per aktuator, batteri,
kretsløpstrykk, pådrag og moduser. Med to kjøringer på samme scenario får
rapporten også en sammenligningsside.
"""

import os
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
matplotlib.use('Agg')  # Non-interactive backend for PDF generation

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.backends.backend_pdf import PdfPages

from .harness import ComparisonReport, RunResult
from .model import INPUT_NAMES, MODE_NAMES, POWER_NAMES


# -- Konsistent fargepalett --
COLORS = {
    'primary': '#2E5090',
    'secondary': '#4A90D9',
    'accent': '#E8913A',
    'positive': '#5BA55B',
    'negative': '#D94A4A',
    'neutral': '#888888',
    'nmpc': '#2E5090',
    'baseline': '#E8913A',
}

CATEGORY_PALETTE = [
    '#2E5090', '#E8913A', '#5BA55B', '#D94A4A', '#8E6BBF', '#4ABBD9',
]

LABELS = {
    'P_comp': 'Kompressor',
    'P_bl': 'Vifte kabin',
    'P_mp_pump': 'Motorpumpe',
    'P_bp_pump': 'Batteripumpe',
    'Q_ht': 'Varmer',
    'P_fan': 'Radiatorvifte',
    'nmpc': 'NMPC',
    'baseline': 'Regelbasert',
}

KELVIN = 273.15


def _setup_figure(title: str, figsize=(10, 6), nrows: int = 1):
    """Opprett en figur med konsistent stil."""
    fig, axes = plt.subplots(nrows, 1, figsize=figsize, sharex=True, squeeze=False)
    fig.suptitle(title, fontsize=14, fontweight='bold', y=0.98)
    for ax in axes[:, 0]:
        ax.spines['top'].set_visible(False)
        ax.spines['right'].set_visible(False)
    return fig, axes[:, 0]


def _save_page(pdf, fig):
    """Lagre figur til PDF og lukk."""
    fig.tight_layout(rect=[0, 0, 1, 0.95])
    pdf.savefig(fig)
    plt.close(fig)


def _label(result: RunResult) -> str:
    controller = result.scenario.controller
    return LABELS.get(controller, controller)


def _color(result: RunResult, i: int) -> str:
    return COLORS.get(result.scenario.controller, CATEGORY_PALETTE[i % len(CATEGORY_PALETTE)])


def _minutes(df):
    return df['t_s'].to_numpy(dtype=float) / 60.0


# ============================================================
# Individuelle grafer
# ============================================================

def plot_cabin_temperature(results: Sequence[RunResult], pdf):
    """Kabinluft mot settpunkt og komfortbånd."""
    fig, (ax,) = _setup_figure('Kabintemperatur')
    setpoint = results[0].scenario.setpoint - KELVIN
    ax.axhspan(setpoint - 1.5, setpoint + 1.5, color=COLORS['positive'], alpha=0.12, label='±1.5 °C')
    ax.axhline(setpoint, color=COLORS['neutral'], linestyle='--', linewidth=1)
    for i, r in enumerate(results):
        ax.plot(_minutes(r.timeseries), r.timeseries['T_cair'] - KELVIN, color=_color(r, i), label=_label(r))
    ax.set_xlabel('Tid [min]')
    ax.set_ylabel('T_cair [°C]')
    ax.legend(loc='lower right')
    _save_page(pdf, fig)


def plot_power(result: RunResult, pdf):
    """Stablet effekt per aktuator for én kjøring."""
    df = result.timeseries
    fig, (ax,) = _setup_figure(f'Effekt per aktuator ({_label(result)})')
    series = [df[f'{name}_W'].to_numpy(dtype=float) / 1e3 for name in POWER_NAMES]
    ax.stackplot(_minutes(df), *series, labels=[LABELS[n] for n in POWER_NAMES], colors=CATEGORY_PALETTE)
    ax.set_xlabel('Tid [min]')
    ax.set_ylabel('Effekt [kW]')
    ax.legend(loc='upper right', fontsize=9)
    _save_page(pdf, fig)


def plot_battery(results: Sequence[RunResult], pdf):
    """Batteritemperatur og ladetilstand."""
    fig, (ax_t, ax_s) = _setup_figure('Batteri', figsize=(10, 7), nrows=2)
    for i, r in enumerate(results):
        t = _minutes(r.timeseries)
        ax_t.plot(t, r.timeseries['T_b'] - KELVIN, color=_color(r, i), label=_label(r))
        ax_s.plot(t, 100 * r.timeseries['SOC'], color=_color(r, i))
    ax_t.set_ylabel('T_b [°C]')
    ax_t.legend(loc='lower right')
    ax_s.set_ylabel('SOC [%]')
    ax_s.set_xlabel('Tid [min]')
    _save_page(pdf, fig)


def plot_pressures(results: Sequence[RunResult], pdf):
    """Lav- og høytrykk i kjølekretsen."""
    fig, (ax,) = _setup_figure('Kretsløpstrykk')
    for i, r in enumerate(results):
        t = _minutes(r.timeseries)
        ax.plot(t, r.timeseries['p_out'] / 1e5, color=_color(r, i), label=f'{_label(r)} p_out')
        ax.plot(t, r.timeseries['p_in'] / 1e5, color=_color(r, i), linestyle=':', label=f'{_label(r)} p_in')
    ax.set_xlabel('Tid [min]')
    ax.set_ylabel('Trykk [bar]')
    ax.legend(loc='upper right', fontsize=9)
    _save_page(pdf, fig)


def plot_inputs(result: RunResult, pdf):
    """Alle pådrag og moduser for én kjøring."""
    df = result.timeseries
    fig, axes = _setup_figure(f'Pådrag og moduser ({_label(result)})', figsize=(10, 12),
                              nrows=len(INPUT_NAMES) + 1)
    t = _minutes(df)
    for ax, name in zip(axes, INPUT_NAMES):
        ax.plot(t, df[name], color=COLORS['primary'], linewidth=1)
        ax.set_ylabel(name, fontsize=8)
    modes = axes[-1]
    for j, name in enumerate(MODE_NAMES):
        modes.step(t, df[name] * 0.8 + j, where='post', color=CATEGORY_PALETTE[j], linewidth=1)
    modes.set_yticks(np.arange(len(MODE_NAMES)) + 0.4)
    modes.set_yticklabels(MODE_NAMES, fontsize=7)
    modes.set_xlabel('Tid [min]')
    _save_page(pdf, fig)


def plot_energy(results: Sequence[RunResult], pdf):
    """Stolpediagram: energi per aktuator og kjøring."""
    fig, (ax,) = _setup_figure('Energiforbruk per aktuator')
    width = 0.8 / len(results)
    x = np.arange(len(POWER_NAMES))
    for i, r in enumerate(results):
        values = [float(r.metrics.get(f'energy_{n}_wh', 0.0)) for n in POWER_NAMES]
        ax.bar(x + i * width, values, width, color=_color(r, i), edgecolor='white',
               label=f'{_label(r)} ({r.energy_wh:.0f} Wh)')
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([LABELS[n] for n in POWER_NAMES], rotation=20)
    ax.set_ylabel('Energi [Wh]')
    ax.legend()
    _save_page(pdf, fig)


# ============================================================
# Forside
# ============================================================

def _add_cover_page(results: Sequence[RunResult], comparison: Optional[ComparisonReport], pdf):
    """Lag en forside med nøkkeltall."""
    fig = plt.figure(figsize=(10, 6))
    fig.patch.set_facecolor('white')
    scenario = results[0].scenario

    fig.text(0.5, 0.88, 'TERMISK ENERGISTYRING', fontsize=22, fontweight='bold',
             ha='center', color=COLORS['primary'])
    fig.text(0.5, 0.81, f'{scenario.name} · {scenario.ambient - KELVIN:.1f} °C · '
                        f'{datetime.now().strftime("%d.%m.%Y")}',
             fontsize=12, ha='center', color=COLORS['neutral'])

    y = 0.68
    for r in results:
        m = r.metrics
        ttsp = m.get('time_to_setpoint_s', np.nan)
        lines = [
            ('Kontroller', _label(r)),
            ('Energi', f"{m.get('energy_wh', 0.0):.1f} Wh"),
            ('Tid til settpunkt', '-' if ttsp != ttsp else f'{ttsp / 60:.1f} min'),
            ('Komfortandel', f"{100 * m.get('comfort_fraction', 0.0):.1f}%"),
            ('Reserveløsninger', f"{int(m.get('fallback_count', 0))}"),
        ]
        for label, value in lines:
            fig.text(0.35, y, label, fontsize=11, ha='right', color=COLORS['neutral'])
            fig.text(0.40, y, value, fontsize=11, ha='left', fontweight='bold', color=COLORS['primary'])
            y -= 0.05
        y -= 0.03

    if comparison is not None:
        fig.text(0.5, max(y, 0.10), f'Energireduksjon: {comparison.reduction():.1f}%',
                 fontsize=14, ha='center', fontweight='bold', color=COLORS['positive'])

    fig.text(0.5, 0.03, 'Generert av tem', fontsize=9, ha='center', color=COLORS['neutral'])
    pdf.savefig(fig)
    plt.close(fig)


# ============================================================
# Hovedfunksjon
# ============================================================

def generate_report(results: Sequence[RunResult], output_path: Optional[str] = None,
                    comparison: Optional[ComparisonReport] = None) -> str:
    """
    Generer en PDF-rapport for én eller flere kjøringer.

    Args:
        results: Kjøringene som skal med (første bestemmer scenario-tekstene)
        output_path: Sti for PDF-filen. Standard: report.pdf i første kjørings katalog
        comparison: Valgfri sammenligning som vises på forsiden

    Returns:
        Absolutt sti til den genererte PDF-filen.
    """
    results = [r if isinstance(r, RunResult) else RunResult.load(r) for r in results]
    if not results:
        raise ValueError("Rapporten trenger minst én kjøring")
    if output_path is None:
        base = results[0].run_dir or Path.cwd()
        output_path = str(Path(base) / 'report.pdf')
    Path(output_path).parent.mkdir(parents=True, exist_ok=True)

    with PdfPages(output_path) as pdf:
        _add_cover_page(results, comparison, pdf)
        plot_cabin_temperature(results, pdf)
        plot_energy(results, pdf)
        for r in results:
            plot_power(r, pdf)
        plot_battery(results, pdf)
        plot_pressures(results, pdf)
        for r in results:
            plot_inputs(r, pdf)

    return os.path.abspath(output_path)
