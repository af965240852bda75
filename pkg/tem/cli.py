"""
Kommandolinje for termisk energistyring.

Bruk: python -m tem <verb> [flagg]

Verb: simulate, identify, validate, compare, selftest, report.
Presedens for innstillinger: flagg > scenariofil > innebygde standarder.
Exit-koder: 0 = ok, 1 = feil under kjøring, 2 = bruksfeil.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import Scenario, apply_overrides, load_scenario
from .errors import ConfigError, TemError
from .harness import RunResult, compare, run, validate
from .ident import GammaMap, identify, load_reference
from .params import load_parameters
from .report_generator import generate_report
from .selftest import CHECKS, run_selftests


logger = logging.getLogger(__name__)

IDENT_AMBIENTS_C = (-10.0, -5.0)


class UsageError(Exception):
    """Ugyldige flagg eller flaggkombinasjoner (exit-kode 2)."""


def print_header(title: str):
    """Print en fin overskrift."""
    width = 60
    print("\n" + "=" * width)
    print(f"  {title}")
    print("=" * width)


def print_table(headers: list, rows: list, widths: list = None):
    """Print en enkel tabell."""
    if not widths:
        widths = [max(len(str(h)), max(len(str(r[i])) for r in rows) if rows else 5) + 2
                  for i, h in enumerate(headers)]
    print("".join(str(h).ljust(w) for h, w in zip(headers, widths)))
    print("-" * sum(widths))
    for row in rows:
        print("".join(str(c).ljust(w) for c, w in zip(row, widths)))


def _fmt(value) -> str:
    if isinstance(value, float):
        return "-" if value != value else f"{value:.4g}"
    return str(value)


# ============================================================
# Argumenter
# ============================================================

def _add_scenario_args(p: argparse.ArgumentParser):
    p.add_argument("--scenario", type=Path, help="Scenariofil (.cfg)")
    p.add_argument("--ambient", type=float, help="Omgivelsestemperatur i °C")
    p.add_argument("--horizon", type=int, help="Prediksjonshorisont N")
    p.add_argument("--dt", type=float, help="Samplingstid i sekunder")
    p.add_argument("--seed", type=int, help="Frø for tvillingen og målestøy")
    p.add_argument("--duration", type=float, help="Varighet i sekunder")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tem",
        description="NMPC for termisk energistyring i elbil med varmepumpe.",
        epilog="Flagg overstyrer scenariofilen, som overstyrer innebygde standarder.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Logg på DEBUG-nivå")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="Kjør ett scenario mot tvillingen")
    _add_scenario_args(p)
    p.add_argument("--controller", choices=["nmpc", "baseline"])
    p.add_argument("--out", type=Path, required=True, help="Katalog for kjøringen")
    p.add_argument("--gamma-map", type=Path, help="Parameterkart fra identify")
    p.add_argument("--db", type=Path, help="Registrer kjøringen i denne SQLite-filen")

    p = sub.add_parser("identify", help="Identifiser γ og skriv et parameterkart")
    _add_scenario_args(p)
    p.add_argument("--reference", type=Path, nargs="+",
                   help="Referanse-CSV-er; uten dem genereres tvillingkjøringer ved −10 og −5 °C")
    p.add_argument("--window", type=float, default=300.0, help="Vinduslengde i sekunder")
    p.add_argument("--overlap", type=float, default=150.0, help="Overlapp mellom vinduer i sekunder")
    p.add_argument("--out", type=Path, required=True, help="Fil for parameterkartet (.cfg)")

    p = sub.add_parser("validate", help="Åpen-sløyfe COM mot tvillingen (RMSE/MAE)")
    _add_scenario_args(p)
    p.add_argument("--gamma-map", type=Path)
    p.add_argument("--out", type=Path, help="Katalog for validation.csv")

    p = sub.add_parser("compare", help="Parret kjøring av referansekontroller og NMPC")
    _add_scenario_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--gamma-map", type=Path)
    p.add_argument("--db", type=Path)
    p.add_argument("--no-report", action="store_true", help="Ikke lag PDF-rapport")

    p = sub.add_parser("selftest", help="Kjør oraklene")
    p.add_argument("checks", nargs="*", metavar="CHECK",
                   help=f"Utvalg av: {', '.join(CHECKS)}")

    p = sub.add_parser("report", help="PDF-rapport fra kjøringskataloger")
    p.add_argument("runs", type=Path, nargs="+")
    p.add_argument("--out", type=Path, help="PDF-fil")
    return parser


def _overrides(args, **extra) -> dict:
    out = {key: getattr(args, key, None) for key in ("ambient", "horizon", "dt", "seed", "duration")}
    out.update(extra)
    return out


def load_checked(args, **extra) -> Scenario:
    """
    Les scenariofilen og legg på flaggene.

    Feil i selve filen er kjørefeil (ConfigError). Et scenario som blir
    ugyldig av flaggene gir UsageError.
    """
    scenario = load_scenario(args.scenario)
    try:
        return apply_overrides(scenario, _overrides(args, **extra)).validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


# ============================================================
# Verb
# ============================================================

def cmd_simulate(args) -> int:
    scenario = load_checked(args, controller=args.controller)
    if args.gamma_map:
        scenario = replace(scenario, gamma_map=str(args.gamma_map))
    result = run(scenario, args.out, db_path=args.db)
    _print_metrics(result)
    print(f"\nArtefakter skrevet til {args.out}")
    return 0


def _print_metrics(result: RunResult):
    print_header(f"{result.scenario.name}: {result.scenario.controller}")
    keys = ["energy_wh", "time_to_setpoint_s", "comfort_fraction", "hard_violations", "soft_violations",
            "fallback_count", "mean_iterations", "final_soc"]
    print_table(["Metrikk", "Verdi"], [(k, _fmt(result.metrics.get(k, np.nan))) for k in keys])


def cmd_identify(args) -> int:
    params = load_parameters()
    if args.reference:
        frames = [load_reference(path) for path in args.reference]
    else:
        frames = []
        for ambient in IDENT_AMBIENTS_C:
            scenario = load_checked(args, ambient=ambient, controller="baseline")
            logger.info("Genererer referanse ved %.0f °C", ambient)
            frames.append(run(scenario).timeseries)
    gamma_map = identify(frames, params, length=args.window, overlap=args.overlap)
    gamma_map.save(args.out)
    print_header("PARAMETERKART")
    rows = [(a.window_id, f"{a.T_amb - 273.15:.1f}", f"{a.residual:.3e}",
             " ".join(f"{g:.3f}" for g in a.gamma)) for a in gamma_map.anchors]
    print_table(["Vindu", "T_amb [°C]", "Residual", "γ"], rows)
    print(f"\nSkrev {len(gamma_map)} ankre til {args.out}")
    return 0


def cmd_validate(args) -> int:
    scenario = load_checked(args)
    gamma_map = GammaMap.load(args.gamma_map) if args.gamma_map else None
    table = validate(scenario, gamma_map)
    print_header(f"VALIDERING ved {scenario.ambient - 273.15:.1f} °C")
    print_table(["Tilstand", "RMSE [K]", "MAE [K]"],
                [(r.state, f"{r.rmse_K:.3f}", f"{r.mae_K:.3f}") for r in table.itertuples()])
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out / "validation.csv", index=False)
    return 0


def cmd_compare(args) -> int:
    results = []
    for controller in ("baseline", "nmpc"):
        scenario = load_checked(args, controller=controller)
        if args.gamma_map:
            scenario = replace(scenario, gamma_map=str(args.gamma_map))
        results.append(run(scenario, args.out / controller, db_path=args.db))
    report = compare(*results)
    report.save(args.out / "comparison.csv")
    print_header("SAMMENLIGNING (A = regelbasert, B = NMPC)")
    print_table(["Metrikk", "A", "B", "Reduksjon %"],
                [(r.metric, _fmt(r.a), _fmt(r.b), f"{r.reduction_pct:.1f}") for r in report.rows.itertuples()])
    if not args.no_report:
        path = generate_report(results, str(args.out / "report.pdf"), comparison=report)
        print(f"\nRapport: {path}")
    return 0


def cmd_selftest(args) -> int:
    unknown = [c for c in args.checks if c not in CHECKS]
    if unknown:
        print(f"Ukjente selvtester: {', '.join(unknown)} (gyldige: {', '.join(CHECKS)})", file=sys.stderr)
        return 2
    results = run_selftests(args.checks or None)
    print_header("SELVTESTER")
    print_table(["Sjekk", "Status", "Detaljer"],
                [(r.name, "OK" if r.passed else "FEIL", r.detail) for r in results])
    return 0 if all(r.passed for r in results) else 1


def cmd_report(args) -> int:
    results = [RunResult.load(path) for path in args.runs]
    comparison = None
    if len(results) == 2:
        try:
            comparison = compare(*results)
        except TemError:
            comparison = None
    path = generate_report(results, str(args.out) if args.out else None, comparison=comparison)
    print(f"Rapport: {path}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "validate": cmd_validate,
    "compare": cmd_compare,
    "selftest": cmd_selftest,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Hovedfunksjon. Returnerer exit-koden."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        logger.error("Ugyldig bruk: %s", exc)
        parser.print_usage(sys.stderr)
        return 2
    except (TemError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
