"""
Felles testfixtures for TEM-testene.

Gir nominelle parametre, et kaldt arbeidspunkt i varmepumpemodus og én
kort referansekjøring (regelbasert kontroller) som lagres én gang per
testsesjon, slik at tester av artefakter, register og API slipper å
simulere på nytt.
"""

from pathlib import Path

import numpy as np
import pytest

from tem.config import Scenario
from tem.discretize import StageParams, operating_point
from tem.harness import run
from tem.model import ModeFlags
from tem.params import default_gamma, load_parameters


# ---------------------------------------------------------------------------
# Kjente verdier: kald start, VP-modus
# ---------------------------------------------------------------------------
COLD_AMBIENT = 263.15

COLD_STATE = np.array([300.0, 298.0, 296.0, 0.8, 283.0, 2.0e5, 8.0e5, 285.0, 288.0])
COLD_INPUT = np.array([3000.0, 0.1, 2000.0, 2000.0, 1000.0, 500.0])
COLD_DISTURBANCE = np.array([COLD_AMBIENT, 10.0, 30.0, 500.0, 50.0, 200.0])


def short_scenario(**kwargs) -> Scenario:
    """Kort scenario som holder testene raske."""
    values = dict(name="test", ambient=COLD_AMBIENT, duration=10.0, horizon=5, controller="baseline")
    values.update(kwargs)
    return Scenario(**values).validate()


@pytest.fixture(scope="session")
def params():
    return load_parameters()


@pytest.fixture
def cold_point():
    """(x, u, d) for et kaldt arbeidspunkt."""
    return COLD_STATE.copy(), COLD_INPUT.copy(), COLD_DISTURBANCE.copy()


@pytest.fixture
def cold_theta():
    return operating_point(COLD_STATE, COLD_AMBIENT)


@pytest.fixture
def cold_stage(cold_theta):
    return StageParams(COLD_DISTURBANCE.copy(), ModeFlags(), default_gamma(), cold_theta)


@pytest.fixture(scope="session")
def baseline_run_dir(tmp_path_factory) -> Path:
    """En lagret 10 s referansekjøring ved −10 °C."""
    out = tmp_path_factory.mktemp("runs") / "baseline"
    run(short_scenario(), out)
    return out
