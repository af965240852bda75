"""
TEM - Termisk energistyring for elbil med varmepumpe.

Moduler:
- fluid, params, model: Stoffdata, parametre og kontrollmodellen (COM)
- discretize, ocp, nlp, terminal: Diskretisering, optimalstyringsproblem og løser
- supervisor, controller: Modusvalg og NMPC-løkken
- ident: Identifikasjon av skaleringsparametre
- harness, report_generator, database: Simulering, rapporter og kjøringsregister
"""

from .config import Scenario, load_scenario, save_scenario
from .controller import ControllerConfig, ControllerContext, control_step, initial_state
from .database import init_database, get_connection, list_runs, reset_database
from .errors import TemError
from .harness import RunResult, compare, run, validate
from .ident import GammaMap, fit_window, identify
from .params import load_parameters
from .report_generator import generate_report

__version__ = "1.0.0"
__all__ = [
    'Scenario',
    'load_scenario',
    'save_scenario',
    'ControllerConfig',
    'ControllerContext',
    'control_step',
    'initial_state',
    'init_database',
    'get_connection',
    'list_runs',
    'reset_database',
    'TemError',
    'RunResult',
    'compare',
    'run',
    'validate',
    'GammaMap',
    'fit_window',
    'identify',
    'load_parameters',
    'generate_report',
]
