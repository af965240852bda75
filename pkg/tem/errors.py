"""
Feiltyper for TEM-verktøyet.

Alle feil arver fra TemError. Feil som skyldes ugyldig input arver i tillegg
fra ValueError, slik at kallere som bare fanger ValueError fortsatt fungerer.
"""


class TemError(Exception):
    """Felles basisklasse for alle feil i pakken."""


# === INPUT-VALIDERING ===

class OutOfRangeError(TemError, ValueError):
    """Verdi utenfor tabell- eller parameterområdet."""


class InvertedPressuresError(TemError, ValueError):
    """Høytrykk er ikke større enn lavtrykk."""


class ZeroFlowError(TemError, ValueError):
    """Massestrøm er null der modellen må dele på den."""


class DegenerateCapacitanceError(TemError, ValueError):
    """Termodynamisk kapasitans er (nesten) null; tyder på feil i egenskapstabellen."""


class InfeasibleBoxesError(TemError, ValueError):
    """En hard boks er tom (nedre grense over øvre)."""


class DimensionMismatchError(TemError, ValueError):
    """Dimensjonene passer ikke sammen (f.eks. endret horisont)."""


class ConfigError(TemError, ValueError):
    """Ugyldig eller ufullstendig konfigurasjonsfil."""


class ScenarioMismatchError(TemError, ValueError):
    """To kjøringer som skal sammenlignes har ulike scenario-metadata."""


class EmptyMapError(TemError, ValueError):
    """Parameterkartet har ingen ankerpunkter."""


# === NUMERISKE FEIL ===

class NonFiniteError(TemError, ArithmeticError):
    """NaN eller Inf oppstod under integrasjon."""


class UnstabilizableError(TemError, ArithmeticError):
    """Riccati-iterasjonen konvergerte ikke selv med diskontering."""


class SolverDivergedError(TemError, ArithmeticError):
    """Løseren divergerte (ikke-endelig steg eller eksploderende iterat)."""
