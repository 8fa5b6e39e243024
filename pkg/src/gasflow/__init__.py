"""Robust scheduling of byproduct gas distribution under uncertain supply.

The package is organised in layers.  ``lp`` and ``milp`` hold a dense
simplex kernel and a branch-and-bound wrapper; ``network`` compiles a
plant description into a mixed-integer program; ``uncertainty`` and
``forecast`` turn supply history into interval forecasts and budgeted
uncertainty sets; ``tsro`` runs the column-and-constraint generation
loop that produces a robust schedule; ``cli`` exposes the command line.
"""

from gasflow.errors import (
    GasflowError,
    NumericalFailure,
    ResourceLimit,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "GasflowError",
    "ValidationError",
    "NumericalFailure",
    "ResourceLimit",
    "__version__",
]
