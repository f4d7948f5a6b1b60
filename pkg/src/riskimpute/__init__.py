"""riskimpute: impute convex risk functions from observed optimal decisions.

Subpackages by concern:

- `probspace`: finite outcome spaces, exact-rational distributions, lifting.
- `backend`: the LP/second-order-cone program layer and dual-set embedding.
- `riskmeasures`: reference measures, evaluation, and their dual sets.
- `dualpwl`: the piecewise-linear-conjugate solution representation.
- `forward`: risk minimization with affine losses over polyhedra.
- `inverse`: the four imputation solvers and infeasibility diagnosis.
- `experiments`: the portfolio studies and their CSV outputs.
"""

from . import (
    backend,
    dualpwl,
    errors,
    experiments,
    forward,
    inverse,
    probspace,
    riskmeasures,
    sets,
)
from .errors import (
    CapExceeded,
    DataMissing,
    DimensionMismatch,
    IncompatibleM,
    InfeasibleInstance,
    ParameterOutOfRange,
    RiskImputeError,
    SolverFailure,
    TooLarge,
    UnsupportedMeasure,
    UnsupportedSet,
)

__version__ = "0.1.0"

__all__ = [
    "backend",
    "dualpwl",
    "experiments",
    "forward",
    "inverse",
    "probspace",
    "riskmeasures",
    "sets",
    "errors",
    "CapExceeded",
    "DataMissing",
    "DimensionMismatch",
    "IncompatibleM",
    "InfeasibleInstance",
    "ParameterOutOfRange",
    "RiskImputeError",
    "SolverFailure",
    "TooLarge",
    "UnsupportedMeasure",
    "UnsupportedSet",
    "__version__",
]
