"""Exception types shared across the package."""


class RiskImputeError(Exception):
    """Base class for all package-specific errors."""


class CapExceeded(RiskImputeError):
    """Uniform lifting would need more outcomes than the caller allows.

    Signals that the instance should go through the support-reduced
    formulation instead of an explicit lift.
    """


class IncompatibleM(RiskImputeError):
    """A probability cannot be written as an integer count out of M outcomes."""


class DimensionMismatch(RiskImputeError):
    """Vector or matrix dimensions do not line up."""


class ParameterOutOfRange(RiskImputeError):
    """A risk-measure parameter violates its admissible range."""


class UnsupportedMeasure(RiskImputeError):
    """The requested operation is not defined for this measure variant."""


class UnsupportedSet(RiskImputeError):
    """The subgradient set has no finite constraint description here."""


class TooLarge(RiskImputeError):
    """A brute-force enumeration was requested beyond its size guard."""


class InfeasibleInstance(RiskImputeError):
    """No candidate risk function satisfies the instance's constraints."""


class SolverFailure(RiskImputeError):
    """The underlying solver returned an unusable status."""


class DataMissing(RiskImputeError):
    """A required input file or column is absent."""
