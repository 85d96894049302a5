"""Exception taxonomy shared across the solver modules."""


class MFGTorusError(Exception):
    """Base class for all package errors."""


class EmptyStencilError(MFGTorusError):
    """Velocity cap too small: no nontrivial cell move fits in one step."""


class NonFiniteValueError(MFGTorusError):
    """A model evaluation produced a non-finite number."""


class UnreachableError(MFGTorusError):
    """A pinned-endpoint cost has no feasible connecting path."""


class InfeasibleCostError(MFGTorusError):
    """Transport requested over a cost entry that is not finite."""


class SizeCapError(MFGTorusError):
    """Atom count exceeds the desk-scale cap for exact transport."""


class NotOptimalSupportError(MFGTorusError):
    """A curve measure is not supported on optimal curves."""


class CoverageGapError(MFGTorusError):
    """Field samples do not cover the support of a measure."""


class ConfigError(MFGTorusError):
    """Run configuration failed validation."""
