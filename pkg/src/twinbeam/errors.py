"""Exception hierarchy.

Every error raised by this package derives from TwinbeamError so callers can
catch the library as a whole; each subclass additionally derives from the
closest builtin so generic handlers keep working.
"""

from __future__ import annotations


class TwinbeamError(Exception):
    """Base class for all errors raised by twinbeam."""


class ValidationError(TwinbeamError, ValueError):
    """A domain object was constructed with inconsistent or out-of-range data."""


class NormalizationError(ValidationError):
    """A probability array does not carry the mass its contract requires."""


class DegenerateDistributionError(TwinbeamError, ArithmeticError):
    """A statistic is undefined for this distribution (zero mean or variance)."""


class PrecisionExhaustedError(TwinbeamError, FloatingPointError):
    """Extended-precision evaluation failed its accuracy check even after retry."""


class BudgetExceededError(TwinbeamError, RuntimeError):
    """A combinatorial evaluation would exceed its declared term budget."""


class ModelMismatchError(TwinbeamError, ValueError):
    """Observed data lie outside the support of the forward model."""


class FitInfeasibleError(TwinbeamError, RuntimeError):
    """No parameter set reproduces the requested moments."""


class DataFormatError(TwinbeamError, ValueError):
    """A file could not be parsed as the expected delimited format."""
