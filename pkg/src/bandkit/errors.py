"""Exception hierarchy.

The CLI maps each family to its own exit code, so new errors should
subclass one of the four family bases below.
"""


class BandkitError(Exception):
    """Root of all package errors."""


class SpecParseError(BandkitError):
    """A problem-spec file could not be read or has malformed fields."""


class SpecValidationError(BandkitError, ValueError):
    """Inputs are well-formed but violate a mathematical precondition."""


class NumericalFailure(BandkitError, RuntimeError):
    """A numerical routine failed (non-convergence, singular solve, ...)."""


class CertificationFailure(BandkitError):
    """A certificate ran to completion and found a violation."""


class DegenerateLatticeError(SpecValidationError):
    pass


class NonSelfAdjointError(SpecValidationError):
    pass


class UnsupportedShiftError(SpecValidationError):
    pass


class TruncationTrustError(SpecValidationError):
    pass


class UndefinedGapError(SpecValidationError):
    pass


class DegenerateSymbolError(SpecValidationError):
    pass


class InsufficientEnumerationError(SpecValidationError):
    pass


class ContourCollisionError(NumericalFailure):
    pass


class AlignmentUndefinedError(NumericalFailure):
    pass


class OverlapBelowThresholdError(NumericalFailure):
    pass


class CountingViolationError(CertificationFailure):
    pass


class SimplicityViolationError(CertificationFailure):
    pass
