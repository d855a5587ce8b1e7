"""Exception hierarchy.

Every error carries the name of the module that raised it so the CLI can
report which invariant failed and where.
"""


class TaufixError(Exception):
    """Base class for all package errors."""

    module = "taufix"


class DimensionError(TaufixError, ValueError):
    module = "fock"


class NotDiagonalError(TaufixError, ValueError):
    module = "fock"


class DegenerateSpectrumError(TaufixError, ValueError):
    module = "fock"


class SingularDiagonalError(TaufixError, ZeroDivisionError):
    module = "fock"


class SeminormOverflowError(TaufixError, OverflowError):
    """A weighted operator no longer fits in double precision."""

    module = "seminorm"


class PanelError(TaufixError, ValueError):
    module = "seminorm"


class PreconditionError(TaufixError, ValueError):
    """A map or model was built outside the range where its bound holds."""

    module = "contraction"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module


class CertificateError(TaufixError):
    """A start point or family failed its admission certificate."""

    module = "contraction"

    def __init__(self, message, report=None, module=None):
        super().__init__(message)
        self.report = report
        if module is not None:
            self.module = module


class ConvergenceError(TaufixError):
    """Iteration stopped without meeting the tolerance.

    ``report`` holds the partial :class:`~taufix.contraction.ConvergenceReport`.
    """

    module = "contraction"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ContractionViolation(ConvergenceError):
    """Observed residuals broke the contraction estimate of the map."""
