"""Exception hierarchy shared by every module of the package."""


class Csa2slsError(Exception):
    """Base class for all package errors."""


class DataError(Csa2slsError):
    """Malformed input data: CSV parse failures, bad variable lists, empty frames."""


class SingularMatrixError(Csa2slsError):
    """A matrix that must be invertible is not (numerically).

    ``index`` carries the offending pivot or column position when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EstimationError(Csa2slsError):
    """Estimation is impossible, e.g. every subset model was rank deficient."""
