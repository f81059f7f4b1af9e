"""Exception types shared across the package."""


class FairFldaError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(FairFldaError):
    """Two function samples do not live on the same grid."""


class DegenerateCellError(FairFldaError):
    """An (attribute, label) cell is empty or too small for the requested fit."""


class TruncationError(FairFldaError):
    """Requested truncation level reaches eigenvalues at or below the numerical floor."""


class UnsupportedClosedFormError(FairFldaError):
    """Closed-form population quantities are only available for the Gaussian score family."""


class InfeasibleBudgetError(FairFldaError):
    """No threshold shift inside the admissible range meets the disparity budget."""


class DataFormatError(FairFldaError):
    """A data or model file could not be parsed."""
