"""Exception hierarchy shared across the package."""


class IsacDetError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(IsacDetError, ValueError):
    pass


class NegativeEigenvalue(IsacDetError, ValueError):
    pass


class DegenerateCubic(IsacDetError, ValueError):
    pass


class DegenerateGamma(IsacDetError, ValueError):
    """Raised when |gamma|^2 is too small to form the amplitude cubic."""


class PilotFree(IsacDetError, ValueError):
    pass


class InvalidSplit(IsacDetError, ValueError):
    pass


class InvalidTarget(IsacDetError, ValueError):
    pass


class ConfigError(IsacDetError):
    pass


class ExperimentError(IsacDetError):
    pass


class FormatError(IsacDetError, ValueError):
    pass
