"""Exception hierarchy shared by all phiorder modules."""

from __future__ import annotations


class PhiOrderError(Exception):
    """Base class for every error raised by phiorder."""


class InvalidParameter(PhiOrderError, ValueError):
    pass


class InvalidInput(PhiOrderError, ValueError):
    pass


class InsufficientGrid(PhiOrderError, ValueError):
    pass


class InadmissibleScale(PhiOrderError, ValueError):
    pass


class DomainError(PhiOrderError, ValueError):
    pass


class DivisionSingularity(PhiOrderError, ZeroDivisionError):
    pass


class ConstructionInapplicable(PhiOrderError):
    pass


class UnsupportedVariant(PhiOrderError, TypeError):
    pass


class NotEntire(PhiOrderError):
    pass


class CapabilityError(PhiOrderError):
    """A requested check needs data the inputs do not provide.

    ``skipped`` names the checks that could not run; ``partial`` carries
    whatever result was computed before giving up (may be None).
    """

    def __init__(self, message: str, skipped=(), partial=None):
        super().__init__(message)
        self.skipped = list(skipped)
        self.partial = partial


class TruncationInsufficient(PhiOrderError):
    def __init__(self, message: str, achieved_bound=None):
        super().__init__(message)
        self.achieved_bound = achieved_bound


class UncertifiedRoots(PhiOrderError):
    pass


class PoleOnCircle(PhiOrderError):
    """A pole sits too close to the integration circle.

    ``suggested_log_r`` is a nearby radius (in log form) that clears every
    known pole, when one was found.
    """

    def __init__(self, message: str, suggested_log_r=None):
        super().__init__(message)
        self.suggested_log_r = suggested_log_r


class RadiusOutOfRange(PhiOrderError):
    def __init__(self, message: str, max_log_r=None):
        super().__init__(message)
        self.max_log_r = max_log_r


class InconsistentEquation(PhiOrderError):
    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(PhiOrderError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class IllConditionedWarning(UserWarning):
    pass


class ParameterRangeWarning(UserWarning):
    pass
