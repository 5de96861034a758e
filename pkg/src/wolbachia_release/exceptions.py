"""Exception hierarchy shared by all modules."""


class WolbachiaReleaseError(Exception):
    """Base class for errors raised by this package."""


class NotBistable(WolbachiaReleaseError):
    """The reaction term violates the bistable sign pattern."""


class RootBracketingFailed(WolbachiaReleaseError):
    """A sign change expected on a bracket was not found."""


class DomainError(WolbachiaReleaseError, ValueError):
    """An argument lies outside the admissible range."""


class SingularDenominator(WolbachiaReleaseError):
    """The denominator of the reaction term vanished."""


class DivergentIntegral(WolbachiaReleaseError):
    """A radius integral diverges at the requested level."""


class GridTooCoarse(WolbachiaReleaseError, ValueError):
    """Too few nodes to discretise a field."""


class InvalidBox(WolbachiaReleaseError, ValueError):
    """A release box has non-positive size."""


class RecursionDepthExceeded(WolbachiaReleaseError):
    """Exact recursion requested beyond the configured release count."""


class UnstableStep(WolbachiaReleaseError):
    """The time step exceeds the invariant-region bound of the scheme."""


class ConfigInvalid(WolbachiaReleaseError, ValueError):
    """An experiment configuration failed validation."""
