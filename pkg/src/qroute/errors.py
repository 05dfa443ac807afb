"""Exception types shared across the package."""


class QrouteError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(QrouteError):
    """A configuration value is out of range or inconsistent."""


class ParseError(QrouteError):
    """A data file could not be parsed; message names the offending line."""


class InvalidRouteError(QrouteError):
    """A route violates structural requirements or references unknown nodes."""


class IllegalActionError(QrouteError):
    """An action forbidden by the feasibility mask was attempted."""


class TerminalStateError(QrouteError):
    """An operation that requires a non-terminal state was called on a terminal one."""


class IncompleteEpisodeError(QrouteError):
    """A reward was requested for a route that does not serve every customer."""


class NoFeasibleActionError(QrouteError):
    """Every action is masked; indicates a bug in the environment or mask plumbing."""


class ShapeError(QrouteError):
    """Tensor or vector dimensions do not match the declared interface."""


class NumericalError(QrouteError):
    """Numerical drift or a non-finite value was detected."""


class InternalError(QrouteError):
    """An internal consistency check failed; indicates a bug, not bad input."""
