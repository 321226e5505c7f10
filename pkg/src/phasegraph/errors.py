"""Exception hierarchy shared by every module."""


class PhaseGraphError(Exception):
    """Base class for all errors raised by phasegraph."""


class ParameterError(PhaseGraphError, ValueError):
    """An argument is outside its admissible range."""


class GraphConstructionError(PhaseGraphError, ValueError):
    """A graph or hypergraph violates a structural invariant."""


class ConfigError(PhaseGraphError, ValueError):
    """A run configuration failed validation.

    ``field`` names the offending ``section.key`` when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ConvergenceError(PhaseGraphError, RuntimeError):
    """An iterative solver hit its iteration cap.

    ``residuals`` holds the best residual(s) reached before giving up.
    """

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class ConfigWarning(UserWarning):
    """A parameter choice is admissible but violates a recommended bound."""
