"""Exception hierarchy shared by all wattsim modules."""


class WattsimError(Exception):
    """Base class for every error raised by wattsim."""


class DomainError(WattsimError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InputError(WattsimError, ValueError):
    """Malformed input data (unordered samples, empty schedules, ...)."""


class ConfigurationError(WattsimError, ValueError):
    """A configuration constant makes the model meaningless (e.g. zero bandwidth)."""


class PlacementError(WattsimError):
    """A partition cannot be placed on the requested node."""


class ProtocolError(WattsimError):
    """An operation violates the cluster protocol (wrong power state, replica move)."""


class UnavailableError(WattsimError):
    """Data or processing capacity is not online."""


class ScenarioError(WattsimError, ValueError):
    """Scenario validation failure.

    Attributes:
        field: dotted path of the offending scenario field, if known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
