"""Engine-level error types shared across modules."""


class EngineError(Exception):
    """Base class for expansion / evaluation / simulation failures."""


class CoincidentTimes(EngineError):
    """Two observation slots carry the same time label."""


class OrderTooLarge(EngineError):
    """Requested expansion order exceeds the configured bound."""


class GridTooCoarse(EngineError):
    """Kernel-table quadrature error estimate exceeds tolerance."""


class InvalidInput(EngineError):
    pass


class ThetaMismatch(EngineError):
    """The multiplicative comparison requires the midpoint convention."""


class ShapeMismatch(EngineError):
    """Model does not match the required closed-form benchmark shape."""


class UnstablePath(EngineError):
    """Non-finite state encountered during simulation."""


class TooManySlots(EngineError):
    pass


class QuadratureFailure(EngineError):
    """Error estimate above requested tolerance after max refinement."""


class UnboundSlot(EngineError):
    """Diagram references an observation slot with no bound time."""


class BoundExceeded(EngineError):
    pass


class ConfigError(EngineError):
    """Invalid or unparseable run configuration."""
