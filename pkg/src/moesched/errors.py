class MoeSchedError(Exception):
    """Base class for errors raised by moesched."""


class ConfigError(MoeSchedError, ValueError):
    """Invalid configuration or input shape."""


class CapacityError(MoeSchedError):
    """Not even one expert fits in device memory."""


class SizeError(MoeSchedError, ValueError):
    """Instance too large for an exhaustive routine."""


class InvariantError(MoeSchedError, RuntimeError):
    """A simulator self-check failed."""
