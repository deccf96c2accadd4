"""Exception types shared across the package."""


class BifurcrlError(Exception):
    """Base class for package errors."""


class ConfigError(BifurcrlError):
    """Invalid configuration: bad schema, unknown keys, dimension mismatch."""


class NumericalError(BifurcrlError):
    """Non-finite value encountered where finiteness is required."""


class PreconditionError(BifurcrlError):
    """An operation's documented precondition does not hold (e.g. no bisection bracket)."""
