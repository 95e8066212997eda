"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (network spec, teacher spec, grid, ...)."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class StateError(RuntimeError):
    """Object used in a state it was not prepared for (e.g. stale forward cache)."""


class FormatError(ValueError):
    """Malformed binary or text file."""
