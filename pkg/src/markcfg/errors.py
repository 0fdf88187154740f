"""Exception types shared across the package."""


class MarkcfgError(Exception):
    """Base class for all package errors."""


class UsageError(MarkcfgError):
    """An API contract was violated (wrong model, bad shapes, bad arguments)."""


class ConfigError(MarkcfgError):
    """A run configuration is invalid or a sampler bound was violated."""


class NumericsError(MarkcfgError):
    """An integrator or quadrature routine failed to meet its tolerance."""


class DomainError(MarkcfgError):
    """A function was evaluated outside its admissible domain."""
