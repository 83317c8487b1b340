"""Shared exception types."""


class CapacityError(RuntimeError):
    """Requested lattice exceeds the configured site-count cap."""


class NumericalError(RuntimeError):
    """A numerical operation produced non-finite values or failed to converge."""


class ConfigError(ValueError):
    """Invalid or unknown study configuration."""
