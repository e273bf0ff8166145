"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid run configuration (unknown key, bad value). CLI exit code 2."""


class NumericalError(Exception):
    """Propagation produced a numerically invalid state. CLI exit code 3."""
