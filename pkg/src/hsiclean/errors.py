"""Exception types shared across the package."""


class DataError(Exception):
    """Input data violates a documented contract (bad file, bad shape, bad values)."""


class ConfigError(Exception):
    """A configuration file or parameter combination is invalid."""
