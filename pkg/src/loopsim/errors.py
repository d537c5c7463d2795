"""Exception hierarchy shared across the simulator."""


class SimError(Exception):
    """Base class for all loopsim errors."""


class ConfigError(SimError):
    """Malformed or inconsistent configuration input (files, specs, profiles)."""
