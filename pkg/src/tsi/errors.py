"""Exception types shared across the pipeline; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """A training loss became non-finite."""


class CompatibilityError(ValueError):
    """A checkpoint does not match the configured dimensions."""
