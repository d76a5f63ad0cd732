"""Exception types shared across modules; the CLI maps them to exit codes."""


class GridError(ValueError):
    """Structural problem: shapes, resolution or kinds do not line up."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class NumericalError(RuntimeError):
    """Blow-up, NaN or a violated numerical guard."""


class MonotonicityError(NumericalError):
    """The background lost monotonicity or the wall margin beta - eta fell below the floor."""

    def __init__(self, message, node=None, margin=None):
        super().__init__(message)
        self.node = node
        self.margin = margin
