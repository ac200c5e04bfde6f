"""Exception hierarchy shared across the package.

Each class corresponds to one failure family surfaced by the command line
tool: structural assumptions, initial-data compatibility, numerical
failures inside a construction or a time march, and configuration/I-O
problems.
"""


class AxorelaxError(Exception):
    """Base class for all package-specific errors."""


class AssumptionError(AxorelaxError):
    """A system violates one of the structural assumptions H1-H5.

    Parameters
    ----------
    failed : sequence of str
        Names of the violated assumptions, e.g. ``("H4",)``.
    message : str
        Human-readable description including a witness.
    """

    def __init__(self, failed, message):
        self.failed = tuple(failed)
        super().__init__(message)


class CompatibilityError(AxorelaxError):
    """Initial data violates the inflow compatibility conditions."""

    def __init__(self, message, value_residual=None, slope_residual=None):
        self.value_residual = value_residual
        self.slope_residual = slope_residual
        super().__init__(message)


class NumericalError(AxorelaxError):
    """A numerical construction or a time march failed.

    Carries an optional ``stage`` label (which construction failed) and,
    for aborted marches, the ``partial_series`` computed so far.
    """

    def __init__(self, message, stage=None, partial_series=None):
        self.stage = stage
        self.partial_series = partial_series
        super().__init__(message)


class ConfigError(AxorelaxError):
    """A configuration file or command-line request is malformed."""
