"""Exception types shared across the package."""


class ManifoldMRIError(Exception):
    """Base class for all package errors."""


class DimensionError(ManifoldMRIError, ValueError):
    pass


class NumericalError(ManifoldMRIError, ArithmeticError):
    pass


class FormatError(ManifoldMRIError, ValueError):
    """Malformed array file. ``field`` names the offending header field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class SamplingError(ManifoldMRIError, RuntimeError):
    pass


class TrajectoryError(ManifoldMRIError, ValueError):
    pass


class SolverError(NumericalError):
    pass


class ConfigError(ManifoldMRIError, ValueError):
    pass


class StageDependencyError(ManifoldMRIError, FileNotFoundError):
    pass
