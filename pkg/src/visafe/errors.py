"""Exception types shared across the package."""


class VisafeError(Exception):
    pass


class ConfigError(VisafeError, ValueError):
    """Invalid configuration values or mismatched channel counts."""


class GraphError(VisafeError, ValueError):
    """A model graph that cannot be resolved (bad wiring, unknown layer type, shapes)."""


class PlanError(VisafeError, ValueError):
    """A pruning plan that does not fit the graph it is applied to."""


class InputError(VisafeError, ValueError):
    """Malformed or empty input data."""


class NumericError(VisafeError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class NoEvidenceError(VisafeError):
    """Every sampled frame was skipped, so a clip cannot be classified."""
