"""Exception hierarchy shared across the package."""


class AdassError(Exception):
    """Base class for all package errors."""


class ParameterError(AdassError, ValueError):
    """Invalid distribution or model parameter."""


class DecompositionError(AdassError, ValueError):
    """A matrix that must be SPD failed to factorize."""


class StateError(AdassError, RuntimeError):
    """Sampler state is inconsistent with the requested operation."""


class EstimationError(AdassError, RuntimeError):
    """A rank estimator has no admissible candidate."""


class IngestionError(AdassError, ValueError):
    """Malformed input file."""


class DiagnosticsError(AdassError, ValueError):
    """A diagnostic quantity is undefined for the given input."""
