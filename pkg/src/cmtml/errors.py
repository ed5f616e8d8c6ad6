"""Exception types shared across the package."""


class CmtmlError(Exception):
    """Base class for all package-specific errors."""


class DataFormatError(CmtmlError):
    """A data file is malformed. Message carries file path and byte/line location."""


class AnnotationError(CmtmlError):
    """A moment annotation violates its invariants (ordering, bounds, duration)."""


class ConfigurationError(CmtmlError):
    """Inconsistent model/run configuration or shape mismatch against parameters."""


class InputError(CmtmlError):
    """Invalid runtime input (empty token list, empty feature array, ...)."""


class TrainingDivergedError(CmtmlError):
    """Raised when the training loss becomes non-finite; message carries diagnostics."""
