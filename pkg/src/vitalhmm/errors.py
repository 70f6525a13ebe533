"""Exception types shared across the package."""


class VitalHmmError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VitalHmmError):
    """Invalid configuration, file format, or generation spec."""


class ContractError(VitalHmmError):
    """A caller violated a precondition (shape, emptiness, value range)."""


class NumericalError(VitalHmmError):
    """A computation produced a non-finite value; message carries context."""


class TrainingError(VitalHmmError):
    """Training could not make progress (e.g. every batch was skipped)."""
