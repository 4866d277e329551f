"""Exception types shared across the package."""


class EvomixError(Exception):
    """Base class for all evomix errors."""


class ShapeError(EvomixError, ValueError):
    """Operands have incompatible dimensions."""


class InputError(EvomixError, ValueError):
    """An argument violates an operation's contract."""


class TrainingError(EvomixError, RuntimeError):
    """Optimization produced a non-finite quantity."""


class FormatError(EvomixError, ValueError):
    """A data file is malformed."""


class ConfigError(EvomixError, ValueError):
    """A run configuration is invalid."""
