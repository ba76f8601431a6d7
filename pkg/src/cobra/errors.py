"""Exception hierarchy shared by all cobra modules."""


class CobraError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CobraError, ValueError):
    """Matrix dimensions do not conform."""


class ParameterError(CobraError, ValueError):
    """An argument is outside its documented domain."""


class NumericError(CobraError, ArithmeticError):
    """A non-finite value appeared where finiteness is required."""


class PairingError(CobraError, ValueError):
    """Index-aligned modality pairs are inconsistent."""


class LabelError(CobraError, ValueError):
    """A class label is outside [0, C)."""


class ConfigError(CobraError, ValueError):
    """Configuration values are inconsistent with the data or each other."""


class FormatError(CobraError, ValueError):
    """A file does not parse under its documented format."""


class CheckpointError(FormatError):
    """A checkpoint file is malformed; message carries the byte offset."""
