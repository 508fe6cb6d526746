"""Exception types shared across the library."""


class DraganError(Exception):
    """Base class for all library errors."""


class ShapeError(DraganError, ValueError):
    """Operand shapes are incompatible, or a scalar was required."""


class ConfigError(DraganError, ValueError):
    """A layer or run configuration value is invalid."""


class DegenerateBatchError(DraganError, ValueError):
    """Batch statistics are undefined (batch extent < 2 in train mode)."""


class ParseError(DraganError, ValueError):
    """A CSV cell or file structure could not be parsed."""


class LabelError(DraganError, ValueError):
    """The label column is not binary after mapping."""


class DegenerateDatasetError(DraganError, ValueError):
    """A dataset is missing one of the two classes, or an operation would
    leave it single-class."""


class StratificationError(DraganError, ValueError):
    """A class is too small for the requested number of folds."""


class InsufficientMinorityError(DraganError, ValueError):
    """Too few minority samples for the requested oversampler."""


class UndefinedMetricError(DraganError, ValueError):
    """A metric's denominator is empty (single-class input, constant series)."""
