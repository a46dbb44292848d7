"""Exception types shared across the library."""


class LatentIVError(Exception):
    """Base class for all library errors."""


class ShapeMismatchError(LatentIVError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(LatentIVError, ArithmeticError):
    """A computation produced or received non-finite / out-of-domain values."""


class SpecError(LatentIVError, ValueError):
    """A scenario or configuration violates its declared domain."""


class WeakInstrumentError(LatentIVError, ArithmeticError):
    """Instrument is (numerically) uncorrelated with the treatment."""


class SchemaError(LatentIVError, ValueError):
    """A tabular file or config does not match the expected schema."""


class TrainingError(LatentIVError, RuntimeError):
    """Training diverged or could not proceed."""
