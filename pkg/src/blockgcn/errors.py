"""Exception hierarchy shared by every module in the package."""


class BlockGCNError(Exception):
    """Base class for all errors raised by blockgcn."""


class DimensionError(BlockGCNError, ValueError):
    """Operand shapes are incompatible."""


class ShapeError(BlockGCNError, ValueError):
    """An operation would produce an empty or otherwise invalid shape."""


class NumericError(BlockGCNError, ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""


class TopologyError(BlockGCNError, ValueError):
    """Skeleton graph is malformed or disconnected."""


class UnknownPresetError(BlockGCNError, KeyError):
    pass


class MissingStateError(BlockGCNError, RuntimeError):
    """``backward`` was called without a preceding ``forward``."""


class ConfigError(BlockGCNError, ValueError):
    pass


class FormatError(BlockGCNError, ValueError):
    """Base class for file format problems."""


class MalformedHeaderError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ValidationError(FormatError):
    """File parsed but its payload violates an invariant (e.g. NaN coordinates)."""
