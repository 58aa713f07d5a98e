"""Exception types shared across the package."""


class TexbankError(Exception):
    """Base class for errors raised by texbank."""


class FormatError(TexbankError, ValueError):
    """A file does not conform to one of the texbank binary or text formats."""


class EmptySampleError(TexbankError, ValueError):
    """An encoder was given a sample with no descriptors."""


class EmptyRegionError(TexbankError, ValueError):
    """A region mask selects no descriptors from a non-empty sample."""
