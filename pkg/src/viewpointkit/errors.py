"""Exception types raised across the package.

All of these signal caller mistakes (bad inputs, violated preconditions),
never internal state corruption, so they derive from ValueError except
where an index semantics fits better.
"""


class NonNormalizedInput(ValueError):
    """A probability vector was required to sum to 1 but does not."""


class DimensionMismatch(ValueError):
    """An array has the wrong length/shape for the requested operation."""


class ZeroNormEmbedding(ValueError):
    """Cosine distance is undefined for a zero-norm embedding."""


class EmptyGroup(ValueError):
    """A detection group with no members cannot be fused."""


class AllZeroScore(ValueError):
    """Bin selection needs at least one strictly positive score entry."""


class InsufficientPool(ValueError):
    """The labeled pool cannot supply the requested triplet member."""


class EmptyPool(ValueError):
    """A sample was requested from an empty (or fully filtered) pool."""


class IndexOutOfRange(IndexError):
    """A frame index does not leave room for the triplet's other members."""
