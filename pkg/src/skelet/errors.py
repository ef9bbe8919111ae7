"""Exception hierarchy shared by all skelet modules.

Every error raised on a validated code path derives from ``SkeletError`` so
callers (and the CLI) can map failures to categories without string matching.
"""


class SkeletError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SkeletError, ValueError):
    """Tensor or matrix dimensions do not chain."""


class ConfigError(SkeletError, ValueError):
    """An invalid block, network, or run configuration."""


class LayoutError(SkeletError, ValueError):
    """A keypoint layout or edge table violates its invariants."""


class IsolatedJointError(LayoutError):
    """Adjacency normalization hit a joint with no links at all."""


class PartitionError(SkeletError, ValueError):
    """A joint partition is not a disjoint, complete cover."""


class InsufficientDataError(SkeletError, ValueError):
    """A dataset statistic needs more videos than were supplied."""


class InsufficientFramesError(InsufficientDataError):
    """A per-frame statistic needs at least two frames per video."""


class FormatError(SkeletError, ValueError):
    """A binary or text artifact does not match its documented layout."""


class ParseError(SkeletError, ValueError):
    """A keypoint record stream could not be parsed."""


class NumericError(SkeletError, ArithmeticError):
    """A computation produced non-finite values."""


class TrainingDivergedError(NumericError):
    """Training hit a non-finite loss; parameters were rolled back."""

    def __init__(self, message: str, log: list | None = None):
        super().__init__(message)
        self.log = log or []
