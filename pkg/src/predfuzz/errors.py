"""Exception types shared across the toolkit."""


class PredfuzzError(Exception):
    """Base class for all toolkit errors."""


class InvalidRange(PredfuzzError):
    """Requested an integer draw with lo > hi."""


class InvalidWeights(PredfuzzError):
    """Weighted choice over weights that sum to zero (or are negative)."""


class InvalidCfg(PredfuzzError):
    """Malformed control-flow description (bad edge endpoint, duplicate id, ...)."""


class EntryNotFound(PredfuzzError):
    """Named entry procedure does not exist in the description."""


class BlockNotFound(PredfuzzError):
    """Named block does not exist in the graph."""


class UnknownKnob(PredfuzzError):
    """Configuration names a weight/toggle/bound the target grammar does not declare."""


class ConfigParseError(PredfuzzError):
    """Configuration text is not syntactically valid."""


class TargetNotFound(PredfuzzError):
    """No target registered under the requested id."""


class ProfileNotFound(PredfuzzError):
    """No builtin generator profile with the requested name."""


class DuplicatePredicate(PredfuzzError):
    """Two predicate registrations share an id."""


class EntryCorrupt(PredfuzzError):
    """A corpus entry file failed its header or length check."""

    def __init__(self, index: int, reason: str = ""):
        super().__init__(f"corpus entry {index}: {reason}" if reason else f"corpus entry {index}")
        self.index = index
        self.reason = reason


class EmptySample(PredfuzzError):
    """A statistical test was handed an empty sample."""


class BaselineNotFound(PredfuzzError):
    """Comparison baseline arm is not among the provided arms."""


class RefinerTimeout(PredfuzzError):
    """External refiner did not answer within the deadline."""


class RefinerInvalid(PredfuzzError):
    """External refiner answered with something unusable."""
