"""Exception types shared across the toolkit.

Validation problems (bad shapes, inconsistent label/class pairs, bad config)
subclass ValueError so plain numpy-style call sites keep working; the CLI maps
them to exit code 1 and genuine I/O failures to exit code 2.
"""


class NucsegError(ValueError):
    """Base class for all toolkit-specific validation errors."""


class ShapeMismatchError(NucsegError):
    """Two arrays that must share a shape do not."""


class PairConsistencyError(NucsegError):
    """Instance map and class map disagree about the foreground."""


class InvalidClassError(NucsegError):
    """A class id lies outside the configured taxonomy."""


class StainEstimationError(NucsegError):
    """Stain profile estimation failed (blank tile or degenerate stains)."""


class MarkerOutsideMaskError(NucsegError):
    """A watershed marker pixel falls outside the flooding mask."""


class ConfigError(NucsegError):
    """Pipeline configuration file is malformed or has unknown keys."""
