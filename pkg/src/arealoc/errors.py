"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: config/usage problems
exit 1, algorithmic failures (divergence, out-of-map) exit 2, I/O and
file-format problems exit 3.
"""


class ArealocError(Exception):
    """Base class for all package errors."""


class MapFormatError(ArealocError):
    """Malformed osmAG XML (carries a line number when available)."""


class MapReferenceError(ArealocError):
    """A way references a node id that is not in the file."""


class MapValidationError(ArealocError):
    """Map content violates a structural invariant."""


class LevelNotFoundError(ArealocError):
    """Requested floor level has no leaf areas."""


class ProjectionRangeError(ArealocError):
    """Geodetic coordinate too far from the projection origin."""


class PoseOutOfMapError(ArealocError):
    """A pose does not lie inside any loaded area."""


class PriorOutOfMapError(ArealocError):
    """No pose guess around the prior falls inside the map."""


class DivergenceError(ArealocError):
    """Pose tracking lost the match (all weights zero or pose left the map)."""


class PlacementError(ArealocError):
    """Clutter placement failed after the rejection budget."""


class TrajectoryError(ArealocError):
    """Trajectory waypoints invalid (outside map or blocked path)."""


class InsufficientDataError(ArealocError):
    """Not enough associated pose pairs to compute a metric."""


class ConfigError(ArealocError):
    """Bad run or scene configuration."""
