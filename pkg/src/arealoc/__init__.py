"""Indoor 2D LiDAR localization against polygon area maps (osmAG).

Pipeline: parse the map (osmag), reduce a 3D frame to the clutter-free 2D
point set (scan), cast points into the polygons (geometry + kernels), then
either score a guess grid for global localization (localize) or run
weighted point-to-line registration for tracking (track).  A deterministic
scan simulator (simulate) provides ground truth for everything.
"""

from ._kernels import BACKEND as kernel_backend
from .geometry import Pose2D, batch_intersect, ray_cast, weight
from .localize import GridParams, global_localize, sample_guesses, score_guess
from .osmag import AreaGraph, load_floor, locate_area, parse_osmag, to_local_frame
from .scan import OrganizedScan, clutter_free_subsample, height_filter, organize
from .simulate import SensorModel, SimScene, generate_trajectory, simulate_scan, wifi_prior
from .track import IcpParams, TrackerState, corridorness, icp_register, track_sequence

__version__ = "0.1.0"

__all__ = [
    "AreaGraph", "GridParams", "IcpParams", "OrganizedScan", "Pose2D",
    "SensorModel", "SimScene", "TrackerState", "batch_intersect",
    "clutter_free_subsample", "corridorness", "generate_trajectory",
    "global_localize", "height_filter", "icp_register", "kernel_backend",
    "load_floor", "locate_area", "organize", "parse_osmag", "ray_cast",
    "sample_guesses", "score_guess", "simulate_scan", "to_local_frame",
    "track_sequence", "weight", "wifi_prior",
]
