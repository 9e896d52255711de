"""Frame-to-map pose tracking: weighted point-to-line registration.

Each iteration re-casts the clutter-free points from the current pose,
optionally thins points matched to the dominant wall orientation
(corridorness downsampling), weights residuals by the shared match weight,
and solves a small-angle point-to-line least squares for the pose update.
No odometry or inertial input exists anywhere in this module.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError
from .geometry import Pose2D, cast_batch, map_arrays, weight, wrap_angle, TH_PASSAGE_M
from .localize import GridParams, global_localize
from .osmag import locate_area
from .scan import clutter_free_subsample, height_filter

N_ORIENTATION_BINS = 36   # 5 degree bins over [0, pi)


@dataclass
class IcpParams:
    max_iterations: int = 30
    trans_eps: float = 1e-4
    rot_eps: float = 1e-4
    use_weight: bool = True
    use_corridorness: bool = True
    passage_mode: str = "adaptive"   # adaptive | all_open | all_closed
    th_passage: float = TH_PASSAGE_M

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.trans_eps <= 0 or self.rot_eps <= 0:
            raise ValueError("convergence thresholds must be positive")


@dataclass
class TrackerState:
    pose: Pose2D
    area: int
    frame_index: int = 0
    converged: bool = False
    last_residual: float = 0.0


@dataclass
class OrientationHistogram:
    bins: np.ndarray   # (36,) counts
    total: int
    max_bin: int       # lowest index on ties


def orientation_bins(orientations):
    """5-degree histogram bin per segment orientation in [0, pi)."""
    width = math.pi / N_ORIENTATION_BINS
    b = np.floor(np.asarray(orientations, dtype=float) / width).astype(np.int64)
    return np.clip(b, 0, N_ORIENTATION_BINS - 1)


def corridorness(orientations):
    """Fraction of matches in the dominant orientation bin.

    0.5 in a square room, 1.0 facing a single straight wall.
    """
    orientations = np.asarray(orientations, dtype=float)
    if len(orientations) == 0:
        raise ValueError("corridorness needs at least one matched point")
    counts = np.bincount(orientation_bins(orientations), minlength=N_ORIENTATION_BINS)
    max_bin = int(np.argmax(counts))
    hist = OrientationHistogram(bins=counts, total=int(counts.sum()), max_bin=max_bin)
    return float(counts[max_bin]) / float(hist.total), hist


def downsample_rate(cor):
    """Thinning rate for dominant-bin points: 1 up to Cor 0.5, then 10*Cor-4."""
    if cor <= 0.5:
        return 1.0
    return 10.0 * cor - 4.0


def corridor_downsample(point_bins, max_bin, rate):
    """Keep mask thinning dominant-bin points to ceil(count/rate) survivors.

    Survivors are picked by a deterministic fractional stride over the
    dominant points in their stored (column) order; non-dominant points are
    never removed.
    """
    point_bins = np.asarray(point_bins)
    keep = np.ones(len(point_bins), dtype=bool)
    if rate <= 1.0:
        return keep
    dominant = np.flatnonzero(point_bins == max_bin)
    n = len(dominant)
    if n == 0:
        return keep
    n_keep = math.ceil(n / rate - 1e-12)
    stride = n / n_keep
    keep[dominant] = False
    for k in range(n_keep):
        keep[dominant[int(k * stride)]] = True
    return keep


def solve_registration_step(q, feet, w, origin):
    """One weighted Gauss-Newton step for (dx, dy, dtheta).

    Minimizes sum w_j ||q_j + J delta - c_j||^2 with c_j the frozen closest
    point on each matched segment; rotation is linearized about `origin`
    (the sensor position).  Freezing the feet makes segments resist sliding
    along their own direction, which is what corridorness downsampling
    counteracts.  Returns (delta, pre_residual, post_residual) of the linear
    model, so post <= pre always holds for an exact solve.
    """
    q = np.asarray(q, dtype=float)
    r = q - np.asarray(feet, dtype=float)
    rx = q[:, 0] - origin[0]
    ry = q[:, 1] - origin[1]
    n = len(q)
    a_mat = np.zeros((2 * n, 3))
    a_mat[0::2, 0] = 1.0
    a_mat[1::2, 1] = 1.0
    a_mat[0::2, 2] = -ry
    a_mat[1::2, 2] = rx
    e = r.reshape(-1)
    w2 = np.repeat(w, 2)
    h = a_mat.T @ (w2[:, None] * a_mat)
    g = a_mat.T @ (w2 * e)
    try:
        delta = np.linalg.solve(h, -g)
    except np.linalg.LinAlgError:
        sw = np.sqrt(w2)
        delta = np.linalg.lstsq(sw[:, None] * a_mat, -sw * e, rcond=None)[0]
    pre = float(np.sum(w2 * e * e))
    post_e = e + a_mat @ delta
    post = float(np.sum(w2 * post_e * post_e))
    return delta, pre, post


def icp_register(graph, state, pcf, params=None):
    """Register one clutter-free point set against the map from state.pose.

    Raises DivergenceError when every weight is zero or the pose leaves the
    loaded areas.
    """
    params = params or IcpParams()
    ma = map_arrays(graph)
    pose = state.pose
    area = state.area
    converged = False
    residual = 0.0

    for _ in range(params.max_iterations):
        batch = cast_batch(ma, area, pose, pcf.points,
                           th_passage=params.th_passage, mode=params.passage_mode)
        hit = batch.hit_mask
        if not hit.any():
            raise DivergenceError("no scan point intersects the map from the current pose")
        sd = batch.sd[hit]
        seg = batch.seg[hit]
        pts = pcf.points[hit]
        feet = np.column_stack([batch.cx[hit], batch.cy[hit]])

        if params.use_corridorness:
            bins = orientation_bins(ma.orientation[seg])
            counts = np.bincount(bins, minlength=N_ORIENTATION_BINS)
            max_bin = int(np.argmax(counts))
            cor = float(counts[max_bin]) / float(len(bins))
            keep = corridor_downsample(bins, max_bin, downsample_rate(cor))
            sd, seg, pts, feet = sd[keep], seg[keep], pts[keep], feet[keep]

        w = weight(sd) if params.use_weight else np.ones(len(sd))
        if float(np.sum(w)) <= 1e-12:
            raise DivergenceError("all match weights are zero")

        q = pose.transform(pts)
        delta, pre, _post = solve_registration_step(q, feet, w, (pose.x, pose.y))
        if not np.all(np.isfinite(delta)):
            raise DivergenceError("registration produced a non-finite update")
        residual = pre / float(np.sum(w))
        pose = Pose2D(pose.x + delta[0], pose.y + delta[1], wrap_angle(pose.theta + delta[2]))

        new_area = locate_area(graph, (pose.x, pose.y))
        if new_area is None:
            raise DivergenceError(
                f"pose ({pose.x:.2f}, {pose.y:.2f}) left the loaded areas during registration"
            )
        area = new_area
        if math.hypot(delta[0], delta[1]) < params.trans_eps and abs(delta[2]) < params.rot_eps:
            converged = True
            break

    return TrackerState(pose=pose, area=area, frame_index=state.frame_index + 1,
                        converged=converged, last_residual=residual)


# ---------------------------------------------------------------------------
# sequence tracking

@dataclass
class TrackParams:
    icp: IcpParams = field(default_factory=IcpParams)
    z_low: float = -0.3
    z_high: float = 1.5
    relocalize: bool = True
    fallback_grid: GridParams = field(default_factory=GridParams)


@dataclass
class TrackRecord:
    timestamp: float
    pose: Pose2D
    converged: bool
    diverged: bool    # this frame needed (or failed) re-localization
    runtime_ms: float


def track_sequence(graph, initial_pose, frames, params=None):
    """Track a stream of organized scans, frame seeding frame.

    On divergence the frame is flagged and tracking resumes from a fresh
    global localization around the last pose estimate.  Returns a list of
    TrackRecord.  Runtime covers the pipeline + registration hot path only.
    """
    params = params or TrackParams()
    area = locate_area(graph, (initial_pose.x, initial_pose.y))
    if area is None:
        raise DivergenceError("initial pose is outside every loaded area")
    state = TrackerState(pose=initial_pose, area=area, frame_index=0,
                         converged=True, last_residual=0.0)
    records = []
    for scan in frames:
        t0 = time.perf_counter()
        filtered = height_filter(scan, params.z_low, params.z_high)
        pcf = clutter_free_subsample(filtered)
        diverged = False
        try:
            state = icp_register(graph, state, pcf, params.icp)
        except DivergenceError:
            diverged = True
            if not params.relocalize:
                raise
            prior = np.array([state.pose.x, state.pose.y])
            pose, _report = global_localize(graph, prior, pcf, params.fallback_grid)
            state = TrackerState(pose=pose, area=locate_area(graph, (pose.x, pose.y)),
                                 frame_index=state.frame_index + 1,
                                 converged=False, last_residual=math.inf)
        ms = (time.perf_counter() - t0) * 1e3
        records.append(TrackRecord(timestamp=scan.timestamp, pose=state.pose,
                                   converged=state.converged, diverged=diverged,
                                   runtime_ms=ms))
    return records


# ---------------------------------------------------------------------------
# trajectory files

def write_trajectory(records, path, fmt="plain"):
    """plain: 'timestamp x y theta_rad flag'; quat: 8-field z-axis quaternion rows."""
    with open(path, "w") as fh:
        for r in records:
            ts = float(r.timestamp)
            if fmt == "quat":
                fh.write(
                    f"{ts!r} {r.pose.x!r} {r.pose.y!r} 0 0 0 "
                    f"{math.sin(r.pose.theta / 2.0)!r} {math.cos(r.pose.theta / 2.0)!r}\n"
                )
            else:
                flag = 1 if (r.converged and not r.diverged) else 0
                fh.write(f"{ts!r} {r.pose.x!r} {r.pose.y!r} {r.pose.theta!r} {flag}\n")


def read_trajectory(path):
    """Read a plain trajectory file: (ts, x, y, theta, flag) arrays."""
    ts, xs, ys, th, fl = [], [], [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            ts.append(float(parts[0]))
            xs.append(float(parts[1]))
            ys.append(float(parts[2]))
            th.append(float(parts[3]) if len(parts) > 3 else 0.0)
            fl.append(int(parts[4]) if len(parts) > 4 else 1)
    return (np.array(ts), np.array(xs), np.array(ys), np.array(th), np.array(fl, dtype=int))
