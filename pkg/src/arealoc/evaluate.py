"""Trajectory evaluation: absolute trajectory error against ground truth.

Both trajectories live in the map frame, so no alignment transform is
applied; frames are associated by nearest timestamp within 50 ms.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError

ASSOC_MAX_DT = 0.05


@dataclass
class EvalReport:
    ate_max: float
    ate_rmse: float
    errors: np.ndarray          # per associated frame, meters
    success_flags: np.ndarray   # per associated frame (est trajectory flags)
    n_frames: int
    runtime_ms_mean: float = 0.0
    runtime_ms_median: float = 0.0
    diverged_frames: int = 0

    def summary(self):
        return (
            f"frames={self.n_frames} ate_rmse={self.ate_rmse:.4f} m "
            f"ate_max={self.ate_max:.4f} m diverged={self.diverged_frames} "
            f"runtime={self.runtime_ms_median:.2f} ms/frame (median)"
        )


def compute_ate(est_ts, est_xy, gt_ts, gt_xy, flags=None, max_dt=ASSOC_MAX_DT):
    """Planar position error per estimated frame vs nearest-timestamp truth.

    Raises InsufficientDataError when fewer than 2 pairs associate.
    """
    est_ts = np.asarray(est_ts, dtype=float)
    gt_ts = np.asarray(gt_ts, dtype=float)
    est_xy = np.asarray(est_xy, dtype=float).reshape(-1, 2)
    gt_xy = np.asarray(gt_xy, dtype=float).reshape(-1, 2)

    errors, used_flags = [], []
    for i, t in enumerate(est_ts):
        j = int(np.argmin(np.abs(gt_ts - t)))
        if abs(gt_ts[j] - t) > max_dt:
            continue
        errors.append(float(np.linalg.norm(est_xy[i] - gt_xy[j])))
        used_flags.append(flags[i] if flags is not None else 1)
    if len(errors) < 2:
        raise InsufficientDataError(
            f"only {len(errors)} trajectory pairs associate within {max_dt * 1e3:.0f} ms"
        )
    errors = np.array(errors)
    used_flags = np.array(used_flags, dtype=int)
    return EvalReport(
        ate_max=float(errors.max()),
        ate_rmse=float(np.sqrt(np.mean(errors ** 2))),
        errors=errors,
        success_flags=used_flags,
        n_frames=len(errors),
        diverged_frames=int(np.sum(used_flags == 0)),
    )


def report_from_records(records, gt_ts, gt_xy, max_dt=ASSOC_MAX_DT):
    """EvalReport for tracker output records, runtime stats included."""
    est_ts = np.array([r.timestamp for r in records])
    est_xy = np.array([[r.pose.x, r.pose.y] for r in records])
    flags = np.array([0 if r.diverged else 1 for r in records], dtype=int)
    rep = compute_ate(est_ts, est_xy, gt_ts, gt_xy, flags=flags, max_dt=max_dt)
    runtimes = np.array([r.runtime_ms for r in records])
    rep.runtime_ms_mean = float(runtimes.mean())
    rep.runtime_ms_median = float(np.median(runtimes))
    rep.diverged_frames = int(sum(1 for r in records if r.diverged))
    return rep
