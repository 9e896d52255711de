"""Organized-scan pipeline: ring/column binning, height band, clutter rejection.

A raw 3D LiDAR frame becomes an N x M matrix (ring x azimuth column); the
ceiling and ground band is stripped; then each column keeps only its
planar-furthest return, which is presumed to be the wall behind any clutter.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import MapFormatError


@dataclass
class OrganizedScan:
    points: np.ndarray    # (N, M, 3) sensor frame
    valid: np.ndarray     # (N, M) bool
    timestamp: float = 0.0

    @property
    def n_rings(self):
        return self.points.shape[0]

    @property
    def n_columns(self):
        return self.points.shape[1]


@dataclass
class ClutterFreePointSet:
    points: np.ndarray     # (K, 2) sensor frame, ascending column order
    column_of: np.ndarray  # (K,) int32 source column per point

    def __len__(self):
        return len(self.points)


def azimuth_bin(x, y, n_columns):
    """Column index of a point: uniform bins over [0, 2*pi)."""
    b = np.floor(np.arctan2(y, x) * n_columns / (2.0 * math.pi)).astype(np.int64)
    return np.mod(b, n_columns)


def organize(rings, xyz, n_columns, n_rings=None, timestamp=0.0):
    """Bin labeled points into an OrganizedScan.

    rings: (K,) int ring label per point; xyz: (K, 3).  When one ring drops
    two points into the same column the planar-nearer one is kept.  Points
    with (near) zero planar range cannot be binned and are dropped.
    """
    rings = np.asarray(rings, dtype=np.int64)
    xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
    if n_rings is None:
        n_rings = int(rings.max()) + 1 if len(rings) else 1
    scan = OrganizedScan(
        points=np.zeros((n_rings, n_columns, 3)),
        valid=np.zeros((n_rings, n_columns), dtype=bool),
        timestamp=timestamp,
    )
    if len(rings) == 0:
        return scan
    pr = np.sqrt(xyz[:, 0] ** 2 + xyz[:, 1] ** 2)
    keep = pr > 1e-12
    rings, xyz, pr = rings[keep], xyz[keep], pr[keep]
    cols = azimuth_bin(xyz[:, 0], xyz[:, 1], n_columns)
    # write far-to-near so the nearest point in a contested cell lands last
    order = np.argsort(-pr, kind="stable")
    scan.points[rings[order], cols[order]] = xyz[order]
    scan.valid[rings[order], cols[order]] = True
    return scan


def height_filter(scan, z_low=-0.3, z_high=1.5):
    """Invalidate returns outside the sensor-relative z band [z_low, z_high]."""
    if z_low >= z_high:
        raise ValueError(f"z_low {z_low} must be below z_high {z_high}")
    z = scan.points[:, :, 2]
    valid = scan.valid & (z >= z_low) & (z <= z_high)
    return OrganizedScan(points=scan.points, valid=valid, timestamp=scan.timestamp)


def clutter_free_subsample(scan):
    """Keep the planar-furthest valid return of every column (ties: lowest ring).

    Expects an organized, height-filtered scan; returns the 2D point set used
    for map matching.
    """
    pr = np.sqrt(scan.points[:, :, 0] ** 2 + scan.points[:, :, 1] ** 2)
    pr = np.where(scan.valid, pr, -np.inf)
    best_ring = np.argmax(pr, axis=0)
    has_point = scan.valid.any(axis=0)
    cols = np.flatnonzero(has_point)
    pts = scan.points[best_ring[cols], cols, :2]
    return ClutterFreePointSet(points=pts.astype(float), column_of=cols.astype(np.int32))


# ---------------------------------------------------------------------------
# text format: header "N M timestamp", then one valid point per line
# "ring azimuth_bin x y z"

def write_scan(scan, path):
    with open(path, "w") as fh:
        fh.write(f"{scan.n_rings} {scan.n_columns} {float(scan.timestamp)!r}\n")
        rr, cc = np.nonzero(scan.valid)
        for i, j in zip(rr, cc):
            x, y, z = scan.points[i, j]
            fh.write(f"{i} {j} {float(x)!r} {float(y)!r} {float(z)!r}\n")


def read_scan(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise MapFormatError(f"{path}: bad scan header {header!r}")
        n_rings, n_cols = int(header[0]), int(header[1])
        scan = OrganizedScan(
            points=np.zeros((n_rings, n_cols, 3)),
            valid=np.zeros((n_rings, n_cols), dtype=bool),
            timestamp=float(header[2]),
        )
        for ln, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 5:
                raise MapFormatError(f"{path}:{ln}: expected 'ring col x y z'")
            i, j = int(parts[0]), int(parts[1])
            scan.points[i, j] = [float(parts[2]), float(parts[3]), float(parts[4])]
            scan.valid[i, j] = True
    return scan
