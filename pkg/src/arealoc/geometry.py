"""Ray casting of scan points into the area map and the matching weight function.

Polygon edges are flattened into contiguous arrays once per loaded map
(`MapArrays`), with edges split at passage endpoints so every door or
transparent section is its own segment.  The per-point work runs in a
backend kernel (compiled when available, numpy otherwise); this module owns
the map preparation and the object-level API on top of the raw arrays.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import PoseOutOfMapError
from .osmag import locate_area

TH_PASSAGE_M = 0.1   # signed distance beyond a door that means "door is open"

KIND_WALL = 0
KIND_DOOR = 1
KIND_TRANSPARENT = 2

MODE_ADAPTIVE = 0
MODE_ALL_OPEN = 1
MODE_ALL_CLOSED = 2

PASSAGE_MODES = {"adaptive": MODE_ADAPTIVE, "all_open": MODE_ALL_OPEN, "all_closed": MODE_ALL_CLOSED}


def wrap_angle(theta):
    """Wrap to [0, 2*pi)."""
    w = float(theta) % (2.0 * math.pi)
    # tiny negative inputs can round the modulo up to exactly 2*pi
    return 0.0 if w >= 2.0 * math.pi else w


def rot2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        self.x = float(self.x)
        self.y = float(self.y)
        self.theta = wrap_angle(self.theta)

    @property
    def position(self):
        return np.array([self.x, self.y])

    def transform(self, pts):
        """Sensor-frame (n, 2) points into the map frame."""
        return np.asarray(pts, dtype=float) @ rot2(self.theta).T + self.position

    def as_tuple(self):
        return (self.x, self.y, self.theta)


def weight(sd):
    """Match weight in [0, 1] for a signed point-to-segment distance.

    Peaks at sd = 0, decays as 1/(1.5|sd|+1) on the inside (sd <= 0) and
    1/(3 sd + 1) on the outside, and cuts off hard at sd <= -1 and sd >= 3
    so deep clutter and reflection artifacts drop out entirely.
    """
    arr = np.asarray(sd, dtype=float)
    out = np.zeros(arr.shape)
    neg = (arr > -1.0) & (arr <= 0.0)
    pos = (arr > 0.0) & (arr < 3.0)
    out[neg] = 1.0 / (1.5 * np.abs(arr[neg]) + 1.0)
    out[pos] = 1.0 / (3.0 * arr[pos] + 1.0)
    if np.isscalar(sd) or arr.ndim == 0:
        return float(out)
    return out


def segment_orientation(ax, ay, bx, by):
    """Undirected segment orientation in [0, pi)."""
    ang = math.atan2(by - ay, bx - ax) % math.pi
    return 0.0 if ang == math.pi else ang


@dataclass
class MapArrays:
    """Flat edge soup of one loaded floor, grouped by area.

    Edges are stored area by area in polygon order, each polygon edge split
    at the passages sitting on it.  kind is wall/door/transparent per
    sub-edge; passage_idx/local_edge map a sub-edge back to its source.
    """

    ax: np.ndarray
    ay: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    kind: np.ndarray          # int8
    passage_idx: np.ndarray   # int32, -1 when not a passage
    edge_area: np.ndarray     # int32 area index
    local_edge: np.ndarray    # int32 polygon edge index
    area_start: np.ndarray    # int32
    area_count: np.ndarray    # int32
    orientation: np.ndarray   # float64 [0, pi)
    area_ids: list
    graph: object = None

    @property
    def n_edges(self):
        return len(self.ax)

    def area_index(self, area_id):
        return self.area_ids.index(area_id)

    def segment_ref(self, edge_idx):
        """(('passage', passage_id) | ('area', area_id, polygon_edge)) for an edge."""
        p = int(self.passage_idx[edge_idx])
        if p >= 0 and self.graph is not None:
            return ("passage", self.graph.passages[p].id)
        return ("area", self.area_ids[int(self.edge_area[edge_idx])], int(self.local_edge[edge_idx]))


def build_map_arrays(graph):
    """Flatten graph polygons into MapArrays, splitting edges at passages."""
    ax, ay, bx, by = [], [], [], []
    kind, pidx, earea, ledge = [], [], [], []
    area_start, area_count = [], []

    for ai, area in enumerate(graph.areas):
        poly = area.polygon
        nv = len(poly)
        area_start.append(len(ax))
        for ei in range(nv):
            a = poly[ei]
            b = poly[(ei + 1) % nv]
            for (sa, sb, k, p) in _split_edge(a, b, area.id, graph.passages):
                ax.append(sa[0]); ay.append(sa[1])
                bx.append(sb[0]); by.append(sb[1])
                kind.append(k); pidx.append(p)
                earea.append(ai); ledge.append(ei)
        area_count.append(len(ax) - area_start[-1])

    ax = np.asarray(ax); ay = np.asarray(ay)
    bx = np.asarray(bx); by = np.asarray(by)
    orient = np.array(
        [segment_orientation(ax[i], ay[i], bx[i], by[i]) for i in range(len(ax))]
    )
    return MapArrays(
        ax=ax, ay=ay, bx=bx, by=by,
        kind=np.asarray(kind, dtype=np.int8),
        passage_idx=np.asarray(pidx, dtype=np.int32),
        edge_area=np.asarray(earea, dtype=np.int32),
        local_edge=np.asarray(ledge, dtype=np.int32),
        area_start=np.asarray(area_start, dtype=np.int32),
        area_count=np.asarray(area_count, dtype=np.int32),
        orientation=orient,
        area_ids=[a.id for a in graph.areas],
        graph=graph,
    )


def _split_edge(a, b, area_id, passages, snap=0.02):
    """Yield (start, end, kind, passage_index) sub-edges of polygon edge a->b."""
    e = b - a
    le2 = float(e @ e)
    length = math.sqrt(le2)
    intervals = []
    for pi, psg in enumerate(passages):
        if area_id not in psg.connects:
            continue
        s0, d0 = _project_param(a, e, le2, psg.endpoints[0])
        s1, d1 = _project_param(a, e, le2, psg.endpoints[1])
        if d0 > snap or d1 > snap:
            continue  # passage sits on a different edge of this area
        lo, hi = sorted((s0, s1))
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        if hi - lo > 1e-9 / max(length, 1e-9):
            k = KIND_DOOR if psg.kind == "door" else KIND_TRANSPARENT
            intervals.append((lo, hi, k, pi))

    if not intervals:
        yield a, b, KIND_WALL, -1
        return
    cuts = sorted({0.0, 1.0} | {s for lo, hi, _, _ in intervals for s in (lo, hi)})
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if (hi - lo) * length < 1e-9:
            continue
        mid = 0.5 * (lo + hi)
        k, p = KIND_WALL, -1
        for ilo, ihi, ik, ip in intervals:
            if ilo - 1e-12 <= mid <= ihi + 1e-12:
                k, p = ik, ip
                break
        yield a + lo * e, a + hi * e, k, p


def _project_param(a, e, le2, p):
    """Parameter of p projected on segment a + s*e and its off-line distance."""
    s = float((p - a) @ e) / le2
    foot = a + np.clip(s, 0.0, 1.0) * e
    return s, float(np.linalg.norm(p - foot))


def map_arrays(graph):
    """MapArrays for a graph, built once and cached on the graph object."""
    cached = getattr(graph, "_map_arrays", None)
    if cached is None:
        cached = build_map_arrays(graph)
        graph._map_arrays = cached
    return cached


# ---------------------------------------------------------------------------
# ray casting API

@dataclass
class IntersectionResult:
    sd: float
    hit_point: np.ndarray
    segment_id: tuple
    segment_orientation: float
    through_passage: bool
    point_index: int = -1
    edge_index: int = -1


class BatchIntersection:
    """Array view of one batch of ray casts (misses kept, flagged seg == -1)."""

    def __init__(self, ma, sd, seg, through, cx, cy):
        self.ma = ma
        self.sd = sd
        self.seg = seg
        self.through = through
        self.cx = cx
        self.cy = cy

    @property
    def hit_mask(self):
        return self.seg >= 0

    @property
    def miss_indices(self):
        return np.flatnonzero(self.seg < 0)

    def orientations(self):
        """Matched segment orientation per hit (aligned with hit_mask order)."""
        return self.ma.orientation[self.seg[self.hit_mask]]

    def results(self):
        out = []
        for i in np.flatnonzero(self.hit_mask):
            g = int(self.seg[i])
            out.append(
                IntersectionResult(
                    sd=float(self.sd[i]),
                    hit_point=np.array([self.cx[i], self.cy[i]]),
                    segment_id=self.ma.segment_ref(g),
                    segment_orientation=float(self.ma.orientation[g]),
                    through_passage=bool(self.through[i]),
                    point_index=int(i),
                    edge_index=g,
                )
            )
        return out


def _as_mode(mode):
    if isinstance(mode, str):
        return PASSAGE_MODES[mode]
    return int(mode)


def cast_batch(ma, origin_area_id, pose, points, th_passage=TH_PASSAGE_M, mode="adaptive"):
    """Cast every sensor-frame point from pose; origin area already known."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    sd, seg, through, cx, cy = _kernels.cast_rays(
        ma.ax, ma.ay, ma.bx, ma.by, ma.kind, ma.area_start, ma.area_count,
        ma.area_index(origin_area_id),
        float(pose.x), float(pose.y), float(pose.theta),
        np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
        float(th_passage), _as_mode(mode),
    )
    return BatchIntersection(ma, sd, seg, through, cx, cy)


def ray_cast(graph, origin_area_id, pose, point, th_passage=TH_PASSAGE_M, mode="adaptive"):
    """Single-point form of cast_batch; returns IntersectionResult or None on miss."""
    batch = cast_batch(map_arrays(graph), origin_area_id, pose, np.asarray(point, dtype=float).reshape(1, 2),
                       th_passage=th_passage, mode=mode)
    results = batch.results()
    return results[0] if results else None


def batch_intersect(graph, pose, points, th_passage=TH_PASSAGE_M, mode="adaptive", origin_area_id=None):
    """Cast a clutter-free point set from pose into the map.

    Returns (results, miss_indices).  Raises PoseOutOfMapError when the pose
    is not inside any loaded area.
    """
    if origin_area_id is None:
        origin_area_id = locate_area(graph, (pose.x, pose.y))
        if origin_area_id is None:
            raise PoseOutOfMapError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is outside every loaded area")
    batch = cast_batch(map_arrays(graph), origin_area_id, pose, points, th_passage=th_passage, mode=mode)
    return batch.results(), batch.miss_indices


def score_grid(ma, gx, gy, gtheta, garea_idx, points, d=0.8, penalty=2.0, th_passage=TH_PASSAGE_M):
    """Error accumulators (E1, E2, E3) for a whole grid of pose guesses.

    One ray-cast pass per guess feeds all three accumulators; score formulas
    are applied afterwards (see localize.scores_from_errors).
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    return _kernels.score_grid(
        ma.ax, ma.ay, ma.bx, ma.by, ma.kind, ma.area_start, ma.area_count,
        np.ascontiguousarray(gx, dtype=float),
        np.ascontiguousarray(gy, dtype=float),
        np.ascontiguousarray(gtheta, dtype=float),
        np.ascontiguousarray(garea_idx, dtype=np.int32),
        np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
        float(d), float(penalty), float(th_passage),
    )
