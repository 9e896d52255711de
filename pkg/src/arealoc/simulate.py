"""Deterministic synthetic LiDAR world built on a loaded area map.

Walls are the map polygons extruded to wall_height; open doors and
transparent passages are holes, closed doors return as door surfaces.
Clutter objects (boxes and cylinders) sit strictly inside areas.  A virtual
multi-ring scanner casts 3D rays against this world with seeded range noise
and occasional reflection-elongated returns, so every pipeline stage can be
checked against exact per-beam ground truth labels.
"""

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PlacementError, TrajectoryError
from .geometry import KIND_DOOR, KIND_TRANSPARENT, map_arrays, wrap_angle, Pose2D
from .osmag import (
    _signed_area,
    boundary_distance,
    locate_area,
    point_in_polygon,
)
from .scan import OrganizedScan

LABELS = ("none", "wall", "door", "clutter", "floor", "ceiling", "reflection")
LABEL_NONE, LABEL_WALL, LABEL_DOOR, LABEL_CLUTTER = 0, 1, 2, 3
LABEL_FLOOR, LABEL_CEILING, LABEL_REFLECTION = 4, 5, 6


@dataclass
class SensorModel:
    rings: int = 64
    columns: int = 600
    vfov_deg: float = 104.2
    max_range: float = 30.0
    range_noise_sigma: float = 0.01
    reflection_prob: float = 0.01
    reflection_extra_range: float = 5.0

    def __post_init__(self):
        if self.rings < 1 or self.columns < 1:
            raise ConfigError("sensor needs at least one ring and one column")
        if not 0.0 < self.vfov_deg < 180.0:
            raise ConfigError("vertical fov must be in (0, 180) degrees")
        if not 0.0 <= self.reflection_prob <= 1.0:
            raise ConfigError("reflection_prob must be a probability")

    def elevations(self):
        """Ring elevation angles (radians), uniform across the vertical fov."""
        half = math.radians(self.vfov_deg) / 2.0
        if self.rings == 1:
            return np.zeros(1)
        return np.linspace(-half, half, self.rings)

    def azimuths(self):
        """Column center azimuths (radians) in the sensor frame."""
        return (np.arange(self.columns) + 0.5) * 2.0 * math.pi / self.columns


@dataclass
class ClutterObject:
    shape: str             # "rect" | "circle"
    center: np.ndarray     # (2,) map frame
    size: np.ndarray       # rect: (hx, hy) half extents; circle: (r,)
    height: float
    container_area: int


@dataclass
class SimScene:
    graph: object
    wall_height: float = 3.0
    clutter: list = field(default_factory=list)
    door_states: dict = field(default_factory=dict)   # passage id -> "open"/"closed"
    seed: int = 0
    sensor_height: float = 1.0

    def door_open(self, passage_id):
        return self.door_states.get(passage_id, "open") == "open"


# ---------------------------------------------------------------------------
# world surfaces

@dataclass
class _World:
    seg: np.ndarray        # (S, 4) x0 y0 x1 y1
    seg_top: np.ndarray    # (S,) extrusion top (bottom is z=0)
    seg_label: np.ndarray  # (S,) int8
    cyl: np.ndarray        # (C, 3) cx cy r
    cyl_top: np.ndarray
    cyl_label: np.ndarray


def build_world(scene):
    """Surface arrays for ray casting; cached on the scene."""
    cached = getattr(scene, "_world", None)
    if cached is not None:
        return cached
    ma = map_arrays(scene.graph)
    segs, tops, labels = [], [], []
    for e in range(ma.n_edges):
        k = int(ma.kind[e])
        if k == KIND_TRANSPARENT:
            continue
        if k == KIND_DOOR:
            pid = scene.graph.passages[int(ma.passage_idx[e])].id
            if scene.door_open(pid):
                continue
            label = LABEL_DOOR
        else:
            label = LABEL_WALL
        segs.append((ma.ax[e], ma.ay[e], ma.bx[e], ma.by[e]))
        tops.append(scene.wall_height)
        labels.append(label)
    cyls, ctops, clabels = [], [], []
    for obj in scene.clutter:
        if obj.shape == "circle":
            cyls.append((obj.center[0], obj.center[1], obj.size[0]))
            ctops.append(obj.height)
            clabels.append(LABEL_CLUTTER)
        else:
            hx, hy = obj.size
            cx, cy = obj.center
            corners = [
                (cx - hx, cy - hy), (cx + hx, cy - hy),
                (cx + hx, cy + hy), (cx - hx, cy + hy),
            ]
            for i in range(4):
                x0, y0 = corners[i]
                x1, y1 = corners[(i + 1) % 4]
                segs.append((x0, y0, x1, y1))
                tops.append(obj.height)
                labels.append(LABEL_CLUTTER)
    world = _World(
        seg=np.array(segs, dtype=float).reshape(-1, 4),
        seg_top=np.array(tops, dtype=float),
        seg_label=np.array(labels, dtype=np.int8),
        cyl=np.array(cyls, dtype=float).reshape(-1, 3),
        cyl_top=np.array(ctops, dtype=float),
        cyl_label=np.array(clabels, dtype=np.int8),
    )
    scene._world = world
    return world


def generate_clutter(graph, density, seed, wall_height=3.0, margin=0.05,
                     keepout=None, keepout_radius=0.5):
    """Rejection-sample clutter footprints strictly inside each leaf area.

    Object count per area is round(polygon_area * density); heights are
    uniform in [0.5, 1.5] m.  Objects never overlap each other, and when a
    `keepout` polyline (the planned robot path) is given they stay clear of
    it by keepout_radius.  Fully deterministic for a given seed.
    """
    if density < 0:
        raise ConfigError("clutter density must be >= 0")
    keepout_pts = [np.asarray(p, dtype=float) for p in (keepout or [])]
    rng = np.random.default_rng(seed)
    objects = []
    for area in graph.areas:
        n = int(round(_signed_area(area.polygon) * density))
        lo = area.polygon.min(axis=0)
        hi = area.polygon.max(axis=0)
        placed_discs = []   # (center, reach) of objects already in this area
        for _ in range(n):
            placed = False
            for _attempt in range(1000):
                center = lo + rng.random(2) * (hi - lo)
                if rng.random() < 0.5:
                    shape, size = "rect", rng.uniform(0.15, 0.5, size=2)
                    reach = float(np.hypot(size[0], size[1]))
                else:
                    shape, size = "circle", rng.uniform(0.1, 0.4, size=1)
                    reach = float(size[0])
                h = float(rng.uniform(0.5, 1.5))
                if h >= wall_height:
                    continue
                if not point_in_polygon(area.polygon, center, boundary_eps=0.0):
                    continue
                if boundary_distance(area.polygon, center) <= reach + margin:
                    continue
                if any(np.hypot(*(center - c)) <= reach + r for c, r in placed_discs):
                    continue
                if keepout_pts and _path_distance(keepout_pts, center) <= reach + keepout_radius:
                    continue
                placed_discs.append((center.copy(), reach))
                objects.append(
                    ClutterObject(shape=shape, center=center.copy(), size=size.copy(),
                                  height=h, container_area=area.id)
                )
                placed = True
                break
            if not placed:
                raise PlacementError(
                    f"could not place clutter in area {area.id} after 1000 tries "
                    f"(density {density} too high?)"
                )
    return objects


def _path_distance(path, p):
    from .osmag import point_segment_distance

    if len(path) == 1:
        return float(np.linalg.norm(p - path[0]))
    return min(point_segment_distance(p, a, b) for a, b in zip(path[:-1], path[1:]))


# ---------------------------------------------------------------------------
# scan simulation

def simulate_scan(scene, pose, model, frame_index=0):
    """One organized frame plus per-beam labels, cast from pose.

    Returns (OrganizedScan, labels) with labels an (N, M) int8 matrix over
    LABELS.  Bit-identical for identical (scene, pose, model, frame_index).
    """
    world = build_world(scene)
    n, m = model.rings, model.columns
    elevs = model.elevations()
    az = model.azimuths()
    h = scene.sensor_height
    ox, oy = float(pose.x), float(pose.y)

    rng = np.random.default_rng((int(scene.seed), int(frame_index)))
    noise = rng.normal(0.0, model.range_noise_sigma, size=(n, m)) \
        if model.range_noise_sigma > 0 else np.zeros((n, m))
    refl_u = rng.random(size=(n, m))

    phi = wrap_angle(pose.theta) + az          # map-frame beam azimuths
    dx2, dy2 = np.cos(phi), np.sin(phi)        # (m,)

    t_all = np.full((n, m), np.inf)
    lab_all = np.zeros((n, m), dtype=np.int8)

    seg = world.seg
    have_segs = len(seg) > 0
    if have_segs:
        ex = seg[:, 2] - seg[:, 0]
        ey = seg[:, 3] - seg[:, 1]
        fx = seg[:, 0] - ox
        fy = seg[:, 1] - oy
        tnum = fx * ey - fy * ex
    have_cyls = len(world.cyl) > 0
    if have_cyls:
        gx = world.cyl[:, 0] - ox
        gy = world.cyl[:, 1] - oy
        cc = gx * gx + gy * gy - world.cyl[:, 2] ** 2

    for i in range(n):
        e = float(elevs[i])
        cos_e, sin_e = math.cos(e), math.sin(e)
        tan_e = sin_e / cos_e
        best_t = np.full(m, np.inf)
        best_lab = np.zeros(m, dtype=np.int8)

        if have_segs:
            denom = dx2[:, None] * ey[None, :] - dy2[:, None] * ex[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                s = tnum[None, :] / denom
                u = (fx[None, :] * dy2[:, None] - fy[None, :] * dx2[:, None]) / denom
            z = h + s * tan_e
            ok = (
                (np.abs(denom) > 1e-12)
                & (s > 1e-9)
                & (u >= 0.0) & (u <= 1.0)
                & (z >= 0.0) & (z <= world.seg_top[None, :])
            )
            s = np.where(ok, s, np.inf)
            jbest = np.argmin(s, axis=1)
            sbest = s[np.arange(m), jbest]
            hit = np.isfinite(sbest)
            best_t[hit] = sbest[hit] / cos_e
            best_lab[hit] = world.seg_label[jbest[hit]]

        if have_cyls:
            b = dx2[:, None] * gx[None, :] + dy2[:, None] * gy[None, :]
            disc = b * b - cc[None, :]
            root = np.sqrt(np.maximum(disc, 0.0))
            for sc in (b - root, b + root):
                z = h + sc * tan_e
                ok = (
                    (disc > 0.0)
                    & (sc > 1e-9)
                    & (z >= 0.0) & (z <= world.cyl_top[None, :])
                )
                sc = np.where(ok, sc, np.inf)
                jc = np.argmin(sc, axis=1)
                scb = sc[np.arange(m), jc]
                better = scb / cos_e < best_t
                best_t[better] = scb[better] / cos_e
                best_lab[better] = world.cyl_label[jc[better]]

        if sin_e < 0.0:
            t_floor = -h / sin_e
            better = t_floor < best_t
            best_t[better] = t_floor
            best_lab[better] = LABEL_FLOOR
        elif sin_e > 0.0:
            t_ceil = (scene.wall_height - h) / sin_e
            better = t_ceil < best_t
            best_t[better] = t_ceil
            best_lab[better] = LABEL_CEILING

        t_all[i] = best_t
        lab_all[i] = best_lab

    hit = np.isfinite(t_all)
    t_all = t_all + np.where(hit, noise, 0.0)
    reflect = hit & (lab_all == LABEL_WALL) & (refl_u < model.reflection_prob)
    t_all[reflect] += model.reflection_extra_range
    lab_all[reflect] = LABEL_REFLECTION

    valid = hit & (t_all > 1e-6) & (t_all <= model.max_range)
    lab_all[~valid] = LABEL_NONE

    # sensor-frame returns; planar direction uses the sensor-frame azimuth
    ca, sa = np.cos(az), np.sin(az)
    cos_el = np.cos(elevs)[:, None]
    sin_el = np.sin(elevs)[:, None]
    t = np.where(valid, t_all, 0.0)
    pts = np.stack(
        [t * cos_el * ca[None, :], t * cos_el * sa[None, :], t * sin_el],
        axis=2,
    )
    scan = OrganizedScan(points=pts, valid=valid, timestamp=0.0)
    return scan, lab_all


# ---------------------------------------------------------------------------
# trajectories and priors

def generate_trajectory(scene, waypoints, speed, frame_rate, yaw_rate=1.5):
    """Constant-speed piecewise-linear path; heading follows motion.

    Heading changes are slew-limited to yaw_rate (rad/s) so corners turn at
    a physical rate instead of jumping.  Every waypoint must be inside the
    map and consecutive waypoints must not cross walls, closed doors or
    transparent passages.  Returns a list of (timestamp, Pose2D).
    """
    wps = [np.asarray(w, dtype=float) for w in waypoints]
    if not wps:
        raise TrajectoryError("need at least one waypoint")
    for w in wps:
        if locate_area(scene.graph, w) is None:
            raise TrajectoryError(f"waypoint ({w[0]}, {w[1]}) is outside the map")
    for a, b in zip(wps[:-1], wps[1:]):
        _check_passable(scene, a, b)

    if len(wps) == 1 or speed <= 0:
        return [(0.0, Pose2D(wps[0][0], wps[0][1], 0.0))]

    seg_vec = [b - a for a, b in zip(wps[:-1], wps[1:])]
    seg_len = [float(np.linalg.norm(v)) for v in seg_vec]
    total = sum(seg_len)
    if total <= 0:
        return [(0.0, Pose2D(wps[0][0], wps[0][1], 0.0))]
    duration = total / speed
    n_frames = int(round(duration * frame_rate)) + 1

    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    max_step = yaw_rate / frame_rate
    out = []
    k = 0
    heading = None
    for idx in range(n_frames):
        ts = idx / frame_rate
        dist = min(ts * speed, total)
        while k < len(seg_len) - 1 and dist > cum[k + 1]:
            k += 1
        if seg_len[k] > 0:
            frac = (dist - cum[k]) / seg_len[k]
            p = wps[k] + frac * seg_vec[k]
            target = math.atan2(seg_vec[k][1], seg_vec[k][0])
        else:
            p = wps[k]
            target = 0.0
        if heading is None:
            heading = target
        else:
            diff = (target - heading + math.pi) % (2.0 * math.pi) - math.pi
            heading = heading + max(-max_step, min(max_step, diff))
        out.append((ts, Pose2D(float(p[0]), float(p[1]), heading)))
    return out


def _check_passable(scene, a, b, eps=1e-9):
    ma = map_arrays(scene.graph)
    abx, aby = b[0] - a[0], b[1] - a[1]
    for e in range(ma.n_edges):
        ex = ma.bx[e] - ma.ax[e]
        ey = ma.by[e] - ma.ay[e]
        denom = abx * ey - aby * ex
        if abs(denom) < 1e-12:
            continue
        fx = ma.ax[e] - a[0]
        fy = ma.ay[e] - a[1]
        t = (fx * ey - fy * ex) / denom
        u = (fx * aby - fy * abx) / denom
        if not (eps < t < 1.0 - eps and -eps <= u <= 1.0 + eps):
            continue
        k = int(ma.kind[e])
        if k == KIND_DOOR:
            pid = scene.graph.passages[int(ma.passage_idx[e])].id
            if scene.door_open(pid):
                continue
            raise TrajectoryError(
                f"path ({a[0]:.2f},{a[1]:.2f})->({b[0]:.2f},{b[1]:.2f}) "
                f"crosses closed door {pid}"
            )
        raise TrajectoryError(
            f"path ({a[0]:.2f},{a[1]:.2f})->({b[0]:.2f},{b[1]:.2f}) crosses a wall"
        )


def wifi_prior(true_pose, max_error, seed):
    """Coarse position estimate: uniform offset within max_error of the truth."""
    if max_error < 0:
        raise ConfigError("max_error must be >= 0")
    rng = np.random.default_rng(seed)
    r = max_error * math.sqrt(rng.random())
    ang = 2.0 * math.pi * rng.random()
    return np.array([true_pose.x + r * math.cos(ang), true_pose.y + r * math.sin(ang)])


# ---------------------------------------------------------------------------
# scene config files (INI sections)

SCENE_TEMPLATE = """\
[map]
path = map.osm
level = 0

[sensor]
rings = 64
columns = 600
vfov_deg = 104.2
max_range = 30.0
range_noise_sigma = 0.01
reflection_prob = 0.01
reflection_extra_range = 5.0
sensor_height = 1.0

[scene]
wall_height = 3.0
clutter_density = 0.1
seed = 1

[doors]
; passage way id = open | closed (unlisted doors are open)
; 42 = closed

[trajectory]
waypoints = 2.0,2.0; 8.0,2.0
speed = 1.0
frame_rate = 10.0
"""


@dataclass
class SceneConfig:
    map_path: str
    level: int
    model: SensorModel
    wall_height: float
    clutter_density: float
    seed: int
    sensor_height: float
    door_states: dict
    waypoints: list
    speed: float
    frame_rate: float


def write_scene_template(path):
    with open(path, "w") as fh:
        fh.write(SCENE_TEMPLATE)


def parse_waypoints(text):
    wps = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ConfigError(f"bad waypoint {chunk!r}, expected 'x,y'")
        wps.append((float(parts[0]), float(parts[1])))
    return wps


def load_scene_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise OSError(f"cannot read scene config {path}")
    try:
        sensor = cp["sensor"] if cp.has_section("sensor") else {}
        model = SensorModel(
            rings=int(sensor.get("rings", 64)),
            columns=int(sensor.get("columns", 600)),
            vfov_deg=float(sensor.get("vfov_deg", 104.2)),
            max_range=float(sensor.get("max_range", 30.0)),
            range_noise_sigma=float(sensor.get("range_noise_sigma", 0.01)),
            reflection_prob=float(sensor.get("reflection_prob", 0.01)),
            reflection_extra_range=float(sensor.get("reflection_extra_range", 5.0)),
        )
        scene_sec = cp["scene"] if cp.has_section("scene") else {}
        doors = {}
        if cp.has_section("doors"):
            for key, val in cp["doors"].items():
                state = val.strip().lower()
                if state not in ("open", "closed"):
                    raise ConfigError(f"door {key}: state must be open or closed")
                doors[int(key)] = state
        traj = cp["trajectory"] if cp.has_section("trajectory") else {}
        return SceneConfig(
            map_path=cp["map"]["path"],
            level=int(cp["map"].get("level", 0)),
            model=model,
            wall_height=float(scene_sec.get("wall_height", 3.0)),
            clutter_density=float(scene_sec.get("clutter_density", 0.0)),
            seed=int(scene_sec.get("seed", 0)),
            sensor_height=float(sensor.get("sensor_height", 1.0)),
            door_states=doors,
            waypoints=parse_waypoints(traj.get("waypoints", "")),
            speed=float(traj.get("speed", 1.0)),
            frame_rate=float(traj.get("frame_rate", 10.0)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_scene(config, graph):
    clutter = generate_clutter(graph, config.clutter_density, config.seed,
                               wall_height=config.wall_height,
                               keepout=config.waypoints or None)
    return SimScene(
        graph=graph,
        wall_height=config.wall_height,
        clutter=clutter,
        door_states=dict(config.door_states),
        seed=config.seed,
        sensor_height=config.sensor_height,
    )
