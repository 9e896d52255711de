"""Global localization: score a pose-guess grid around a coarse prior.

A square lattice of positions (clipped to a disc) times a full orientation
sweep is scored against the map in one kernel pass; three error accumulators
per guess feed four candidate score functions, and the arg-max guess wins.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PriorOutOfMapError
from .geometry import Pose2D, map_arrays, score_grid, TH_PASSAGE_M
from .osmag import locate_area

SCORE_FNS = ("s1", "s2", "s3", "s4")


@dataclass
class GridParams:
    radius: float = 6.0
    step: float = 0.5
    angular_step: float = math.radians(2.0)
    d: float = 0.8               # nearby-error threshold
    penalty: float = 2.0         # error charged beyond d (and for missed rays)
    th_passage: float = TH_PASSAGE_M
    score_fn: str = "s1"
    top_k: int = 10


@dataclass
class GuessGrid:
    center: np.ndarray
    radius: float
    step: float
    angular_step: float
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    area_idx: np.ndarray   # int32 index into map_arrays area order
    area_ids: np.ndarray   # external area id per guess

    def __len__(self):
        return len(self.x)

    def poses(self):
        return [Pose2D(float(x), float(y), float(t)) for x, y, t in zip(self.x, self.y, self.theta)]


@dataclass
class ScoredGuess:
    pose: Pose2D
    area: int
    e1: float
    e2: float
    e3: float
    score: float


@dataclass
class LocalizationReport:
    best: ScoredGuess
    top: list
    n_guesses: int
    score_fn: str

    def table(self):
        lines = ["x y theta_deg area_id E1 E2 E3 score"]
        for g in self.top:
            lines.append(
                f"{g.pose.x:.3f} {g.pose.y:.3f} {math.degrees(g.pose.theta):.2f} "
                f"{g.area} {g.e1:.4f} {g.e2:.4f} {g.e3:.4f} {g.score:.6g}"
            )
        return "\n".join(lines)


def sample_guesses(graph, prior, radius, step, angular_step):
    """The guess grid: lattice positions within radius of the prior, all
    orientations, each guess tagged with its containing area.  Positions
    outside every area are dropped; an empty grid raises PriorOutOfMapError.
    """
    if step <= 0 or angular_step <= 0:
        raise ValueError("step and angular_step must be positive")
    prior = np.asarray(prior, dtype=float)
    ma = map_arrays(graph)

    n_ang = max(1, int(math.floor(2.0 * math.pi / angular_step + 1e-9)))
    thetas = np.arange(n_ang) * angular_step

    i_max = int(math.floor(radius / step + 1e-9))
    xs, ys, areas = [], [], []
    for i in range(-i_max, i_max + 1):
        for j in range(-i_max, i_max + 1):
            ox, oy = i * step, j * step
            if ox * ox + oy * oy > radius * radius + 1e-9:
                continue
            px, py = prior[0] + ox, prior[1] + oy
            aid = locate_area(graph, (px, py))
            if aid is None:
                continue
            xs.append(px)
            ys.append(py)
            areas.append(aid)
    if not xs:
        raise PriorOutOfMapError(
            f"no guess within {radius} m of prior ({prior[0]:.2f}, {prior[1]:.2f}) lies inside the map"
        )

    n_pos = len(xs)
    gx = np.repeat(xs, n_ang)
    gy = np.repeat(ys, n_ang)
    gt = np.tile(thetas, n_pos)
    gids = np.repeat(areas, n_ang)
    gidx = np.array([ma.area_index(a) for a in areas], dtype=np.int32)
    gidx = np.repeat(gidx, n_ang)
    return GuessGrid(
        center=prior, radius=radius, step=step, angular_step=angular_step,
        x=gx.astype(float), y=gy.astype(float), theta=gt.astype(float),
        area_idx=gidx, area_ids=np.asarray(gids),
    )


def scores_from_errors(e1, e2, e3):
    """All four score functions from the shared error accumulators.

    Zero divisors mean a perfect fit and map to +inf, which outranks every
    finite score.
    """
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    e3 = np.asarray(e3, dtype=float)
    with np.errstate(divide="ignore"):
        s1 = np.where(e1 > 0.0, 1.0 / np.where(e1 > 0.0, e1, 1.0), np.inf)
        s3 = np.where(e1 > 0.0, e2 / np.where(e1 > 0.0, e1, 1.0), np.inf)
        s4 = np.where(e3 > 0.0, 1.0 / np.where(e3 > 0.0, e3, 1.0), np.inf)
    return {"s1": s1, "s2": e2.copy(), "s3": s3, "s4": s4}


def score_guess(graph, pose, area_id, pcf, fn="s1", d=0.8, penalty=2.0, th_passage=TH_PASSAGE_M):
    """Score a single guess (object-level path; the grid uses the kernel)."""
    ma = map_arrays(graph)
    e1, e2, e3 = score_grid(
        ma,
        np.array([pose.x]), np.array([pose.y]), np.array([pose.theta]),
        np.array([ma.area_index(area_id)], dtype=np.int32),
        pcf.points, d=d, penalty=penalty, th_passage=th_passage,
    )
    score = scores_from_errors(e1, e2, e3)[fn][0]
    return ScoredGuess(pose=pose, area=area_id, e1=float(e1[0]), e2=float(e2[0]),
                       e3=float(e3[0]), score=float(score))


def _argbest(scores, gx, gy, gt):
    """Index of the max score; ties resolve to the smallest (x, y, theta)."""
    best = np.max(scores)
    tied = np.flatnonzero(scores == best)
    if len(tied) == 1:
        return int(tied[0])
    order = np.lexsort((gt[tied], gy[tied], gx[tied]))
    return int(tied[order[0]])


def global_localize(graph, prior, pcf, params=None):
    """Best-scoring pose around the prior plus a top-k report."""
    params = params or GridParams()
    if len(pcf) == 0:
        raise ValueError("cannot localize on an empty clutter-free point set")
    grid = sample_guesses(graph, prior, params.radius, params.step, params.angular_step)
    ma = map_arrays(graph)
    e1, e2, e3 = score_grid(ma, grid.x, grid.y, grid.theta, grid.area_idx, pcf.points,
                            d=params.d, penalty=params.penalty, th_passage=params.th_passage)
    scores = scores_from_errors(e1, e2, e3)[params.score_fn]

    best_i = _argbest(scores, grid.x, grid.y, grid.theta)

    # top-k rows, ranked like the arg-max rule
    k = min(params.top_k, len(grid))
    order = np.lexsort((grid.theta, grid.y, grid.x, -scores))
    top = []
    for i in order[:k]:
        top.append(
            ScoredGuess(
                pose=Pose2D(float(grid.x[i]), float(grid.y[i]), float(grid.theta[i])),
                area=int(grid.area_ids[i]),
                e1=float(e1[i]), e2=float(e2[i]), e3=float(e3[i]),
                score=float(scores[i]),
            )
        )
    best = ScoredGuess(
        pose=Pose2D(float(grid.x[best_i]), float(grid.y[best_i]), float(grid.theta[best_i])),
        area=int(grid.area_ids[best_i]),
        e1=float(e1[best_i]), e2=float(e2[best_i]), e3=float(e3[best_i]),
        score=float(scores[best_i]),
    )
    report = LocalizationReport(best=best, top=top, n_guesses=len(grid), score_fn=params.score_fn)
    return best.pose, report
