"""Numpy implementation of the ray-casting kernels.

Semantics shared with the compiled backend:

* a ray runs from the pose position through the transformed scan point;
* the first pass intersects only the origin area's edges, nearest hit wins,
  ties resolved to the lowest edge index;
* door hits with sd > th_passage (adaptive) and transparent hits re-cast
  against all loaded edges strictly beyond the first hit (1 mm guard);
* a failed first pass or failed re-cast is a miss (seg == -1, sd == nan).
"""

import numpy as np

T_LO = 1e-9          # minimum ray parameter; skips the surface under the origin
PAR_EPS = 1e-12      # |denominator| below this counts as parallel
U_TOL = 1e-9         # edge-parameter tolerance; vertex grazing hits the edge
RECAST_GUARD = 1e-3  # re-cast must land beyond the passage by this much

MODE_ADAPTIVE = 0
MODE_ALL_OPEN = 1
MODE_ALL_CLOSED = 2


def _weight(sd):
    out = np.zeros(sd.shape)
    neg = (sd > -1.0) & (sd <= 0.0)
    pos = (sd > 0.0) & (sd < 3.0)
    out[neg] = 1.0 / (1.5 * np.abs(sd[neg]) + 1.0)
    out[pos] = 1.0 / (3.0 * sd[pos] + 1.0)
    return out


def _first_hit(dx, dy, ox, oy, ax, ay, bx, by, tmin):
    """Nearest ray-segment hit per ray: (t, local_index), index -1 on no hit."""
    n = len(dx)
    if n == 0 or len(ax) == 0:
        return np.full(n, np.inf), np.full(n, -1, dtype=np.int64)
    ex = bx - ax
    ey = by - ay
    fx = ax - ox
    fy = ay - oy
    denom = dx[:, None] * ey[None, :] - dy[:, None] * ex[None, :]
    tnum = fx * ey - fy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = tnum[None, :] / denom
        u = (fx[None, :] * dy[:, None] - fy[None, :] * dx[:, None]) / denom
    tmin = np.broadcast_to(np.atleast_1d(tmin), (n,))
    valid = (
        (np.abs(denom) > PAR_EPS)
        & (t >= tmin[:, None])
        & (u >= -U_TOL)
        & (u <= 1.0 + U_TOL)
    )
    t = np.where(valid, t, np.inf)
    idx = np.argmin(t, axis=1)
    tbest = t[np.arange(n), idx]
    idx = np.where(np.isfinite(tbest), idx, -1)
    return tbest, idx


def _foot_and_sd(qx, qy, L, t, ax, ay, bx, by):
    """Clamped foot point on the matched segment and the signed distance."""
    ex = bx - ax
    ey = by - ay
    le2 = ex * ex + ey * ey
    s = np.clip(((qx - ax) * ex + (qy - ay) * ey) / le2, 0.0, 1.0)
    cx = ax + s * ex
    cy = ay + s * ey
    sd = np.sqrt((qx - cx) ** 2 + (qy - cy) ** 2)
    sd = np.where(L < t, -sd, sd)
    return sd, cx, cy


def _cast_points(ax, ay, bx, by, kind, area_start, area_count,
                 origin_area, ox, oy, qx, qy, th_passage, mode):
    """Cast rays origin->q for map-frame points q; full passage handling."""
    n = len(qx)
    sd = np.full(n, np.nan)
    seg = np.full(n, -1, dtype=np.int32)
    through = np.zeros(n, dtype=np.uint8)
    cx = np.full(n, np.nan)
    cy = np.full(n, np.nan)
    if n == 0:
        return sd, seg, through, cx, cy

    lx = qx - ox
    ly = qy - oy
    L = np.sqrt(lx * lx + ly * ly)
    live = L > PAR_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        dx = np.where(live, lx / L, 0.0)
        dy = np.where(live, ly / L, 0.0)

    s0 = int(area_start[origin_area])
    cnt = int(area_count[origin_area])
    t1, loc = _first_hit(dx, dy, ox, oy, ax[s0:s0 + cnt], ay[s0:s0 + cnt],
                         bx[s0:s0 + cnt], by[s0:s0 + cnt], T_LO)
    hit = live & (loc >= 0)
    g = np.where(hit, s0 + loc, -1).astype(np.int32)

    h = np.flatnonzero(hit)
    if len(h) == 0:
        return sd, seg, through, cx, cy
    sd_h, cx_h, cy_h = _foot_and_sd(qx[h], qy[h], L[h], t1[h], ax[g[h]], ay[g[h]], bx[g[h]], by[g[h]])
    sd[h] = sd_h
    cx[h] = cx_h
    cy[h] = cy_h
    seg[h] = g[h]

    if mode == MODE_ALL_CLOSED:
        return sd, seg, through, cx, cy
    k_h = kind[g[h]]
    if mode == MODE_ALL_OPEN:
        recast = k_h >= 1
    else:
        recast = (k_h == 2) | ((k_h == 1) & (sd_h > th_passage))
    r = h[recast]
    if len(r) == 0:
        return sd, seg, through, cx, cy

    t2, loc2 = _first_hit(dx[r], dy[r], ox, oy, ax, ay, bx, by, t1[r] + RECAST_GUARD)
    found = loc2 >= 0
    rf = r[found]
    g2 = loc2[found].astype(np.int32)
    sd2, cx2, cy2 = _foot_and_sd(qx[rf], qy[rf], L[rf], t2[found],
                                 ax[g2], ay[g2], bx[g2], by[g2])
    sd[rf] = sd2
    cx[rf] = cx2
    cy[rf] = cy2
    seg[rf] = g2
    through[rf] = 1
    rm = r[~found]
    sd[rm] = np.nan
    cx[rm] = np.nan
    cy[rm] = np.nan
    seg[rm] = -1
    return sd, seg, through, cx, cy


def cast_rays(ax, ay, bx, by, kind, area_start, area_count,
              origin_area, x, y, theta, px, py, th_passage, mode):
    """Backend entry: sensor-frame points (px, py) cast from pose (x, y, theta)."""
    c = np.cos(theta)
    s = np.sin(theta)
    qx = c * px - s * py + x
    qy = s * px + c * py + y
    return _cast_points(ax, ay, bx, by, kind, area_start, area_count,
                        int(origin_area), float(x), float(y), qx, qy,
                        float(th_passage), int(mode))


def score_grid(ax, ay, bx, by, kind, area_start, area_count,
               gx, gy, gtheta, garea, px, py, d, penalty, th_passage):
    """E1/E2/E3 accumulators for every guess; one adaptive cast pass per guess."""
    n_guess = len(gx)
    e1 = np.zeros(n_guess)
    e2 = np.zeros(n_guess)
    e3 = np.zeros(n_guess)
    rot_cache = {}
    for i in range(n_guess):
        th = float(gtheta[i])
        rotated = rot_cache.get(th)
        if rotated is None:
            c = np.cos(th)
            s = np.sin(th)
            rotated = (c * px - s * py, s * px + c * py)
            rot_cache[th] = rotated
        qx = rotated[0] + gx[i]
        qy = rotated[1] + gy[i]
        sd, seg, _, _, _ = _cast_points(ax, ay, bx, by, kind, area_start, area_count,
                                        int(garea[i]), float(gx[i]), float(gy[i]),
                                        qx, qy, float(th_passage), MODE_ADAPTIVE)
        hit = seg >= 0
        n_miss = int(len(sd) - hit.sum())
        sd_h = sd[hit]
        abs_sd = np.abs(sd_h)
        e1[i] = penalty * n_miss + np.where(abs_sd < d, abs_sd, penalty).sum()
        pos = sd_h > 0.0
        e2[i] = _weight(sd_h[pos]).sum()
        e3[i] = sd_h[pos].sum()
    return e1, e2, e3
