"""Deterministic SVG rendering of maps and trajectories."""

import numpy as np

from .geometry import KIND_DOOR, KIND_TRANSPARENT, map_arrays

AREA_FILL = "#f6e3ec"
WALL_STROKE = "#222222"
DOOR_STROKE = "#d62728"
GLASS_STROKE = "#1f77b4"


def _error_color(err, emax):
    """Green (no error) to red (emax and above)."""
    if emax <= 0:
        frac = 0.0
    else:
        frac = min(max(err / emax, 0.0), 1.0)
    r = int(round(40 + 215 * frac))
    g = int(round(200 - 160 * frac))
    return f"#{r:02x}{g:02x}30"


def render_svg(graph, trajectories=(), margin=1.0, px_per_m=40.0):
    """SVG text for a loaded map plus optional trajectory overlays.

    trajectories: iterable of dicts with keys `points` ((n, 2) array),
    optional `errors` ((n,) array, colors the polyline by per-frame error)
    and optional `color`.
    """
    pts = np.vstack([a.polygon for a in graph.areas])
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    w = (hi[0] - lo[0]) * px_per_m
    h = (hi[1] - lo[1]) * px_per_m

    def sx(x):
        return (x - lo[0]) * px_per_m

    def sy(y):
        return (hi[1] - y) * px_per_m   # svg y grows downward

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.2f} {h:.2f}">',
        f'<rect width="{w:.2f}" height="{h:.2f}" fill="white"/>',
    ]
    for area in graph.areas:
        d = " ".join(
            f"{'M' if i == 0 else 'L'} {sx(p[0]):.2f} {sy(p[1]):.2f}"
            for i, p in enumerate(area.polygon)
        )
        out.append(f'<path d="{d} Z" fill="{AREA_FILL}" stroke="none"/>')

    ma = map_arrays(graph)
    for e in range(ma.n_edges):
        k = int(ma.kind[e])
        if k == KIND_DOOR:
            stroke, extra = DOOR_STROKE, ' stroke-width="3"'
        elif k == KIND_TRANSPARENT:
            stroke, extra = GLASS_STROKE, ' stroke-width="3" stroke-dasharray="4 3"'
        else:
            stroke, extra = WALL_STROKE, ' stroke-width="2"'
        out.append(
            f'<line x1="{sx(ma.ax[e]):.2f}" y1="{sy(ma.ay[e]):.2f}" '
            f'x2="{sx(ma.bx[e]):.2f}" y2="{sy(ma.by[e]):.2f}" stroke="{stroke}"{extra}/>'
        )

    for traj in trajectories:
        tp = np.asarray(traj["points"], dtype=float).reshape(-1, 2)
        if len(tp) == 0:
            continue
        errors = traj.get("errors")
        if errors is not None and len(errors) == len(tp):
            emax = float(np.max(errors)) if len(errors) else 0.0
            for i in range(len(tp) - 1):
                color = _error_color(float(errors[i]), emax)
                out.append(
                    f'<line x1="{sx(tp[i, 0]):.2f}" y1="{sy(tp[i, 1]):.2f}" '
                    f'x2="{sx(tp[i + 1, 0]):.2f}" y2="{sy(tp[i + 1, 1]):.2f}" '
                    f'stroke="{color}" stroke-width="2"/>'
                )
        else:
            color = traj.get("color", "#2ca02c")
            points = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in tp)
            out.append(
                f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
