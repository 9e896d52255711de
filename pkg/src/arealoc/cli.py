"""Command-line surface: validate-map, simulate, global-localize, track,
experiment, evaluate, render.

Exit codes: 0 success, 1 usage/config error, 2 algorithmic failure
(divergence, out-of-map, insufficient data), 3 I/O error.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    ArealocError,
    ConfigError,
    DivergenceError,
    InsufficientDataError,
    LevelNotFoundError,
    MapFormatError,
    MapReferenceError,
    MapValidationError,
    PlacementError,
    PoseOutOfMapError,
    PriorOutOfMapError,
    ProjectionRangeError,
    TrajectoryError,
)
from .evaluate import compute_ate, report_from_records
from .geometry import Pose2D
from .localize import GridParams, global_localize
from .osmag import load_floor, parse_osmag, validate_file
from .render import render_svg
from .scan import clutter_free_subsample, height_filter, read_scan, write_scan
from .simulate import (
    SensorModel,
    build_scene,
    generate_trajectory,
    load_scene_config,
    simulate_scan,
    wifi_prior,
    write_scene_template,
)
from .track import (
    IcpParams,
    TrackParams,
    read_trajectory,
    track_sequence,
    write_trajectory,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ALGO = 2
EXIT_IO = 3

_CONFIG_ERRORS = (ConfigError, MapValidationError, LevelNotFoundError,
                  ProjectionRangeError, ValueError)
_ALGO_ERRORS = (DivergenceError, PoseOutOfMapError, PriorOutOfMapError,
                InsufficientDataError, PlacementError, TrajectoryError)
_IO_ERRORS = (MapFormatError, MapReferenceError, OSError)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for
    # algorithmic failures, so remap to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_graph(path, level):
    with open(path, "rb") as fh:
        raw = parse_osmag(fh.read())
    if level is None:
        levels = sorted(
            {int(w.tags.get("level", "0")) for w in raw.ways.values()
             if w.tags.get("osmAG:type") == "area"}
        )
        level = levels[0] if levels else 0
    return load_floor(raw, level)


def _parse_xy(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_pose(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"expected 'x,y,theta_rad', got {text!r}")
    return Pose2D(float(parts[0]), float(parts[1]), float(parts[2]))


def _icp_params(args):
    return IcpParams(
        max_iterations=args.max_iterations,
        trans_eps=args.trans_eps,
        rot_eps=args.rot_eps,
        use_weight=not args.no_weight,
        use_corridorness=not args.no_corridorness,
        passage_mode={"adaptive": "adaptive", "open": "all_open", "closed": "all_closed"}[args.passages],
    )


def _add_icp_flags(p):
    p.add_argument("--no-weight", action="store_true", help="fix every match weight to 1")
    p.add_argument("--no-corridorness", action="store_true",
                   help="disable dominant-orientation downsampling")
    p.add_argument("--passages", choices=("adaptive", "open", "closed"), default="adaptive",
                   help="door handling during registration")
    p.add_argument("--max-iterations", type=int, default=30)
    p.add_argument("--trans-eps", type=float, default=1e-4)
    p.add_argument("--rot-eps", type=float, default=1e-4)


def _add_grid_flags(p):
    p.add_argument("--radius", type=float, default=6.0, help="guess sampling radius [m]")
    p.add_argument("--step", type=float, default=0.5, help="guess lattice step [m]")
    p.add_argument("--angular-step-deg", type=float, default=2.0)
    p.add_argument("--score-fn", choices=("s1", "s2", "s3", "s4"), default="s1")
    p.add_argument("--top-k", type=int, default=10)


def _grid_params(args):
    return GridParams(
        radius=args.radius,
        step=args.step,
        angular_step=math.radians(args.angular_step_deg),
        score_fn=args.score_fn,
        top_k=args.top_k,
    )


def _pipeline(scan, z_low, z_high):
    return clutter_free_subsample(height_filter(scan, z_low, z_high))


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate_map(args):
    graph, violations = validate_file(args.map, level=args.level)
    print(f"{args.map}: {len(graph.areas)} areas, {len(graph.passages)} passages "
          f"on level {graph.level_loaded}")
    if violations:
        for v in violations:
            print(f"VIOLATION: {v}")
        return EXIT_CONFIG
    print("map is valid")
    return EXIT_OK


def _sim_sequence(config, graph, seed=None):
    scene_seed = config.seed if seed is None else seed
    cfg = config
    scene = build_scene(cfg, graph)
    scene.seed = scene_seed
    traj = generate_trajectory(scene, cfg.waypoints, cfg.speed, cfg.frame_rate)
    frames = []
    for i, (ts, pose) in enumerate(traj):
        scan, _labels = simulate_scan(scene, pose, cfg.model, frame_index=i)
        scan.timestamp = ts
        frames.append(scan)
    return scene, traj, frames


def cmd_simulate(args):
    if args.init_template:
        write_scene_template(args.init_template)
        print(f"wrote scene template to {args.init_template}")
        return EXIT_OK
    if not args.scene:
        raise ConfigError("--scene is required (or use --init-template)")
    config = load_scene_config(args.scene)
    graph = _load_graph(config.map_path if os.path.isabs(config.map_path)
                        else os.path.join(os.path.dirname(args.scene), config.map_path),
                        config.level)
    _scene, traj, frames = _sim_sequence(config, graph, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for i, scan in enumerate(frames):
        write_scan(scan, os.path.join(args.out, f"scan_{i:06d}.txt"))
    with open(os.path.join(args.out, "gt.txt"), "w") as fh:
        for ts, pose in traj:
            fh.write(f"{ts!r} {pose.x!r} {pose.y!r} {pose.theta!r} 1\n")
    print(f"wrote {len(frames)} scans + gt.txt to {args.out}")
    return EXIT_OK


def _resolve_prior(args, gt=None, frame=0):
    if args.prior is not None:
        return np.array(_parse_xy(args.prior))
    if gt is None:
        raise ConfigError("need --prior x,y or --gt with ground truth")
    ts, xs, ys, th, _ = gt
    if frame >= len(ts):
        raise ConfigError(f"frame {frame} beyond ground truth length {len(ts)}")
    true_pose = Pose2D(xs[frame], ys[frame], th[frame])
    return wifi_prior(true_pose, args.prior_error, args.seed)


def cmd_global_localize(args):
    graph = _load_graph(args.map, args.level)
    scan = read_scan(args.scan)
    pcf = _pipeline(scan, args.z_low, args.z_high)
    gt = read_trajectory(args.gt) if args.gt else None
    prior = _resolve_prior(args, gt, args.frame)
    pose, report = global_localize(graph, prior, pcf, _grid_params(args))
    print(f"pose: {pose.x!r} {pose.y!r} {pose.theta!r}")
    print(f"guesses evaluated: {report.n_guesses} (score fn {report.score_fn})")
    print(report.table())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(f"{pose.x!r} {pose.y!r} {pose.theta!r}\n")
    return EXIT_OK


def _track_frames(args):
    """Resolve the scan source into (graph, frames, gt_arrays_or_None)."""
    sources = [s for s in (args.scan_dir, args.scene) if s]
    if len(sources) != 1:
        raise ConfigError("exactly one of --scan-dir or --scene is required")
    if args.scene:
        config = load_scene_config(args.scene)
        map_path = config.map_path if os.path.isabs(config.map_path) \
            else os.path.join(os.path.dirname(args.scene), config.map_path)
        graph = _load_graph(map_path, config.level)
        _scene, traj, frames = _sim_sequence(config, graph, seed=args.seed)
        gt = (
            np.array([ts for ts, _ in traj]),
            np.array([p.x for _, p in traj]),
            np.array([p.y for _, p in traj]),
            np.array([p.theta for _, p in traj]),
            np.ones(len(traj), dtype=int),
        )
        return graph, frames, gt
    if not args.map:
        raise ConfigError("--map is required with --scan-dir")
    graph = _load_graph(args.map, args.level)
    names = sorted(n for n in os.listdir(args.scan_dir)
                   if n.startswith("scan_") and n.endswith(".txt"))
    if not names:
        raise ConfigError(f"no scan_*.txt files in {args.scan_dir}")
    frames = [read_scan(os.path.join(args.scan_dir, n)) for n in names]
    gt = read_trajectory(args.gt) if args.gt else None
    return graph, frames, gt


def _initial_pose(args, graph, frames, gt):
    if args.init is not None:
        return _parse_pose(args.init)
    prior = _resolve_prior(args, gt, 0)
    pcf = _pipeline(frames[0], args.z_low, args.z_high)
    pose, _report = global_localize(graph, prior, pcf, _grid_params(args))
    return pose


def cmd_track(args):
    graph, frames, gt = _track_frames(args)
    initial = _initial_pose(args, graph, frames, gt)
    params = TrackParams(icp=_icp_params(args), z_low=args.z_low, z_high=args.z_high,
                         fallback_grid=_grid_params(args))
    records = track_sequence(graph, initial, frames, params)
    if args.out:
        write_trajectory(records, args.out, fmt=args.format)
        print(f"wrote {len(records)} poses to {args.out}")
    diverged = sum(1 for r in records if r.diverged)
    if gt is not None:
        rep = report_from_records(records, gt[0], np.column_stack([gt[1], gt[2]]))
        print(rep.summary())
    else:
        runtimes = np.array([r.runtime_ms for r in records])
        print(f"frames={len(records)} diverged={diverged} "
              f"runtime={np.median(runtimes):.2f} ms/frame (median)")
    return EXIT_OK


_ABLATION_VARIANTS = {
    "weight": [("no_weight", {"use_weight": False})],
    "corridorness": [("no_corridorness", {"use_corridorness": False})],
    "passages": [("all_open", {"passage_mode": "all_open"}),
                 ("all_closed", {"passage_mode": "all_closed"})],
}


def cmd_experiment(args):
    config = load_scene_config(args.scene)
    map_path = config.map_path if os.path.isabs(config.map_path) \
        else os.path.join(os.path.dirname(args.scene), config.map_path)
    graph = _load_graph(map_path, config.level)
    _scene, traj, frames = _sim_sequence(config, graph, seed=args.seed)
    gt_ts = np.array([ts for ts, _ in traj])
    gt_xy = np.array([[p.x, p.y] for _, p in traj])

    variants = [("default", {})]
    for name in args.ablate:
        if name not in _ABLATION_VARIANTS:
            raise ConfigError(f"unknown ablation {name!r}; "
                              f"choose from {sorted(_ABLATION_VARIANTS)}")
        variants.extend(_ABLATION_VARIANTS[name])

    true0 = traj[0][1]
    initial = Pose2D(true0.x, true0.y, true0.theta) if args.init is None \
        else _parse_pose(args.init)

    os.makedirs(args.out, exist_ok=True)
    rows = []
    for name, overrides in variants:
        icp = IcpParams(max_iterations=args.max_iterations, trans_eps=args.trans_eps,
                        rot_eps=args.rot_eps, **{
                            "use_weight": overrides.get("use_weight", not args.no_weight),
                            "use_corridorness": overrides.get("use_corridorness",
                                                              not args.no_corridorness),
                            "passage_mode": overrides.get("passage_mode", "adaptive"),
                        })
        params = TrackParams(icp=icp, z_low=args.z_low, z_high=args.z_high,
                             fallback_grid=_grid_params(args))
        records = track_sequence(graph, initial, frames, params)
        write_trajectory(records, os.path.join(args.out, f"traj_{name}.txt"))
        rep = report_from_records(records, gt_ts, gt_xy)
        failed = rep.diverged_frames > 0 or rep.ate_rmse > 1.0
        rows.append((name, rep, failed))

    table = ["variant frames diverged ate_rmse_m ate_max_m ms_per_frame status"]
    for name, rep, failed in rows:
        rmse = "/" if failed else f"{rep.ate_rmse:.4f}"
        amax = "/" if failed else f"{rep.ate_max:.4f}"
        table.append(
            f"{name} {rep.n_frames} {rep.diverged_frames} {rmse} {amax} "
            f"{rep.runtime_ms_median:.2f} {'FAIL' if failed else 'ok'}"
        )
    text = "\n".join(table)
    print(text)
    with open(os.path.join(args.out, "experiment.txt"), "w") as fh:
        fh.write(text + "\n")
    return EXIT_OK


def cmd_evaluate(args):
    est = read_trajectory(args.est)
    gt = read_trajectory(args.gt)
    rep = compute_ate(est[0], np.column_stack([est[1], est[2]]),
                      gt[0], np.column_stack([gt[1], gt[2]]), flags=est[4])
    print(rep.summary())
    return EXIT_OK


def cmd_render(args):
    graph = _load_graph(args.map, args.level)
    overlays = []
    gt = read_trajectory(args.gt) if args.gt else None
    for path in args.trajectory or []:
        ts, xs, ys, _th, _fl = read_trajectory(path)
        if len(ts) == 0:
            print(f"warning: empty trajectory file {path}", file=sys.stderr)
            continue
        overlay = {"points": np.column_stack([xs, ys])}
        if gt is not None:
            errors = []
            for i, t in enumerate(ts):
                j = int(np.argmin(np.abs(gt[0] - t)))
                errors.append(math.hypot(xs[i] - gt[1][j], ys[i] - gt[2][j]))
            overlay["errors"] = np.array(errors)
        overlays.append(overlay)
    if gt is not None:
        overlays.append({"points": np.column_stack([gt[1], gt[2]]), "color": "#888888"})
    svg = render_svg(graph, overlays)
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="arealoc",
                     description="Indoor LiDAR localization in polygon area maps")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-map", help="check map invariants")
    p.add_argument("map")
    p.add_argument("--level", type=int, default=None)
    p.set_defaults(func=cmd_validate_map)

    p = sub.add_parser("simulate", help="generate scans + ground truth from a scene config")
    p.add_argument("--scene", help="scene config file")
    p.add_argument("--out", default="sim_out")
    p.add_argument("--seed", type=int, default=None, help="override the scene seed")
    p.add_argument("--init-template", metavar="PATH",
                   help="write a commented scene config template and exit")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("global-localize", help="one-shot localization of a single scan")
    p.add_argument("--map", required=True)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--scan", required=True)
    p.add_argument("--prior", help="prior position 'x,y'")
    p.add_argument("--gt", help="ground truth trajectory (prior = truth + noise)")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--prior-error", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z-low", type=float, default=-0.3)
    p.add_argument("--z-high", type=float, default=1.5)
    p.add_argument("--out")
    _add_grid_flags(p)
    p.set_defaults(func=cmd_global_localize)

    p = sub.add_parser("track", help="track a scan sequence")
    p.add_argument("--map")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--scan-dir")
    p.add_argument("--scene", help="simulate this scene instead of reading files")
    p.add_argument("--gt")
    p.add_argument("--init", help="initial pose 'x,y,theta'")
    p.add_argument("--prior", help="prior 'x,y' for global initialization")
    p.add_argument("--prior-error", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z-low", type=float, default=-0.3)
    p.add_argument("--z-high", type=float, default=1.5)
    p.add_argument("--out")
    p.add_argument("--format", choices=("plain", "quat"), default="plain")
    _add_icp_flags(p)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("experiment", help="run tracking ablations on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", default="experiment_out")
    p.add_argument("--ablate", nargs="*", default=["weight", "corridorness", "passages"])
    p.add_argument("--init", help="initial pose 'x,y,theta' (default: ground truth start)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--z-low", type=float, default=-0.3)
    p.add_argument("--z-high", type=float, default=1.5)
    _add_icp_flags(p)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("evaluate", help="absolute trajectory error of est vs ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render the map (and trajectories) to SVG")
    p.add_argument("--map", required=True)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--trajectory", action="append")
    p.add_argument("--gt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ALGO_ERRORS as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ALGO
    except _CONFIG_ERRORS as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _IO_ERRORS as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArealocError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ALGO


if __name__ == "__main__":
    sys.exit(main())
