import dataclasses
import inspect
import math

import numpy as np
import pytest

from arealoc.errors import DivergenceError
from arealoc.geometry import Pose2D, cast_batch, map_arrays, rot2
from arealoc.scan import ClutterFreePointSet
from arealoc.simulate import simulate_scan
from arealoc.track import (
    IcpParams,
    TrackerState,
    corridor_downsample,
    corridorness,
    downsample_rate,
    icp_register,
    orientation_bins,
    solve_registration_step,
    track_sequence,
)

import simfix


def _ring_pcf(radius, n=120):
    ang = (np.arange(n) + 0.5) * 2 * math.pi / n
    pts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    return ClutterFreePointSet(points=pts, column_of=np.arange(n, dtype=np.int32))


class TestCorridorness:
    def test_half_and_half_is_half(self):
        orients = np.array([0.0] * 300 + [math.pi / 2] * 300)
        cor, hist = corridorness(orients)
        assert cor == pytest.approx(0.5, abs=1e-12)
        assert hist.total == 600

    def test_single_wall_is_one(self):
        cor, hist = corridorness(np.full(250, 0.3))
        assert cor == pytest.approx(1.0, abs=1e-12)
        assert hist.bins[hist.max_bin] == 250

    def test_six_three_one(self):
        orients = np.array([0.01] * 6 + [math.pi / 3] * 3 + [math.pi / 2] * 1)
        cor, _ = corridorness(orients)
        assert cor == pytest.approx(0.6, abs=1e-12)

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            corridorness([])

    def test_max_bin_ties_go_low(self):
        orients = np.array([0.01] * 5 + [1.0] * 5)
        _, hist = corridorness(orients)
        assert hist.max_bin == orientation_bins([0.01])[0]


class TestDownsampleRate:
    def test_piecewise_values(self):
        assert downsample_rate(0.5) == pytest.approx(1.0, abs=1e-12)
        assert downsample_rate(1.0) == pytest.approx(6.0, abs=1e-12)
        assert downsample_rate(0.7) == pytest.approx(3.0, abs=1e-9)
        assert downsample_rate(0.2) == 1.0

    def test_unity_below_half(self):
        for cor in np.linspace(0.01, 0.5, 23):
            assert downsample_rate(cor) == 1.0


class TestCorridorDownsample:
    def test_rate_one_keeps_all(self):
        bins = np.array([0] * 30 + [18] * 30)
        keep = corridor_downsample(bins, 0, 1.0)
        assert keep.all()

    def test_sixty_to_ten(self):
        bins = np.zeros(60, dtype=int)
        keep = corridor_downsample(bins, 0, 6.0)
        assert keep.sum() == 10

    def test_nine_to_three_others_kept(self):
        bins = np.array([0] * 9 + [5] * 4)
        keep = corridor_downsample(bins, 0, downsample_rate(0.7))
        assert keep[:9].sum() == 3
        assert keep[9:].all()

    def test_never_removes_non_dominant(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            bins = rng.integers(0, 36, size=rng.integers(1, 400))
            counts = np.bincount(bins, minlength=36)
            mb = int(np.argmax(counts))
            rate = rng.uniform(1.0, 6.0)
            keep = corridor_downsample(bins, mb, rate)
            assert keep[bins != mb].all()
            dominant_kept = keep[bins == mb].sum()
            assert dominant_kept == math.ceil(counts[mb] / rate)
            assert keep.sum() >= len(bins) - counts[mb] * (1 - 1 / rate) - 1


class TestSolver:
    def test_residual_never_increases_random_cases(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            n = rng.integers(3, 40)
            q = rng.normal(0, 5, size=(n, 2))
            feet = q + rng.normal(0, 0.5, size=(n, 2))
            w = rng.uniform(0, 1, size=n)
            origin = rng.normal(0, 5, size=2)
            _delta, pre, post = solve_registration_step(q, feet, w, origin)
            assert post <= pre + 1e-9

    def test_proper_rotation_for_random_angles(self):
        rng = np.random.default_rng(23)
        for theta in rng.uniform(-10, 10, size=1000):
            r = rot2(theta)
            np.testing.assert_allclose(r.T @ r, np.eye(2), atol=1e-12)
            assert abs(np.linalg.det(r) - 1.0) < 1e-12

    def test_recovers_pure_translation(self):
        # every foot displaced by the same offset: one step recovers it
        rng = np.random.default_rng(8)
        q = rng.normal(0, 3, size=(50, 2))
        offset = np.array([0.3, -0.2])
        delta, _pre, post = solve_registration_step(
            q, q + offset, np.ones(50), (0.0, 0.0))
        np.testing.assert_allclose(delta[:2], offset, atol=1e-9)
        assert abs(delta[2]) < 1e-9
        assert post < 1e-18


class TestIcpRegister:
    def test_fixed_point_converges_first_iteration(self, lshape_graph):
        scene = simfix.scene_lshape(density=0.0)
        truth = Pose2D(4.0, 4.0, 0.5)
        scan, _ = simulate_scan(scene, truth, simfix.clean_model(rings=16, columns=240))
        pcf = simfix.pcf_from(scan)
        state = TrackerState(pose=truth, area=101)
        out = icp_register(lshape_graph, state, pcf, IcpParams())
        assert out.converged
        assert math.hypot(out.pose.x - truth.x, out.pose.y - truth.y) < 1e-6
        assert out.last_residual < 1e-12

    def test_converges_from_offset_in_cluttered_room(self, lshape_graph):
        scene = simfix.scene_lshape(density=0.1, seed=3)
        truth = Pose2D(4.0, 4.0, 0.3)
        scan, _ = simulate_scan(scene, truth, simfix.model(rings=32, columns=300))
        pcf = simfix.pcf_from(scan)
        start = Pose2D(truth.x + 0.3, truth.y + 0.2, truth.theta + math.radians(5))
        out = icp_register(lshape_graph, TrackerState(pose=start, area=101), pcf)
        assert out.converged
        assert math.hypot(out.pose.x - truth.x, out.pose.y - truth.y) < 0.1
        err = abs((out.pose.theta - truth.theta + math.pi) % (2 * math.pi) - math.pi)
        assert math.degrees(err) < 1.0

    def test_all_zero_weights_diverge(self, square_graph):
        # a ring of points far beyond every wall matches nothing
        pcf = _ring_pcf(20.0)
        state = TrackerState(pose=Pose2D(5, 5, 0), area=101)
        with pytest.raises(DivergenceError):
            icp_register(square_graph, state, pcf, IcpParams())

    def test_corridor_longitudinal_error_smaller_with_downsampling(self, corridor_graph):
        scene = simfix.scene_corridor(density=0.0)
        truth = Pose2D(18.0, 1.5, 0.0)
        scan, _ = simulate_scan(scene, truth, simfix.model(sigma=0.02, reflection=0.0))
        pcf = simfix.pcf_from(scan)
        start = Pose2D(truth.x + 0.4, truth.y, truth.theta)  # longitudinal offset
        errs = {}
        for flag in (True, False):
            params = IcpParams(use_corridorness=flag, max_iterations=2)
            out = icp_register(corridor_graph, TrackerState(pose=start, area=101), pcf, params)
            errs[flag] = abs(out.pose.x - truth.x)
        assert errs[True] < errs[False]

    def test_histogram_invariant_under_epsilon_pose_change(self, multi_room_graph):
        scene = simfix.scene_multi_room(seed=5, density=0.1)
        pose_a = Pose2D(7.0, 7.5, 0.7)
        pose_b = Pose2D(7.0 + 1e-15, 7.5 - 1e-15, 0.7)
        scan, _ = simulate_scan(scene, pose_a, simfix.small_model())
        pcf = simfix.pcf_from(scan)
        ma = map_arrays(multi_room_graph)
        hists = []
        for pose in (pose_a, pose_b):
            batch = cast_batch(ma, 103, pose, pcf.points)
            orients = ma.orientation[batch.seg[batch.hit_mask]]
            _, hist = corridorness(orients)
            hists.append(hist.bins)
        np.testing.assert_array_equal(hists[0], hists[1])

    def test_api_admits_no_odometry_or_imu(self):
        for fn in (icp_register, track_sequence):
            params = inspect.signature(fn).parameters
            for name in params:
                assert "odom" not in name.lower()
                assert "imu" not in name.lower()
        field_names = [f.name for f in dataclasses.fields(IcpParams)]
        assert all("odom" not in n and "imu" not in n for n in field_names)


class TestTrackSequence:
    def test_static_frames_identical_poses(self, square_graph):
        scene = simfix.scene_square(density=0.0)
        truth = Pose2D(5.0, 5.0, 0.25)
        scan, _ = simulate_scan(scene, truth, simfix.clean_model(rings=16, columns=240))
        frames = []
        for i in range(10):
            frames.append(dataclasses.replace(scan, timestamp=i * 0.1))
        records = track_sequence(square_graph, truth, frames)
        assert len(records) == 10
        for r in records:
            assert r.pose == records[0].pose
            assert not r.diverged

    def test_short_loop_tracks_through_door(self, two_room_graph):
        scene = simfix.scene_two_room(density=0.05, seed=9)
        model = simfix.model(rings=32, columns=300)
        frames, traj = simfix.simulate_sequence(
            scene, model, [(5.0, 5.0), (12.0, 5.0)], speed=1.5, frame_rate=10.0)
        records = track_sequence(two_room_graph, traj[0][1], frames)
        errs = [
            math.hypot(r.pose.x - p.x, r.pose.y - p.y)
            for r, (_, p) in zip(records, traj)
        ]
        assert max(errs) < 0.3
        assert not any(r.diverged for r in records)

    def test_weight_ablation_hurts_on_heavy_clutter(self, lshape_graph):
        path = [(2.0, 4.0), (5.5, 4.0)]
        scene = simfix.scene_lshape(density=0.3, seed=31, keepout=path)
        model = simfix.model(rings=32, columns=300)
        frames, traj = simfix.simulate_sequence(scene, model, path, speed=1.0, frame_rate=10.0)
        results = {}
        for use_weight in (True, False):
            from arealoc.track import TrackParams

            params = TrackParams(icp=IcpParams(use_weight=use_weight), relocalize=False)
            try:
                records = track_sequence(lshape_graph, traj[0][1], frames, params)
                errs = [
                    math.hypot(r.pose.x - p.x, r.pose.y - p.y)
                    for r, (_, p) in zip(records, traj)
                ]
                results[use_weight] = float(np.sqrt(np.mean(np.square(errs))))
            except DivergenceError:
                results[use_weight] = math.inf
        assert results[True] < results[False] or math.isinf(results[False])
