"""End-to-end acceptance gate for the localization engine.

Each test states its tolerance inline; the Monte Carlo tests are fully
deterministic (seeded scenes, seeded trials), so the asserted recalls are
exact reruns rather than statistical samples.
"""

import math
import time

import numpy as np
import pytest

from crossloc.errors import FormatError
from crossloc.geometry import (
    CameraIntrinsics,
    EPS_RAY,
    Pose3DoF,
    inverse_project,
    lift_to_ground,
    meters_per_pixel,
    perspective_project_batch,
)
from crossloc.harness.evaluate import NoiseModel, evaluate, evaluate_sweep, tables_to_csv
from crossloc.harness.gradcheck import run_gradcheck
from crossloc.harness.scene import SceneSpec, make_camera
from crossloc.keypoints import FusedConfidence, detect_keypoints, fuse_confidence
from crossloc.optimizer import ResidualSystem, lm_step, reprojection_loss, triplet_loss
from crossloc.pyramid import FeaturePyramid, PyramidLevel, read_pyramid, write_pyramid

from test_keypoints import detect_oracle, fuse_oracle, make_pyramid
from test_optimizer import cost_system, random_system


SPECS = [SceneSpec(seed=s) for s in range(20)]
NOISE = NoiseModel(lateral=5.0, longitudinal=5.0, yaw_deg=15.0)


@pytest.fixture(scope="module")
def front_table():
    return evaluate(SPECS, NOISE, trials_per_scene=10)


class TestCriterion1Jacobians:
    def test_derivative_chain(self):
        start = time.monotonic()
        report = run_gradcheck(seeds=500, seed=0)
        elapsed = time.monotonic() - start
        assert report.configurations == 500
        assert report.max_rel_error_projection <= 1e-4
        assert report.max_rel_error_chain <= 1e-4
        assert elapsed < 10.0


class TestCriterion2RoundTrip:
    def test_projection_round_trip(self):
        rng = np.random.default_rng(0)
        cam = make_camera("front", 0.0, position=(0.5, 0.0))
        intr, extr = cam.intrinsics, cam.extrinsics
        rot = extr.rot_cam_to_vehicle

        n = 100_000
        pix = np.column_stack(
            [rng.uniform(0, intr.width - 1, n), rng.uniform(0, intr.height - 1, n)]
        )
        d = np.column_stack(
            [(pix[:, 0] - intr.cx) / intr.fx, (pix[:, 1] - intr.cy) / intr.fy, np.ones(n)]
        )
        rays = d @ rot.T
        below = rays[:, 2] > EPS_RAY
        pix, rays = pix[below], rays[below]
        assert len(pix) >= 50_000
        s = extr.cam_height / rays[:, 2]
        pts = s[:, None] * rays + extr.trans_cam_to_vehicle
        pts[:, 2] = 0.0
        back, visible = perspective_project_batch(pts, intr, extr)
        assert visible.all()
        assert np.abs(back - pix).max() <= 1e-6

        # spot check the scalar path end to end
        for i in range(0, len(pix), len(pix) // 200):
            ray = inverse_project(intr, rot, pix[i])
            gp = lift_to_ground(ray, extr)
            one, _ = perspective_project_batch(gp.as_array()[None, :], intr, extr)
            assert np.abs(one[0] - pix[i]).max() <= 1e-6


class TestCriterion3GroundResolution:
    def test_dataset_scales(self):
        assert abs(meters_per_pixel(42.30, 18, 2) - 0.22) <= 0.005
        assert abs(meters_per_pixel(49.01, 18, 2) - 0.20) <= 0.005


class TestCriterion4SyntheticConvergence:
    def test_recall(self, front_table):
        start = time.monotonic()
        table = front_table
        assert table.trials == 200
        assert table.recall_lat[0] >= 0.90
        assert table.recall_lon[0] >= 0.90
        assert table.recall_yaw[0] >= 0.85
        assert time.monotonic() - start < 300.0


class TestCriterion5MultiCameraBenefit:
    def test_four_camera_trend(self, front_table):
        specs = [SceneSpec(seed=s, rig="4cam") for s in range(20)]
        table4 = evaluate(specs, NOISE, trials_per_scene=10)
        assert table4.yaw_median <= front_table.yaw_median
        assert table4.recall_yaw[1] > front_table.recall_yaw[1]


class TestCriterion6RobustnessSweep:
    def test_sweep(self, tmp_path):
        noises = [NoiseModel(x, x, 15.0) for x in (5.0, 15.0, 30.0)]
        tables = evaluate_sweep(SPECS[:10], noises, trials_per_scene=5)
        recalls = [t.recall_lat[0] for t in tables]
        assert all(b <= a + 1e-12 for a, b in zip(recalls, recalls[1:]))
        csv = tables_to_csv(tables)
        out = tmp_path / "sweep.csv"
        out.write_text(csv)
        lines = out.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0].startswith("noise_lat,noise_lon,noise_yaw_deg")


class TestCriterion7KeypointEquivalence:
    def test_brute_force(self):
        rng = np.random.default_rng(1)
        intr = CameraIntrinsics(fx=100, fy=100, cx=31.5, cy=23.5, width=64, height=48)
        for _ in range(100):
            grid = rng.uniform(0, 1, (24, 32))
            pixels, scores = detect_keypoints(FusedConfidence(grid=grid), intr, 256, 8)
            opix, oscores = detect_oracle(grid, intr, 256, 8)
            assert np.array_equal(pixels, opix)
            assert np.array_equal(scores, oscores)


class TestCriterion8ConfidenceFusion:
    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            v_maps = [rng.uniform(0, 1, (s, s)) for s in (8, 16, 32)]
            if trial % 4 == 0:
                v_maps[1] = np.full((16, 16), 0.3)  # constant-map 0.5 rule
            pyr = make_pyramid(v_maps, seed=trial)
            fused = fuse_confidence(pyr)
            assert np.abs(fused.grid - fuse_oracle(pyr)).max() <= 1e-9


class TestCriterion9Losses:
    def test_triplet_at_ratio_one(self):
        assert triplet_loss(cost_system(2.0), cost_system(2.0)) == pytest.approx(
            math.log(2.0), abs=1e-12
        )

    def test_reprojection(self):
        from crossloc.geometry import Anchor, SatelliteFrame

        sat = SatelliteFrame(center_u=128, center_v=128, gamma=0.25, width=256, height=256)
        anchor = Anchor(heading=0.4)
        rng = np.random.default_rng(3)
        pts = np.column_stack([rng.uniform(-10, 10, (30, 2)), np.zeros(30)])
        gt = Pose3DoF()
        assert reprojection_loss(gt, gt, pts, sat, anchor) == 0.0
        d = 2.3
        loss = reprojection_loss(Pose3DoF(lateral=d), gt, pts, sat, anchor)
        assert loss == pytest.approx(len(pts) * (d / sat.gamma) ** 2, abs=1e-9)


class TestCriterion10LMUnit:
    def test_scalar_system(self):
        system = ResidualSystem(
            residuals=np.array([[2.0]]),
            weights=np.array([1.0]),
            jacobians=np.array([[[1.0]]]),
            active_count=1,
            cost=4.0,
            weight_total=1.0,
        )
        assert lm_step(system, 0.0)[0] == -2.0

    def test_lambda_monotone(self):
        for seed in range(5):
            system = random_system(seed=seed)
            norms = [np.linalg.norm(lm_step(system, lam)) for lam in (1e2, 1e4, 1e6)]
            assert norms[0] > norms[1] > norms[2]

    def test_dense_solve(self):
        for seed in range(10):
            system = random_system(seed=seed)
            h = np.zeros((3, 3))
            g = np.zeros(3)
            for i in range(len(system.weights)):
                j = system.jacobians[i]
                h += system.weights[i] * j.T @ j
                g += system.weights[i] * j.T @ system.residuals[i]
            expected = -np.linalg.solve(h + 0.01 * np.diag(np.diag(h)), g)
            assert np.abs(lm_step(system, 0.01) - expected).max() <= 1e-10


class TestCriterion11PyramidIO:
    def test_round_trip_and_corruption(self, tmp_path):
        rng = np.random.default_rng(4)
        levels = []
        for s in (10, 20, 40):
            levels.append(
                PyramidLevel(
                    features=rng.standard_normal((s, s, 6)),
                    view_consistent=rng.uniform(0, 1, (s, s)),
                    on_ground=rng.uniform(0, 1, (s, s)),
                )
            )
        pyr = FeaturePyramid(levels=levels)
        p1, p2 = tmp_path / "a.pacl", tmp_path / "b.pacl"
        write_pyramid(pyr, p1)
        write_pyramid(read_pyramid(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

        data = bytearray(p1.read_bytes())
        bad_magic = tmp_path / "m.pacl"
        corrupted = bytearray(data)
        corrupted[0:4] = b"XXXX"
        bad_magic.write_bytes(bytes(corrupted))
        with pytest.raises(FormatError) as e:
            read_pyramid(bad_magic)
        assert e.value.offset == 0

        bad_version = tmp_path / "v.pacl"
        corrupted = bytearray(data)
        corrupted[4:8] = (7).to_bytes(4, "little")
        bad_version.write_bytes(bytes(corrupted))
        with pytest.raises(FormatError) as e:
            read_pyramid(bad_version)
        assert e.value.offset == 4


class TestCriterion12Determinism:
    def test_identical_csv_reports(self):
        specs = [SceneSpec(seed=s) for s in range(3)]
        a = tables_to_csv([evaluate(specs, NOISE, trials_per_scene=2)])
        b = tables_to_csv([evaluate(specs, NOISE, trials_per_scene=2)])
        assert a == b
        assert a.encode() == b.encode()
