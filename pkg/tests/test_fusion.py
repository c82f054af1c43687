"""Multi-camera fusion of keypoint weights and features."""

import numpy as np
import pytest

from crossloc.errors import NotVisible
from crossloc.fusion import fuse_keypoints_batch, fuse_point, project_to_camera
from crossloc.geometry import inverse_project, lift_to_ground
from crossloc.harness.scene import make_camera
from crossloc.pyramid import FeaturePyramid, PyramidLevel, bilinear_lookup_batch
from crossloc.geometry import perspective_project_batch


def constant_pyramid(cam, v_value, feature_value, channels=3):
    h = cam.intrinsics.height // 2
    w = cam.intrinsics.width // 2
    return FeaturePyramid(
        levels=[
            PyramidLevel(
                features=np.full((h, w, channels), feature_value, dtype=float),
                view_consistent=np.full((h, w), v_value, dtype=float),
                on_ground=np.ones((h, w)),
            )
        ]
    )


def random_pyramid(cam, seed, channels=3):
    rng = np.random.default_rng(seed)
    h = cam.intrinsics.height // 2
    w = cam.intrinsics.width // 2
    return FeaturePyramid(
        levels=[
            PyramidLevel(
                features=rng.standard_normal((h, w, channels)),
                view_consistent=rng.uniform(0, 1, (h, w)),
                on_ground=rng.uniform(0, 1, (h, w)),
            )
        ]
    )


FRONT = make_camera("a", 0.0)
FRONT_B = make_camera("b", 0.0)
POINT_AHEAD = np.array([6.0, 0.5, 0.0])


class TestProjectToCamera:
    def test_lift_reproject_roundtrip(self):
        pix = np.array([150.0, 180.0])
        ray = inverse_project(FRONT.intrinsics, FRONT.extrinsics.rot_cam_to_vehicle, pix)
        gp = lift_to_ground(ray, FRONT.extrinsics)
        back, visible = project_to_camera(gp.as_array(), FRONT)
        assert visible
        assert np.abs(back - pix).max() <= 1e-6

    def test_point_behind_invisible(self):
        _, visible = project_to_camera(np.array([-5.0, 0.0, 0.0]), FRONT)
        assert not visible


class TestFusePoint:
    def test_single_camera_identity(self):
        pyr = random_pyramid(FRONT, seed=0)
        fused = fuse_point(POINT_AHEAD, [pyr], [FRONT], level=0)
        pix, _ = perspective_project_batch(POINT_AHEAD[None, :], FRONT.intrinsics, FRONT.extrinsics)
        lvl = pyr.levels[0]
        coords = pix * np.array(
            [lvl.view_consistent.shape[1] / FRONT.intrinsics.width,
             lvl.view_consistent.shape[0] / FRONT.intrinsics.height]
        )
        w, _ = bilinear_lookup_batch(lvl.view_consistent * lvl.on_ground, coords)
        f, _ = bilinear_lookup_batch(lvl.features, coords)
        assert fused.weight == pytest.approx(float(w[0]), abs=1e-12)
        assert np.allclose(fused.feature, f[0], atol=1e-12)
        assert fused.source_camera == 0

    def test_max_rule(self):
        pyrs = [constant_pyramid(FRONT, 0.3, 1.0), constant_pyramid(FRONT_B, 0.8, 2.0)]
        fused = fuse_point(POINT_AHEAD, pyrs, [FRONT, FRONT_B], level=0)
        assert fused.weight == pytest.approx(0.8)
        assert np.allclose(fused.feature, 2.0)
        assert fused.source_camera == 1

    def test_tie_breaks_to_lower_index(self):
        pyrs = [constant_pyramid(FRONT, 0.5, 1.0), constant_pyramid(FRONT_B, 0.5, 2.0)]
        fused = fuse_point(POINT_AHEAD, pyrs, [FRONT, FRONT_B], level=0)
        assert fused.weight == pytest.approx(0.5)
        assert fused.source_camera == 0
        assert np.allclose(fused.feature, 1.0)

    def test_not_visible(self):
        pyr = constant_pyramid(FRONT, 0.5, 1.0)
        with pytest.raises(NotVisible):
            fuse_point(np.array([-10.0, 0.0, 0.0]), [pyr], [FRONT], level=0)

    def test_mean_strategy(self):
        pyrs = [constant_pyramid(FRONT, 0.3, 1.0), constant_pyramid(FRONT_B, 0.8, 3.0)]
        fused = fuse_point(POINT_AHEAD, pyrs, [FRONT, FRONT_B], level=0, strategy="mean")
        assert fused.weight == pytest.approx(0.55, abs=1e-12)
        assert np.allclose(fused.feature, 2.0, atol=1e-12)
        assert fused.source_camera == -1

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            fuse_point(POINT_AHEAD, [constant_pyramid(FRONT, 0.5, 1.0)], [FRONT], 0, "median")


class TestFuseBatch:
    def points(self, n=30, seed=3):
        rng = np.random.default_rng(seed)
        return np.column_stack(
            [rng.uniform(3, 15, n), rng.uniform(-2, 2, n), np.zeros(n)]
        )

    def test_equals_bruteforce_max_scan(self):
        cams = [FRONT, make_camera("c", 15.0, position=(0.0, 0.3))]
        pyrs = [random_pyramid(c, seed=i) for i, c in enumerate(cams)]
        pts = self.points()
        w, f, src, vis = fuse_keypoints_batch(pts, pyrs, cams, level=0)
        for i, p in enumerate(pts):
            per_cam = []
            for ci, (cam, pyr) in enumerate(zip(cams, pyrs)):
                pix, visible = perspective_project_batch(p[None, :], cam.intrinsics, cam.extrinsics)
                lvl = pyr.levels[0]
                coords = pix * np.array(
                    [lvl.view_consistent.shape[1] / cam.intrinsics.width,
                     lvl.view_consistent.shape[0] / cam.intrinsics.height]
                )
                wv, inb = bilinear_lookup_batch(lvl.view_consistent * lvl.on_ground, coords)
                if visible[0] and inb[0]:
                    per_cam.append((ci, float(wv[0])))
            if not per_cam:
                assert not vis[i]
                continue
            assert vis[i]
            best = max(per_cam, key=lambda t: t[1])
            assert w[i] == pytest.approx(best[1], abs=1e-12)

    def test_permutation_invariance_distinct_weights(self):
        cams = [FRONT, FRONT_B]
        pyrs = [constant_pyramid(FRONT, 0.2, 1.0), constant_pyramid(FRONT_B, 0.9, 5.0)]
        pts = self.points(10)
        w1, f1, _, _ = fuse_keypoints_batch(pts, pyrs, cams, 0)
        w2, f2, _, _ = fuse_keypoints_batch(pts, pyrs[::-1], cams[::-1], 0)
        assert np.allclose(w1, w2, atol=1e-12)
        assert np.allclose(f1, f2, atol=1e-12)

    def test_mean_equals_arithmetic_mean(self):
        cams = [FRONT, FRONT_B]
        pyrs = [random_pyramid(c, seed=10 + i) for i, c in enumerate(cams)]
        pts = self.points(20, seed=4)
        wmax, _, _, vis = fuse_keypoints_batch(pts, pyrs, cams, 0, "max")
        wmean, fmean, src, _ = fuse_keypoints_batch(pts, pyrs, cams, 0, "mean")
        assert np.all(src == -1)
        for i, p in enumerate(pts):
            vals, feats = [], []
            for cam, pyr in zip(cams, pyrs):
                pix, visible = perspective_project_batch(p[None, :], cam.intrinsics, cam.extrinsics)
                lvl = pyr.levels[0]
                coords = pix * np.array(
                    [lvl.view_consistent.shape[1] / cam.intrinsics.width,
                     lvl.view_consistent.shape[0] / cam.intrinsics.height]
                )
                wv, inb = bilinear_lookup_batch(lvl.view_consistent * lvl.on_ground, coords)
                fv, _ = bilinear_lookup_batch(lvl.features, coords)
                if visible[0] and inb[0]:
                    vals.append(float(wv[0]))
                    feats.append(fv[0])
            if not vals:
                continue
            assert wmean[i] == pytest.approx(np.mean(vals), abs=1e-12)
            assert np.allclose(fmean[i], np.mean(feats, axis=0), atol=1e-12)
            assert wmax[i] == pytest.approx(max(vals), abs=1e-12)
