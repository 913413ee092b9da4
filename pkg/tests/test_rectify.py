"""Unit tests for rectification, disparity, depth, and dense export."""

from __future__ import annotations

import numpy as np
import pytest

from spheresfm.epipolar import TwoViewSolution, fundamental_from_pose
from spheresfm.errors import DegenerateDisparity
from spheresfm.rectify import (
    DisparityMap,
    DisparityParams,
    RectifiedPair,
    compute_disparity,
    dense_cloud,
    disparity_preview,
    disparity_to_range,
    read_pfm,
    rectification_rotations,
    rectified_coords,
    rectify_pair,
    write_pfm,
)
from spheresfm.registration import yaw_matrix
from spheresfm.sphere_cam import CameraPose, EquirectImage, ImageSize
from spheresfm.synthetic import Room, gauge_normalize, make_planar_scene


def two_view_solution(theta, baseline_dir):
    R = yaw_matrix(theta)
    e1 = np.asarray(baseline_dir, dtype=float)
    e1 = e1 / np.linalg.norm(e1)
    return TwoViewSolution(
        F=fundamental_from_pose(R, e1), e1=e1, e2=-R @ e1, R=R,
        inlier_mask=np.ones(1, dtype=bool),
    )


class TestRectificationRotations:
    def test_polar_epipole_is_identity(self):
        R1, R2 = rectification_rotations(np.array([0.0, 0, 1.0]), np.eye(3))
        np.testing.assert_allclose(R1, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(R2, np.eye(3), atol=1e-12)

    def test_equatorial_epipole(self):
        R1, _ = rectification_rotations(np.array([1.0, 0, 0]), np.eye(3))
        np.testing.assert_allclose(R1 @ [1.0, 0, 0], [0, 0, 1.0], atol=1e-12)

    def test_both_epipoles_map_to_poles(self, rng):
        for _ in range(50):
            e1 = rng.normal(size=3)
            e1 /= np.linalg.norm(e1)
            theta = rng.uniform(-np.pi, np.pi)
            R = yaw_matrix(theta)
            R1, R2 = rectification_rotations(e1, R)
            e2 = -R @ e1
            np.testing.assert_allclose(R1 @ e1, [0, 0, 1.0], atol=1e-9)
            np.testing.assert_allclose(R2 @ e2, [0, 0, -1.0], atol=1e-9)
            for M in (R1, R2):
                assert np.linalg.norm(M.T @ M - np.eye(3)) < 1e-9


class TestRectifyPair:
    def test_identity_case_is_transpose(self, rng):
        pixels = rng.integers(0, 256, size=(64, 128, 3), dtype=np.uint8)
        img = EquirectImage(pixels)
        sol = two_view_solution(0.0, [0.0, 0, 1.0])
        pair = rectify_pair(img, img, sol, img.size)
        np.testing.assert_array_equal(pair.rect1, np.transpose(pixels, (1, 0, 2)))

    def test_column_zero_is_baseline(self):
        sol = two_view_solution(0.3, [1.0, 0.2, 0])
        size = ImageSize(256, 128)
        # Column c maps to latitude (c + 0.5) * pi / n_cols; the latitude of
        # column 0 approaches 0 (the baseline direction) as columns shrink.
        row, col = rectified_coords(
            *_pixel_of_bearing(sol.e1, size), size, _rect1(sol), size
        )
        assert col == pytest.approx(0.0, abs=1e-9)

    def test_row_alignment_on_synthetic_pair(self):
        scene = make_planar_scene(2, 60, seed=61)
        gt = gauge_normalize(scene)
        sol = two_view_solution(float(gt.thetas[1]), gt.centers[1])
        rect_size = ImageSize(1024, 512)
        r1, c1 = rectified_coords(
            scene.pixels[0, :, 0], scene.pixels[0, :, 1], scene.size,
            _rect1(sol), rect_size,
        )
        from spheresfm.rectify import rectification_rotations as rr

        R1, R2 = rr(sol.e1, sol.R)
        r2, c2 = rectified_coords(
            scene.pixels[1, :, 0], scene.pixels[1, :, 1], scene.size, R2, rect_size
        )
        wrap = rect_size.width
        diff = np.minimum(np.abs(r1 - r2), wrap - np.abs(r1 - r2))
        assert diff.max() < 0.5
        # Disparity convention: the camera-2 latitude always exceeds camera-1's.
        assert (c2 - c1).min() > 0


def _rect1(sol):
    R1, _ = rectification_rotations(sol.e1, sol.R)
    return R1


def _pixel_of_bearing(b, size):
    from spheresfm.sphere_cam import bearing_to_pixel

    x, y = bearing_to_pixel(np.asarray(b, dtype=float), size)
    return float(x), float(y)


def _noise_raster(rng, rows, cols):
    from spheresfm.synthetic import _upsample

    m = max(rows, cols)
    base = rng.uniform(0, 255, size=(m // 4, m // 4, 3))
    up = _upsample(base, m)[:rows, :cols]
    fine = rng.uniform(-20, 20, size=(rows, cols, 3))
    return np.clip(up + fine, 0, 255).astype(np.uint8)


def _pair_from_rasters(rect1, rect2):
    rows = rect1.shape[0]
    return RectifiedPair(
        rect1=rect1, rect2=rect2,
        R_rect1=np.eye(3), R_rect2=np.eye(3),
        rect_size=ImageSize(rows, rows // 2),
    )


class TestComputeDisparity:
    def test_identical_images_zero_disparity(self, rng):
        raster = _noise_raster(rng, 64, 32)
        pair = _pair_from_rasters(raster, raster)
        disp = compute_disparity(pair, DisparityParams(d_min=0, d_max=8, window=7))
        assert disp.valid.any()
        assert np.abs(disp.d[disp.valid]).max() == pytest.approx(0.0, abs=1e-9)

    def test_constructed_shift_recovered(self, rng):
        raster = _noise_raster(rng, 128, 64)
        shift = 7
        # rect2[r, c] = rect1[r, c - 7], so matches sit at x2 = x1 + 7.
        shifted = np.roll(raster, shift, axis=1)
        pair = _pair_from_rasters(raster, shifted)
        disp = compute_disparity(pair, DisparityParams(d_min=1, d_max=16, window=9))
        vals = disp.d[disp.valid]
        assert len(vals) > 500
        modal = np.median(np.rint(vals))
        assert modal == shift
        assert np.mean(np.rint(vals) == shift) > 0.95

    def test_uniform_region_invalid(self):
        flat = np.full((64, 32, 3), 128, dtype=np.uint8)
        pair = _pair_from_rasters(flat, flat)
        disp = compute_disparity(pair, DisparityParams(d_min=0, d_max=8))
        assert not disp.valid.any()

    def test_epipole_margins_masked(self, rng):
        raster = _noise_raster(rng, 64, 100)
        pair = RectifiedPair(
            rect1=raster, rect2=raster,
            R_rect1=np.eye(3), R_rect2=np.eye(3),
            rect_size=ImageSize(200, 100),
        )
        disp = compute_disparity(
            pair, DisparityParams(d_min=0, d_max=4, epipole_margin=0.1)
        )
        assert not disp.valid[:, :10].any()
        assert not disp.valid[:, -10:].any()


class TestDisparityToRange:
    def test_isoceles_right_triangle(self):
        r1, r2 = disparity_to_range(np.pi / 4, np.pi / 4, 1.0)
        assert r1 == pytest.approx(np.sqrt(2.0), rel=1e-12)
        assert r2 == pytest.approx(1.0, rel=1e-12)

    def test_thirty_sixty(self):
        r1, _ = disparity_to_range(np.pi / 3, np.pi / 6, 1.0)
        assert r1 == pytest.approx(2.0, rel=1e-12)

    def test_zero_disparity_degenerate(self):
        with pytest.raises(DegenerateDisparity):
            disparity_to_range(np.pi / 4, 0.0, 1.0)

    def test_flat_triangle_degenerate(self):
        with pytest.raises(DegenerateDisparity):
            disparity_to_range(np.pi / 2, np.pi / 2, 1.0)

    def test_triangle_identity_random(self, rng):
        # Place P from (x1, d), then re-measure the angle at O2.
        x1 = rng.uniform(0.05, np.pi - 0.1, size=1000)
        d = rng.uniform(1e-3, np.pi - 0.02 - x1)
        r1, r2 = disparity_to_range(x1, d, 1.0)
        P = np.stack([r1 * np.cos(x1), r1 * np.sin(x1)], axis=1)  # O1 at origin, O2 at (1, 0)
        v = P - np.array([1.0, 0.0])
        x2 = np.arctan2(v[:, 1], v[:, 0])
        np.testing.assert_allclose(x2, x1 + d, atol=1e-9)


class TestDenseCloud:
    def test_empty_mask(self):
        pair = _pair_from_rasters(
            np.zeros((16, 8, 3), dtype=np.uint8), np.zeros((16, 8, 3), dtype=np.uint8)
        )
        disp = DisparityMap(
            d=np.zeros((16, 8), dtype=np.float32),
            valid=np.zeros((16, 8), dtype=bool),
            radians_per_pixel=np.pi / 8,
        )
        cloud = dense_cloud(disp, pair)
        assert len(cloud) == 0

    def test_single_pixel_forward_model(self):
        # One valid pixel with a hand-set disparity reproduces the law of
        # sines along the rectified bearing.
        rows, cols = 32, 16
        pair = _pair_from_rasters(
            np.full((rows, cols, 3), 7, dtype=np.uint8),
            np.full((rows, cols, 3), 7, dtype=np.uint8),
        )
        d = np.zeros((rows, cols), dtype=np.float32)
        valid = np.zeros((rows, cols), dtype=bool)
        r, c = 10, 8
        d[r, c] = 2.0
        valid[r, c] = True
        disp = DisparityMap(d=d, valid=valid, radians_per_pixel=np.pi / cols)
        cloud = dense_cloud(disp, pair, T=1.0)
        assert len(cloud) == 1
        x1 = (c + 0.5) * np.pi / cols
        drad = 2.0 * np.pi / cols
        r1_expected, _ = disparity_to_range(x1, drad, 1.0)
        assert np.linalg.norm(cloud.points[0]) == pytest.approx(r1_expected, rel=1e-6)

    def test_room_oracle_accuracy(self):
        room = Room.make(seed=3)
        size = ImageSize(512, 256)
        theta2 = 0.3
        c2 = np.array([0.8, 0.35, 0.0])
        c2 /= np.linalg.norm(c2)
        img1 = room.render_panorama(CameraPose(np.eye(3), np.zeros(3)), size)
        img2 = room.render_panorama(CameraPose(yaw_matrix(theta2), c2), size)
        sol = two_view_solution(theta2, c2)
        pair = rectify_pair(img1, img2, sol, size)
        disp = compute_disparity(pair)
        assert disp.valid.mean() > 0.3
        # Valid disparities stay inside the epipolar triangle: 0 < d_rad < pi - x1.
        rows, cols = np.nonzero(disp.valid)
        x1 = (cols + 0.5) * disp.radians_per_pixel
        d_rad = disp.d[rows, cols] * disp.radians_per_pixel
        assert np.all(d_rad > 0)
        assert np.all(x1 + d_rad < np.pi)

        cloud = dense_cloud(disp, pair, T=1.0)
        dirs = cloud.points / np.linalg.norm(cloud.points, axis=1, keepdims=True)
        t_true = room.depth_along(np.zeros(3), dirs)
        rel = np.abs(np.linalg.norm(cloud.points, axis=1) - t_true) / t_true
        assert (rel < 0.05).mean() > 0.8


class TestPfmAndPreview:
    def test_pfm_round_trip(self, tmp_path, rng):
        data = rng.uniform(0, 50, size=(20, 30)).astype(np.float32)
        write_pfm(tmp_path / "d.pfm", data)
        back = read_pfm(tmp_path / "d.pfm")
        np.testing.assert_array_equal(back, data)

    def test_preview_inverted_scale(self):
        d = np.array([[1.0, 5.0, 3.0]], dtype=np.float32)
        valid = np.array([[True, True, False]])
        disp = DisparityMap(d=d, valid=valid, radians_per_pixel=0.1)
        img = disparity_preview(disp)
        assert img[0, 0] == 255  # smallest disparity is brightest
        assert img[0, 1] == 0  # largest valid disparity
        assert img[0, 2] == 0  # invalid
