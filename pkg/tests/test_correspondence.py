"""Unit tests for correspondence management and cube mapping."""

from __future__ import annotations

import json

import numpy as np
import pytest

from spheresfm.correspondence import (
    FACE_IDS,
    Correspondence,
    augment_pool,
    bearing_to_face,
    build_tracks,
    cubeface_to_equirect,
    equirect_to_cubeface,
    equirect_to_cubemap,
    face_pixel_to_bearing,
    import_matches,
)
from spheresfm.epipolar import epipolar_residuals, fundamental_from_pose
from spheresfm.errors import ParseError, UnknownImageId
from spheresfm.registration import yaw_matrix
from spheresfm.sphere_cam import (
    EquirectImage,
    ImageSize,
    bearing_to_pixel,
    pixel_to_bearing,
    project_point,
)
from spheresfm.synthetic import gauge_normalize, make_planar_scene

SIZE = ImageSize(2048, 1024)


class TestCubeGeometry:
    def test_plus_x_face_center(self):
        b = face_pixel_to_bearing("+X", 32.0, 32.0, 64)
        np.testing.assert_allclose(b, [1, 0, 0], atol=1e-12)
        x, y = cubeface_to_equirect("+X", 32.0, 32.0, 64, SIZE)
        # theta = 0, phi = pi/2.
        assert x == pytest.approx(0.0, abs=1e-9)
        assert y == pytest.approx(SIZE.height / 2, abs=1e-9)

    def test_all_face_centers_on_axes(self):
        for face in FACE_IDS:
            b = face_pixel_to_bearing(face, 0.5, 0.5, 1)
            assert np.abs(b).max() == pytest.approx(1.0, abs=1e-12)

    def test_corner_components(self):
        b = face_pixel_to_bearing("+X", 0.0, 0.0, 64)
        np.testing.assert_allclose(np.abs(b), 1 / np.sqrt(3), atol=1e-12)

    def test_round_trip_10k(self, rng):
        face_size = 256
        u = rng.uniform(1.0, face_size - 1.0, size=10_000)
        v = rng.uniform(1.0, face_size - 1.0, size=10_000)
        faces = rng.choice(FACE_IDS, size=10_000)
        for face in FACE_IDS:
            m = faces == face
            x, y = cubeface_to_equirect(face, u[m], v[m], face_size, SIZE)
            face_back, u2, v2 = equirect_to_cubeface(x, y, SIZE, face_size)
            assert all(f == face for f in face_back)
            assert np.max(np.abs(u2 - u[m])) < 1e-9
            assert np.max(np.abs(v2 - v[m])) < 1e-9

    def test_seam_continuity(self):
        # The -X face spans the theta = pi seam; wrapped coordinates stay valid.
        x, y = cubeface_to_equirect("-X", 1.0, 32.0, 64, SIZE)
        assert 0.0 <= x < SIZE.width
        assert 0.0 <= y <= SIZE.height

    def test_bearing_to_face_dominant_axis(self):
        face, _, _ = bearing_to_face(np.array([0.9, 0.1, -0.2]))
        assert face == "+X"
        face, _, _ = bearing_to_face(np.array([0.1, 0.1, -0.9]))
        assert face == "-Z"


class TestCubemapResample:
    def test_uniform_image(self):
        img = EquirectImage(np.full((64, 128, 3), 123, dtype=np.uint8))
        cube = equirect_to_cubemap(img, 32)
        for face in FACE_IDS:
            assert (cube.faces[face] == 123).all()

    def test_face_center_sample_matches_direct(self, rng):
        pixels = rng.integers(0, 256, size=(128, 256, 3), dtype=np.uint8)
        img = EquirectImage(pixels)
        cube = equirect_to_cubemap(img, 64)
        from spheresfm.sphere_cam import sample_bilinear

        x, y = cubeface_to_equirect("+Y", 10.5, 20.5, 64, img.size)
        expected = np.clip(np.rint(sample_bilinear(img, x - 0.5, y - 0.5)), 0, 255)
        np.testing.assert_array_equal(cube.faces["+Y"][20, 10], expected.astype(np.uint8))


def write_matches(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


class TestImportMatches:
    IMAGES = {"a": SIZE, "b": SIZE}

    def test_well_formed(self, tmp_path, rng):
        recs = [
            {
                "image_a": "a", "image_b": "b",
                "xa": float(rng.uniform(0, 2048)), "ya": float(rng.uniform(0, 1024)),
                "xb": float(rng.uniform(0, 2048)), "yb": float(rng.uniform(0, 1024)),
            }
            for _ in range(100)
        ]
        path = tmp_path / "matches.jsonl"
        write_matches(path, recs)
        out = import_matches(path, self.IMAGES)
        assert len(out) == 100
        assert all(c.source == "imported" for c in out)

    def test_unknown_image(self, tmp_path):
        path = tmp_path / "matches.jsonl"
        write_matches(
            path,
            [{"image_a": "a", "image_b": "zzz", "xa": 1, "ya": 2, "xb": 3, "yb": 4}],
        )
        with pytest.raises(UnknownImageId):
            import_matches(path, self.IMAGES)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "matches.jsonl"
        path.write_text('{"image_a": "a", \n', encoding="utf-8")
        with pytest.raises(ParseError):
            import_matches(path, self.IMAGES)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "matches.jsonl"
        write_matches(path, [{"image_a": "a", "image_b": "b", "xa": 1}])
        with pytest.raises(ParseError):
            import_matches(path, self.IMAGES)

    def test_cube_face_record_converted(self, tmp_path):
        path = tmp_path / "matches.jsonl"
        write_matches(
            path,
            [
                {
                    "image_a": "a", "image_b": "b",
                    "xa": 12.25, "ya": 40.5, "xb": 100.0, "yb": 200.0,
                    "face_a": "+Y", "face_size": 128,
                }
            ],
        )
        out = import_matches(path, self.IMAGES)
        x, y = cubeface_to_equirect("+Y", 12.25, 40.5, 128, SIZE)
        assert out[0].xa == pytest.approx(x, abs=1e-6)
        assert out[0].ya == pytest.approx(y, abs=1e-6)
        assert out[0].xb == 100.0

    def test_face_without_size_rejected(self, tmp_path):
        path = tmp_path / "matches.jsonl"
        write_matches(
            path,
            [
                {
                    "image_a": "a", "image_b": "b",
                    "xa": 1, "ya": 2, "xb": 3, "yb": 4, "face_a": "+X",
                }
            ],
        )
        with pytest.raises(ParseError):
            import_matches(path, self.IMAGES)


def make_pool(seed=51, n=50):
    """Exact correspondences for one pair plus the ground-truth F."""
    scene = make_planar_scene(2, n, seed=seed)
    gt = gauge_normalize(scene)
    F = fundamental_from_pose(yaw_matrix(gt.thetas[1]), gt.centers[1])
    corrs = [
        Correspondence(
            image_a="a", image_b="b",
            xa=float(scene.pixels[0, k, 0]), ya=float(scene.pixels[0, k, 1]),
            xb=float(scene.pixels[1, k, 0]), yb=float(scene.pixels[1, k, 1]),
            source="manual",
        )
        for k in range(n)
    ]
    return corrs, F, scene


class TestAugmentPool:
    SIZES = {"a": SIZE, "b": SIZE}

    def _junk(self, rng, F, n):
        """Random pairs rejection-sampled to have residual far above any epsilon."""
        out = []
        while len(out) < n:
            xa, xb = rng.uniform(0, SIZE.width, size=2)
            ya, yb = rng.uniform(50, SIZE.height - 50, size=2)
            z1 = pixel_to_bearing(xa, ya, SIZE)
            z2 = pixel_to_bearing(xb, yb, SIZE)
            if epipolar_residuals(z1, z2, F)[0] > 0.01:
                out.append(
                    Correspondence(
                        image_a="a", image_b="b",
                        xa=float(xa), ya=float(ya), xb=float(xb), yb=float(yb),
                        source="imported",
                    )
                )
        return out

    def test_all_outliers_rejected(self, rng):
        manual, F, _ = make_pool(n=10)
        junk = self._junk(rng, F, 20)
        merged = augment_pool(manual, junk, F, 1e-3, self.SIZES)
        assert len(merged) == 10
        assert all(c.source == "manual" for c in merged)

    def test_true_matches_admitted(self, rng):
        # 60 exact pairs from one rig: 10 kept manual, 50 become imported.
        corrs, F, _ = make_pool(n=60)
        manual, extra = corrs[:10], corrs[10:]
        for c in extra:
            c.source = "imported"
        junk = self._junk(rng, F, 50)
        merged = augment_pool(manual, extra + junk, F, 1e-3, self.SIZES)
        admitted = [c for c in merged if c.source == "augmented"]
        assert len(admitted) >= 49
        assert all(c.residual is not None and c.residual < 1e-3 for c in merged)
        # No junk sneaks in: every admitted record matches an `extra` record.
        extra_keys = {(c.xa, c.ya, c.xb, c.yb) for c in extra}
        assert all((c.xa, c.ya, c.xb, c.yb) in extra_keys for c in admitted)

    def test_duplicate_keeps_manual(self):
        manual, F, _ = make_pool(n=5)
        dup = Correspondence(
            image_a="a", image_b="b",
            xa=manual[0].xa + 0.4, ya=manual[0].ya - 0.3,
            xb=manual[0].xb + 0.2, yb=manual[0].yb + 0.1,
            source="imported",
        )
        merged = augment_pool(manual, [dup], F, 1.0, self.SIZES)
        assert len(merged) == 5
        assert all(c.source == "manual" for c in merged)

    def test_idempotent(self, rng):
        corrs, F, _ = make_pool(n=28)
        manual, extra = corrs[:8], corrs[8:]
        for c in extra:
            c.source = "imported"
        first = augment_pool(manual, extra, F, 1e-3, self.SIZES)
        second = augment_pool(first, [], F, 1e-3, self.SIZES)
        assert [(c.xa, c.ya, c.xb, c.yb, c.source) for c in first] == [
            (c.xa, c.ya, c.xb, c.yb, c.source) for c in second
        ]


class TestBuildTracks:
    def _corr(self, a, b, pa, pb):
        return Correspondence(
            image_a=a, image_b=b, xa=pa[0], ya=pa[1], xb=pb[0], yb=pb[1]
        )

    def test_chain_closure(self):
        corrs = [
            self._corr("A", "B", (1.0, 1.0), (2.0, 2.0)),
            self._corr("B", "C", (2.0, 2.0), (3.0, 3.0)),
        ]
        tracks = build_tracks(corrs)
        assert len(tracks) == 1
        assert set(tracks[0].observations) == {"A", "B", "C"}
        assert tracks[0].consistent

    def test_conflict_flagged(self):
        corrs = [
            self._corr("A", "B", (1.0, 1.0), (2.0, 2.0)),
            self._corr("B", "C", (2.0, 2.0), (3.0, 3.0)),
            # Claims the same A point equals a *different* B point.
            self._corr("A", "B", (1.0, 1.0), (9.0, 9.0)),
        ]
        tracks = build_tracks(corrs)
        flagged = [t for t in tracks if not t.consistent]
        assert flagged

    def test_order_independent(self, rng):
        corrs = [
            self._corr("A", "B", (float(k), 1.0), (float(k), 2.0)) for k in range(10)
        ] + [
            self._corr("B", "C", (float(k), 2.0), (float(k), 3.0)) for k in range(10)
        ]
        base = build_tracks(corrs)
        for _ in range(5):
            perm = [corrs[i] for i in rng.permutation(len(corrs))]
            other = build_tracks(perm)
            assert [t.observations for t in other] == [t.observations for t in base]

    def test_twelve_tracks_over_six_images(self):
        scene = make_planar_scene(6, 12, seed=59)
        ids = [f"cam{i}" for i in range(6)]
        corrs = []
        for i in range(6):
            for j in range(i + 1, 6):
                for k in range(12):
                    corrs.append(
                        self._corr(
                            ids[i], ids[j],
                            tuple(scene.pixels[i, k]), tuple(scene.pixels[j, k]),
                        )
                    )
        tracks = build_tracks(corrs)
        assert len(tracks) == 12
        assert all(len(t.observations) == 6 for t in tracks)
        assert all(t.consistent for t in tracks)
