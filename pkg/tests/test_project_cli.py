"""Project persistence, PLY export, and CLI end-to-end tests."""

from __future__ import annotations

import json
import shutil

import numpy as np
import pytest

from spheresfm import cli, pipeline
from spheresfm.correspondence import Correspondence
from spheresfm.errors import EmptyCloud, PrerequisiteMissing, ProjectError
from spheresfm.fixtures import load_ground_truth
from spheresfm.ply import read_ply, write_ply
from spheresfm.project import Config, Project
from spheresfm.registration import yaw_matrix
from spheresfm.sphere_cam import CameraPose, bearing_to_pixel, project_point
from spheresfm.synthetic import aligned_rmse


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def match_points_to_truth(project, gt):
    """Order triangulated points like the ground truth via their pixels."""
    first_id = gt["image_ids"][0]
    pose = CameraPose(
        yaw_matrix(gt["thetas"][0]), np.array(gt["centers"][0])
    )
    size = project.images[first_id].size
    x, y = bearing_to_pixel(project_point(np.array(gt["points"]), pose), size)
    lookup = {
        (round(float(xx), 6), round(float(yy), 6)): k
        for k, (xx, yy) in enumerate(zip(x, y))
    }
    ordered = np.zeros((len(gt["points"]), 3))
    for p in project.points:
        ox, oy = p.observations[first_id]
        ordered[lookup[(round(ox, 6), round(oy, 6))]] = p.P
    return ordered


class TestPly:
    def test_single_point_file_shape(self, tmp_path):
        path = tmp_path / "one.ply"
        write_ply(path, np.zeros((1, 3)), np.full((1, 3), 255, dtype=np.uint8))
        lines = path.read_text().splitlines()
        assert len(lines) == 14
        assert "element vertex 1" in lines

    def test_round_trip(self, tmp_path, rng):
        pts = rng.normal(size=(25, 3))
        cols = rng.integers(0, 256, size=(25, 3)).astype(np.uint8)
        path = tmp_path / "cloud.ply"
        write_ply(path, pts, cols)
        back_pts, back_cols = read_ply(path)
        np.testing.assert_allclose(back_pts, pts, rtol=1e-6)
        np.testing.assert_array_equal(back_cols, cols)

    def test_empty_cloud(self, tmp_path):
        with pytest.raises(EmptyCloud):
            write_ply(tmp_path / "empty.ply", np.zeros((0, 3)))


class TestProjectState:
    def test_init_and_load(self, tmp_path):
        proj = Project.init(tmp_path / "p", Config(seed=7))
        again = Project.load(tmp_path / "p")
        assert again.config.seed == 7

    def test_double_init_rejected(self, tmp_path):
        Project.init(tmp_path / "p")
        with pytest.raises(ProjectError):
            Project.init(tmp_path / "p")

    def test_unknown_config_key_rejected(self, tmp_path):
        proj = Project.init(tmp_path / "p")
        doc = json.loads((proj.dir / "project.json").read_text())
        doc["config"]["bogus"] = 1
        (proj.dir / "project.json").write_text(json.dumps(doc))
        with pytest.raises(ProjectError):
            Project.load(proj.dir)

    def test_missing_image_detected(self, two_view_dir, tmp_path):
        target = tmp_path / "copy"
        shutil.copytree(two_view_dir, target)
        (target / "images" / "cam1.png").unlink()
        with pytest.raises(ProjectError):
            Project.load(target)

    def test_pair_order_normalized(self, tmp_path, rng):
        proj = Project.init(tmp_path / "p")
        for image_id in ("zed", "alpha"):
            px = rng.integers(0, 256, size=(8, 16, 3), dtype=np.uint8)
            from spheresfm.sphere_cam import EquirectImage

            tmp = tmp_path / f"{image_id}.png"
            EquirectImage(px).save(tmp)
            proj.add_image(tmp, image_id)
        rec = proj.add_correspondence(
            Correspondence(
                image_a="zed", image_b="alpha", xa=1.0, ya=2.0, xb=3.0, yb=4.0
            )
        )
        assert rec.image_a == "alpha"
        assert (rec.xa, rec.ya, rec.xb, rec.yb) == (3.0, 4.0, 1.0, 2.0)
        assert "alpha|zed" in proj.correspondences

    def test_atomic_save_keeps_previous_state(self, tmp_path, monkeypatch):
        proj = Project.init(tmp_path / "p", Config(seed=1))
        before = (proj.dir / "project.json").read_bytes()
        proj.config.seed = 2

        import os

        def boom(src, dst):
            raise OSError("simulated crash")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            proj.save()
        monkeypatch.undo()
        assert (proj.dir / "project.json").read_bytes() == before

    def test_corrupt_solution_rejected_on_load(self, two_view_dir, tmp_path):
        target = tmp_path / "copy"
        shutil.copytree(two_view_dir, target)
        proj = Project.load(target)
        pipeline.estimate_pair(proj, "cam1", "cam2")
        proj.save()
        doc = json.loads((target / "project.json").read_text())
        doc["solutions"]["cam1|cam2"]["R"] = [[2, 0, 0], [0, 1, 0], [0, 0, 1]]
        (target / "project.json").write_text(json.dumps(doc))
        with pytest.raises(ProjectError):
            Project.load(target)


class TestCliTwoView:
    def test_full_sparse_flow(self, two_view_dir, tmp_path):
        target = tmp_path / "proj"
        shutil.copytree(two_view_dir, target)
        assert run_cli("-C", target, "estimate-pair", "cam1", "cam2") == 0
        assert run_cli("-C", target, "register") == 0
        assert run_cli("-C", target, "triangulate") == 0
        assert run_cli("-C", target, "export-ply", "--sparse") == 0

        proj = Project.load(target)
        gt = load_ground_truth(target)
        ordered = match_points_to_truth(proj, gt)
        assert aligned_rmse(ordered, np.array(gt["points"])) < 1e-6

        pts, _ = read_ply(target / "sparse.ply")
        assert len(pts) == len(gt["points"])

    def test_insufficient_pairs_error_category(self, tmp_path, capsys, rng):
        proj = Project.init(tmp_path / "p")
        from spheresfm.sphere_cam import EquirectImage

        for image_id in ("a", "b"):
            img_path = tmp_path / f"{image_id}.png"
            EquirectImage(
                rng.integers(0, 256, size=(8, 16, 3), dtype=np.uint8)
            ).save(img_path)
            proj.add_image(img_path, image_id)
        for k in range(7):
            proj.add_correspondence(
                Correspondence(
                    image_a="a", image_b="b",
                    xa=float(k), ya=1.0, xb=float(k), yb=2.0,
                )
            )
        proj.save()
        rc = run_cli("-C", tmp_path / "p", "estimate-pair", "a", "b")
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "InsufficientPairs"

    def test_failed_step_preserves_state(self, tmp_path, capsys):
        proj_dir = tmp_path / "p"
        Project.init(proj_dir)
        before = (proj_dir / "project.json").read_bytes()
        rc = run_cli("-C", proj_dir, "estimate-pair", "x", "y")
        assert rc == 1
        assert (proj_dir / "project.json").read_bytes() == before


class TestCliSixCamera:
    def test_register_writes_gauged_poses(self, six_camera_dir, tmp_path):
        target = tmp_path / "proj6"
        shutil.copytree(six_camera_dir, target)
        assert run_cli("-C", target, "register") == 0
        poses = json.loads((target / "poses.json").read_text())
        assert len(poses["cameras"]) == 6
        assert poses["cameras"][0]["theta"] == 0.0
        assert poses["cameras"][0]["center"] == [0.0, 0.0, 0.0]
        c1 = np.array(poses["cameras"][1]["center"])
        assert np.linalg.norm(c1) == pytest.approx(1.0, abs=1e-12)
        assert all(p["center"][2] == 0.0 for p in poses["cameras"])

    def test_pointcloud_matches_truth(self, six_camera_dir, tmp_path):
        target = tmp_path / "proj6"
        shutil.copytree(six_camera_dir, target)
        run_cli("-C", target, "register")
        run_cli("-C", target, "triangulate")
        proj = Project.load(target)
        gt = load_ground_truth(target)
        assert len(proj.points) == 12
        assert all(p.accepted for p in proj.points)
        ordered = match_points_to_truth(proj, gt)
        assert aligned_rmse(ordered, np.array(gt["points"])) < 1e-6


class TestCliImportAugment:
    def test_import_then_augment(self, two_view_dir, tmp_path):
        target = tmp_path / "proj"
        shutil.copytree(two_view_dir, target)
        run_cli("-C", target, "estimate-pair", "cam1", "cam2")

        # Build a matches file from held-out true pairs plus junk.
        gt = load_ground_truth(target)
        lines = []
        for rec in gt["held_out"]:
            lines.append(
                json.dumps(
                    {
                        "image_a": "cam1", "image_b": "cam2",
                        "xa": rec["xa"], "ya": rec["ya"],
                        "xb": rec["xb"], "yb": rec["yb"],
                    }
                )
            )
        rng = np.random.default_rng(3)
        for _ in range(10):
            lines.append(
                json.dumps(
                    {
                        "image_a": "cam1", "image_b": "cam2",
                        "xa": float(rng.uniform(0, 1024)), "ya": float(rng.uniform(100, 400)),
                        "xb": float(rng.uniform(0, 1024)), "yb": float(rng.uniform(100, 400)),
                    }
                )
            )
        matches = tmp_path / "matches.jsonl"
        matches.write_text("\n".join(lines) + "\n")

        assert run_cli("-C", target, "import-matches", "cam1", "cam2", matches) == 0
        assert run_cli("-C", target, "augment", "cam1", "cam2", "--epsilon", "1e-6") == 0

        proj = Project.load(target)
        pool = proj.pair_correspondences("cam1", "cam2")
        augmented = [c for c in pool if c.source == "augmented"]
        assert len(augmented) == len(gt["held_out"])
        assert all(c.residual < 1e-6 for c in augmented)

    def test_augment_requires_solution(self, two_view_dir, tmp_path, capsys):
        target = tmp_path / "proj"
        shutil.copytree(two_view_dir, target)
        rc = run_cli("-C", target, "augment", "cam1", "cam2", "--epsilon", "0.01")
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "PrerequisiteMissing"


class TestExportErrors:
    def test_sparse_before_triangulate(self, two_view_dir, tmp_path):
        target = tmp_path / "proj"
        shutil.copytree(two_view_dir, target)
        proj = Project.load(target)
        with pytest.raises(PrerequisiteMissing):
            pipeline.export_sparse_ply(proj, tmp_path / "out.ply")
