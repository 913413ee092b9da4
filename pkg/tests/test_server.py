"""HTTP API tests over the synthetic fixtures."""

from __future__ import annotations

import shutil

import numpy as np
import pytest
from fastapi.testclient import TestClient

from spheresfm.fixtures import load_ground_truth
from spheresfm.project import Project
from spheresfm.server import create_app


@pytest.fixture()
def two_view_client(two_view_dir, tmp_path):
    target = tmp_path / "proj"
    shutil.copytree(two_view_dir, target)
    return TestClient(create_app(target)), target


@pytest.fixture()
def six_camera_client(six_camera_dir, tmp_path):
    target = tmp_path / "proj6"
    shutil.copytree(six_camera_dir, target)
    return TestClient(create_app(target)), target


class TestReadEndpoints:
    def test_project_summary(self, two_view_client):
        client, _ = two_view_client
        r = client.get("/api/project")
        assert r.status_code == 200
        doc = r.json()
        assert [img["id"] for img in doc["images"]] == ["cam1", "cam2"]
        assert doc["pairs"]["cam1|cam2"]["n_manual"] == 20
        assert doc["registered"] is False

    def test_image_raster(self, two_view_client):
        client, _ = two_view_client
        r = client.get("/api/images/cam1")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_image_404(self, two_view_client):
        client, _ = two_view_client
        assert client.get("/api/images/nope").status_code == 404
        r = client.get("/api/pairs/cam1/nope/correspondences")
        assert r.status_code == 404
        assert r.json()["error"] == "UnknownImageId"

    def test_get_never_mutates(self, two_view_client):
        client, target = two_view_client
        before = (target / "project.json").read_bytes()
        client.get("/api/project")
        client.get("/api/pairs/cam1/cam2/correspondences")
        client.get("/api/images/cam1")
        assert (target / "project.json").read_bytes() == before


class TestAnnotationFlow:
    def test_post_solve_curve_delete(self, two_view_client):
        client, _ = two_view_client
        r = client.get("/api/pairs/cam1/cam2/correspondences")
        n0 = len(r.json()["correspondences"])

        # Epipolar curve requires a solution: 409 before solving.
        r = client.get(
            "/api/pairs/cam1/cam2/epipolar-curve", params={"x": 10.0, "y": 20.0}
        )
        assert r.status_code == 409

        r = client.post(
            "/api/pairs/cam1/cam2/correspondences",
            json={"xa": 5.0, "ya": 6.0, "xb": 7.0, "yb": 8.0},
        )
        assert r.status_code == 201
        new_id = r.json()["id"]

        r = client.post("/api/pairs/cam1/cam2/solve", json={"method": "ransac"})
        assert r.status_code == 200
        doc = r.json()
        F = np.array(doc["F"])
        assert np.linalg.svd(F, compute_uv=False)[2] < 1e-9
        for e in (doc["e1"], doc["e2"]):
            assert np.linalg.norm(e) == pytest.approx(1.0, abs=1e-9)
        assert len(doc["inlier_mask"]) == n0 + 1

        r = client.get(
            "/api/pairs/cam1/cam2/epipolar-curve", params={"x": 100.0, "y": 200.0}
        )
        assert r.status_code == 200
        assert r.json()["segments"]

        r = client.delete(f"/api/pairs/cam1/cam2/correspondences/{new_id}")
        assert r.status_code == 200
        r = client.delete(f"/api/pairs/cam1/cam2/correspondences/{new_id}")
        assert r.status_code == 404

    def test_malformed_body_400(self, two_view_client):
        client, _ = two_view_client
        r = client.post(
            "/api/pairs/cam1/cam2/correspondences", json={"xa": "wat"}
        )
        assert r.status_code == 400
        assert r.json()["error"] == "MalformedRequest"

    def test_solve_with_eight_posted_points(self, two_view_client, tmp_path):
        # Fresh pair: post eight synthetic correspondences over HTTP, solve.
        client, target = two_view_client
        proj = Project.load(target)
        gt = load_ground_truth(target)
        # Wipe the pre-annotated pool through the API.
        for c in client.get("/api/pairs/cam1/cam2/correspondences").json()[
            "correspondences"
        ]:
            client.delete(f"/api/pairs/cam1/cam2/correspondences/{c['id']}")
        for rec in gt["held_out"]:
            r = client.post(
                "/api/pairs/cam1/cam2/correspondences",
                json={"xa": rec["xa"], "ya": rec["ya"], "xb": rec["xb"], "yb": rec["yb"]},
            )
            assert r.status_code == 201
        r = client.post("/api/pairs/cam1/cam2/solve")
        assert r.status_code == 200
        assert all(r.json()["inlier_mask"])

    def test_solver_error_422(self, two_view_client):
        client, _ = two_view_client
        for c in client.get("/api/pairs/cam1/cam2/correspondences").json()[
            "correspondences"
        ]:
            client.delete(f"/api/pairs/cam1/cam2/correspondences/{c['id']}")
        r = client.post("/api/pairs/cam1/cam2/solve")
        assert r.status_code == 422
        assert r.json()["error"] == "InsufficientPairs"


class TestReconstructionFlow:
    def test_register_triangulate_pointcloud(self, six_camera_client):
        client, _ = six_camera_client
        r = client.get("/api/pointcloud")
        assert r.status_code == 409

        assert client.post("/api/register").status_code == 200
        r = client.post("/api/triangulate")
        assert r.status_code == 200
        assert r.json()["n_points"] == 12

        r = client.get("/api/pointcloud")
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["cameras"]) == 6
        assert len(doc["points"]) >= 12
        assert doc["cameras"][0]["center"] == [0.0, 0.0, 0.0]

    def test_dense_endpoint_404_then_stream(self, two_view_client):
        client, target = two_view_client
        assert client.get("/api/dense/cam1/cam2").status_code == 409

        from spheresfm import pipeline

        proj = Project.load(target)
        pipeline.estimate_pair(proj, "cam1", "cam2")
        pipeline.rectify(proj, "cam1", "cam2", rect_width=256)
        pipeline.disparity(proj, "cam1", "cam2")
        pipeline.dense(proj, "cam1", "cam2")
        proj.save()

        client2 = TestClient(create_app(target))
        r = client2.get("/api/dense/cam1/cam2")
        assert r.status_code == 200
        assert r.content.startswith(b"ply\n")
