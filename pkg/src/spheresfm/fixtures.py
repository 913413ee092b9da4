"""Bundled synthetic fixtures: complete project directories with rendered
panoramas, exact manual annotations, and a ground-truth sidecar file for
evaluation. Used by the test suite and the demo workflow.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .correspondence import Correspondence
from .project import Config, Project, _atomic_write_json
from .registration import yaw_matrix
from .sphere_cam import CameraPose, ImageSize, bearing_to_pixel, project_point
from .synthetic import Room


def _wall_points(room: Room, rng: np.random.Generator, n: int) -> np.ndarray:
    """Scene points on the room walls, sampled by casting random rays."""
    azim = rng.uniform(0.0, 2.0 * np.pi, size=n)
    elev = rng.uniform(-0.9, 0.9, size=n)
    dirs = np.stack(
        [np.cos(elev) * np.cos(azim), np.cos(elev) * np.sin(azim), np.sin(elev)],
        axis=1,
    )
    t, _, _, _ = room.cast(np.zeros(3), dirs)
    return t[:, None] * dirs


def _project_exact(points: np.ndarray, pose: CameraPose, size: ImageSize) -> np.ndarray:
    x, y = bearing_to_pixel(project_point(points, pose), size)
    return np.stack([x, y], axis=1)


def write_two_view_fixture(
    directory: str | Path,
    seed: int = 0,
    *,
    n_points: int = 20,
    n_held_out: int = 8,
    size: ImageSize = ImageSize(1024, 512),
) -> Path:
    """Two rendered panoramas with exact manual correspondences.

    Ground truth (poses, points, and held-out correspondences for overlay
    checks) is written to ground_truth.json alongside project.json.
    """
    directory = Path(directory)
    rng = np.random.default_rng(seed)
    room = Room.make(seed=seed)

    theta2 = float(rng.uniform(-0.6, 0.6))
    c2_dir = rng.uniform(-1.0, 1.0, size=2)
    c2 = np.array([c2_dir[0], c2_dir[1], 0.0])
    c2 *= 0.9 / np.linalg.norm(c2)
    poses = [CameraPose(np.eye(3), np.zeros(3)), CameraPose(yaw_matrix(theta2), c2)]
    image_ids = ["cam1", "cam2"]

    project = Project.init(directory, Config(seed=seed, rect_width=size.width))
    for image_id, pose in zip(image_ids, poses):
        img = room.render_panorama(pose, size)
        tmp = directory / f"_{image_id}.png"
        img.save(tmp)
        project.add_image(tmp, image_id)
        tmp.unlink()

    points = _wall_points(room, rng, n_points + n_held_out)
    px1 = _project_exact(points, poses[0], size)
    px2 = _project_exact(points, poses[1], size)
    for k in range(n_points):
        project.add_correspondence(
            Correspondence(
                image_a="cam1", image_b="cam2",
                xa=float(px1[k, 0]), ya=float(px1[k, 1]),
                xb=float(px2[k, 0]), yb=float(px2[k, 1]),
                source="manual",
            )
        )
    project.save()

    _atomic_write_json(
        directory / "ground_truth.json",
        {
            "image_ids": image_ids,
            "thetas": [0.0, theta2],
            "centers": [[0.0, 0.0, 0.0], c2.tolist()],
            "points": points[:n_points].tolist(),
            "held_out": [
                {
                    "xa": float(px1[k, 0]), "ya": float(px1[k, 1]),
                    "xb": float(px2[k, 0]), "yb": float(px2[k, 1]),
                }
                for k in range(n_points, n_points + n_held_out)
            ],
        },
    )
    return directory


def write_six_camera_fixture(
    directory: str | Path,
    seed: int = 0,
    *,
    n_tracks: int = 12,
    size: ImageSize = ImageSize(1024, 512),
) -> Path:
    """Six rendered panoramas with 12 exact tracks annotated on every pair."""
    directory = Path(directory)
    rng = np.random.default_rng(seed)
    room = Room.make(seed=seed, half_extent=(2.6, 2.6, 1.5))

    n_cameras = 6
    centers = np.zeros((n_cameras, 3))
    placed = 0
    while placed < n_cameras:
        cand = rng.uniform(-1.2, 1.2, size=2)
        if placed and np.min(
            np.linalg.norm(centers[:placed, :2] - cand, axis=1)
        ) < 0.55:
            continue
        centers[placed, :2] = cand
        placed += 1
    thetas = rng.uniform(-np.pi, np.pi, size=n_cameras)
    poses = [CameraPose(yaw_matrix(float(t)), c) for t, c in zip(thetas, centers)]
    image_ids = [f"cam{i + 1}" for i in range(n_cameras)]

    project = Project.init(directory, Config(seed=seed, rect_width=size.width))
    for image_id, pose in zip(image_ids, poses):
        img = room.render_panorama(pose, size)
        tmp = directory / f"_{image_id}.png"
        img.save(tmp)
        project.add_image(tmp, image_id)
        tmp.unlink()

    points = _wall_points(room, rng, n_tracks)
    pixels = np.stack([_project_exact(points, pose, size) for pose in poses])
    for i in range(n_cameras):
        for j in range(i + 1, n_cameras):
            for k in range(n_tracks):
                project.add_correspondence(
                    Correspondence(
                        image_a=image_ids[i], image_b=image_ids[j],
                        xa=float(pixels[i, k, 0]), ya=float(pixels[i, k, 1]),
                        xb=float(pixels[j, k, 0]), yb=float(pixels[j, k, 1]),
                        source="manual",
                    )
                )
    project.save()

    _atomic_write_json(
        directory / "ground_truth.json",
        {
            "image_ids": image_ids,
            "thetas": thetas.tolist(),
            "centers": centers.tolist(),
            "points": points.tolist(),
        },
    )
    return directory


FIXTURE_KINDS = {
    "two-view": write_two_view_fixture,
    "six-camera": write_six_camera_fixture,
}


def write_fixture(kind: str, directory: str | Path, seed: int = 0) -> Path:
    if kind not in FIXTURE_KINDS:
        raise ValueError(f"unknown fixture kind {kind!r}; choose from {sorted(FIXTURE_KINDS)}")
    return FIXTURE_KINDS[kind](directory, seed)


def load_ground_truth(directory: str | Path) -> dict:
    return json.loads((Path(directory) / "ground_truth.json").read_text())
