"""Project persistence: one human-readable JSON document plus rasters.

The project directory contains project.json (all state except pixel
data), images/ (copied panoramas), and dense/ (rectified rasters,
disparity maps, clouds). Saves are atomic (write-new-then-rename), so a
killed process never leaves a corrupt project. Matrices are stored
row-major with full float precision; identical state serializes to
identical bytes.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .correspondence import Correspondence
from .errors import ProjectError, UnknownImageId
from .sphere_cam import EquirectImage, ImageSize

PROJECT_FILE = "project.json"
POSES_FILE = "poses.json"

ENV_SEED = "SPHERESFM_SEED"
ENV_PORT = "SPHERESFM_PORT"


@dataclass
class Config:
    """Pipeline configuration; unspecified fields take these defaults."""

    seed: int = 0
    ransac_threshold: float = 0.01
    ransac_max_iterations: int = 2000
    ransac_min_inliers: int = 12
    filter_epsilon: float = 0.01
    rect_width: int = 2048  # rectified equirect width; height is half
    disparity_window: int = 11
    disparity_min: int = 1
    disparity_max: int | None = None  # None: quarter of the rectified columns
    ncc_floor: float = 0.5
    lr_tolerance: float = 1.0
    epipole_margin: float = 0.02
    serve_port: int = 8080

    @staticmethod
    def from_dict(d: dict) -> "Config":
        cfg = Config()
        for key, value in d.items():
            if not hasattr(cfg, key):
                raise ProjectError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        return cfg

    def with_env_overrides(self) -> "Config":
        cfg = Config(**asdict(self))
        if os.environ.get(ENV_SEED):
            cfg.seed = int(os.environ[ENV_SEED])
        if os.environ.get(ENV_PORT):
            cfg.serve_port = int(os.environ[ENV_PORT])
        return cfg


@dataclass
class ImageEntry:
    id: str
    path: str  # relative to the project directory
    width: int
    height: int

    @property
    def size(self) -> ImageSize:
        return ImageSize(self.width, self.height)


@dataclass
class SolutionRecord:
    """Persisted two-view solution of one image pair."""

    F: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    R: np.ndarray
    inlier_ids: list[int]
    method: str = "manual"

    def validate(self) -> None:
        if abs(np.linalg.norm(self.F) - 1.0) > 1e-9:
            raise ProjectError("stored F is not Frobenius-normalized")
        if np.linalg.svd(self.F, compute_uv=False)[2] > 1e-9:
            raise ProjectError("stored F is not rank-2")
        if np.linalg.norm(self.R.T @ self.R - np.eye(3)) > 1e-9:
            raise ProjectError("stored R is not orthonormal")
        for e in (self.e1, self.e2):
            if abs(np.linalg.norm(e) - 1.0) > 1e-9:
                raise ProjectError("stored epipole is not unit length")


@dataclass
class RigRecord:
    """Persisted planar rig over an ordered subset of project images."""

    image_ids: list[str]
    thetas: np.ndarray
    centers: np.ndarray


@dataclass
class PointRecord:
    """Persisted triangulated track."""

    track_id: int
    P: np.ndarray
    ranges: dict[str, float]
    rms_residual: float
    accepted: bool
    color: tuple[int, int, int]
    observations: dict[str, tuple[float, float]]


def pair_key(a: str, b: str) -> str:
    if a == b:
        raise ProjectError("a pair needs two distinct images")
    return f"{a}|{b}" if a < b else f"{b}|{a}"


class Project:
    """Mutable project state bound to a directory."""

    def __init__(self, directory: str | Path, config: Config | None = None):
        self.dir = Path(directory)
        self.config = config or Config()
        self.images: dict[str, ImageEntry] = {}
        self.correspondences: dict[str, list[Correspondence]] = {}
        self.solutions: dict[str, SolutionRecord] = {}
        self.rig: RigRecord | None = None
        self.points: list[PointRecord] = []
        self.dense_index: dict[str, dict[str, str]] = {}
        self._next_corr_id: dict[str, int] = {}
        self._image_cache: dict[str, EquirectImage] = {}

    # -- lifecycle -----------------------------------------------------------

    @staticmethod
    def init(directory: str | Path, config: Config | None = None) -> "Project":
        directory = Path(directory)
        if (directory / PROJECT_FILE).exists():
            raise ProjectError(f"project already exists at {directory}")
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "images").mkdir(exist_ok=True)
        proj = Project(directory, config)
        proj.save()
        return proj

    @staticmethod
    def load(directory: str | Path) -> "Project":
        directory = Path(directory)
        path = directory / PROJECT_FILE
        if not path.exists():
            raise ProjectError(f"no {PROJECT_FILE} in {directory}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ProjectError(f"corrupt project file: {exc}") from exc

        proj = Project(directory, Config.from_dict(doc.get("config", {})))
        for rec in doc.get("images", []):
            entry = ImageEntry(**rec)
            if not (directory / entry.path).exists():
                raise ProjectError(f"referenced image missing: {entry.path}")
            proj.images[entry.id] = entry
        for key, recs in doc.get("correspondences", {}).items():
            a, b = key.split("|")
            proj.correspondences[key] = [
                Correspondence(image_a=a, image_b=b, **rec) for rec in recs
            ]
            proj._next_corr_id[key] = 1 + max(
                (c.id or 0 for c in proj.correspondences[key]), default=-1
            )
        for key, rec in doc.get("solutions", {}).items():
            sol = SolutionRecord(
                F=np.array(rec["F"]),
                e1=np.array(rec["e1"]),
                e2=np.array(rec["e2"]),
                R=np.array(rec["R"]),
                inlier_ids=list(rec["inlier_ids"]),
                method=rec.get("method", "manual"),
            )
            sol.validate()
            proj.solutions[key] = sol
        if doc.get("rig") is not None:
            rig = doc["rig"]
            proj.rig = RigRecord(
                image_ids=list(rig["image_ids"]),
                thetas=np.array(rig["thetas"]),
                centers=np.array(rig["centers"]),
            )
        for rec in doc.get("points", []):
            proj.points.append(
                PointRecord(
                    track_id=rec["track_id"],
                    P=np.array(rec["P"]),
                    ranges={k: float(v) for k, v in rec["ranges"].items()},
                    rms_residual=rec["rms_residual"],
                    accepted=rec["accepted"],
                    color=tuple(rec["color"]),
                    observations={
                        k: (float(v[0]), float(v[1]))
                        for k, v in rec["observations"].items()
                    },
                )
            )
        proj.dense_index = {
            k: dict(v) for k, v in doc.get("dense", {}).items()
        }
        return proj

    def to_document(self) -> dict:
        doc: dict = {
            "version": 1,
            "config": asdict(self.config),
            "images": [asdict(e) for e in sorted(self.images.values(), key=lambda e: e.id)],
            "correspondences": {},
            "solutions": {},
            "rig": None,
            "points": [],
            "dense": {k: dict(sorted(v.items())) for k, v in sorted(self.dense_index.items())},
        }
        for key in sorted(self.correspondences):
            doc["correspondences"][key] = [
                {
                    "xa": c.xa, "ya": c.ya, "xb": c.xb, "yb": c.yb,
                    "source": c.source, "residual": c.residual, "id": c.id,
                }
                for c in self.correspondences[key]
            ]
        for key in sorted(self.solutions):
            sol = self.solutions[key]
            doc["solutions"][key] = {
                "F": sol.F.tolist(),
                "e1": sol.e1.tolist(),
                "e2": sol.e2.tolist(),
                "R": sol.R.tolist(),
                "inlier_ids": list(sol.inlier_ids),
                "method": sol.method,
            }
        if self.rig is not None:
            doc["rig"] = {
                "image_ids": self.rig.image_ids,
                "thetas": self.rig.thetas.tolist(),
                "centers": self.rig.centers.tolist(),
            }
        for p in self.points:
            doc["points"].append(
                {
                    "track_id": p.track_id,
                    "P": p.P.tolist(),
                    "ranges": dict(sorted(p.ranges.items())),
                    "rms_residual": p.rms_residual,
                    "accepted": p.accepted,
                    "color": list(p.color),
                    "observations": {
                        k: [v[0], v[1]] for k, v in sorted(p.observations.items())
                    },
                }
            )
        return doc

    def save(self) -> None:
        _atomic_write_json(self.dir / PROJECT_FILE, self.to_document())

    def save_poses(self) -> Path:
        """Write the rig poses file (one entry per registered camera)."""
        if self.rig is None:
            raise ProjectError("no rig registered yet")
        doc = {
            "cameras": [
                {
                    "image_id": image_id,
                    "theta": float(self.rig.thetas[i]),
                    "center": self.rig.centers[i].tolist(),
                }
                for i, image_id in enumerate(self.rig.image_ids)
            ]
        }
        path = self.dir / POSES_FILE
        _atomic_write_json(path, doc)
        return path

    # -- content -------------------------------------------------------------

    def add_image(self, source: str | Path, image_id: str | None = None) -> ImageEntry:
        source = Path(source)
        image_id = image_id or source.stem
        if image_id in self.images:
            raise ProjectError(f"image id {image_id!r} already present")
        img = EquirectImage.load(source)
        rel = Path("images") / f"{image_id}.png"
        img.save(self.dir / rel)
        entry = ImageEntry(
            id=image_id, path=str(rel), width=img.size.width, height=img.size.height
        )
        self.images[image_id] = entry
        return entry

    def image(self, image_id: str) -> EquirectImage:
        if image_id not in self.images:
            raise UnknownImageId(f"unknown image {image_id!r}")
        if image_id not in self._image_cache:
            self._image_cache[image_id] = EquirectImage.load(
                self.dir / self.images[image_id].path
            )
        return self._image_cache[image_id]

    def image_sizes(self) -> dict[str, ImageSize]:
        return {i: e.size for i, e in self.images.items()}

    def require_images(self, *ids: str) -> None:
        for image_id in ids:
            if image_id not in self.images:
                raise UnknownImageId(f"unknown image {image_id!r}")

    def add_correspondence(self, corr: Correspondence) -> Correspondence:
        """Store a correspondence under the normalized pair key."""
        self.require_images(corr.image_a, corr.image_b)
        key = pair_key(corr.image_a, corr.image_b)
        if corr.image_a > corr.image_b:
            corr = Correspondence(
                image_a=corr.image_b, image_b=corr.image_a,
                xa=corr.xb, ya=corr.yb, xb=corr.xa, yb=corr.ya,
                source=corr.source, residual=corr.residual,
            )
        nxt = self._next_corr_id.get(key, 0)
        corr.id = nxt
        self._next_corr_id[key] = nxt + 1
        self.correspondences.setdefault(key, []).append(corr)
        return corr

    def pair_correspondences(self, a: str, b: str) -> list[Correspondence]:
        return self.correspondences.get(pair_key(a, b), [])


def _json_default(obj):
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _atomic_write_json(path: Path, doc: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(
        json.dumps(doc, indent=2, sort_keys=False, default=_json_default) + "\n",
        encoding="utf-8",
    )
    os.replace(tmp, path)
