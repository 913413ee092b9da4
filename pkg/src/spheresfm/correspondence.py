"""Correspondence management: cube mapping, match import, pool augmentation.

Manual annotations are the trusted ground truth; externally detected
matches are imported, filtered against the estimated fundamental matrix,
and merged into the pool. Tracks across N images are assembled by
transitive closure of pairwise correspondences.

Cube-face conventions (see docs/FORMATS.md): +Z is the panorama's top
pole; each face spans a 90-degree field of view centered on its axis with
v increasing downward. Face pixel (u, v) in [0, S] maps to the bearing
normalize(forward + (2u/S - 1) * right + (2v/S - 1) * down).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ParseError, UnknownImageId
from .registration import Track
from .sphere_cam import (
    EquirectImage,
    ImageSize,
    bearing_to_pixel,
    pixel_to_bearing,
    sample_bilinear,
)

FACE_IDS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")

# forward, right, down triads; right-handed with right x down = forward.
_FACE_FRAMES: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {
    "+X": (np.array([1.0, 0, 0]), np.array([0, -1.0, 0]), np.array([0, 0, -1.0])),
    "-X": (np.array([-1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, -1.0])),
    "+Y": (np.array([0, 1.0, 0]), np.array([1.0, 0, 0]), np.array([0, 0, -1.0])),
    "-Y": (np.array([0, -1.0, 0]), np.array([-1.0, 0, 0]), np.array([0, 0, -1.0])),
    "+Z": (np.array([0, 0, 1.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0])),
    "-Z": (np.array([0, 0, -1.0]), np.array([1.0, 0, 0]), np.array([0, -1.0, 0])),
}

DUPLICATE_RADIUS_PX = 1.0


@dataclass
class Correspondence:
    """One annotated or detected point pair between two panoramas."""

    image_a: str
    image_b: str
    xa: float
    ya: float
    xb: float
    yb: float
    source: str = "manual"  # manual | imported | augmented
    residual: float | None = None
    id: int | None = None

    def __post_init__(self) -> None:
        if self.image_a == self.image_b:
            raise ValueError("correspondence must link two distinct images")
        if self.source not in ("manual", "imported", "augmented"):
            raise ValueError(f"unknown source {self.source!r}")


@dataclass
class CubeFaceSet:
    """Six square faces resampled from one panorama."""

    faces: dict[str, np.ndarray]
    face_size: int
    source_id: str = ""

    def __post_init__(self) -> None:
        if set(self.faces) != set(FACE_IDS):
            raise ValueError("expected exactly the six canonical faces")
        if self.face_size < 1:
            raise ValueError("face_size must be >= 1")


# ---------------------------------------------------------------------------
# Cube mapping
# ---------------------------------------------------------------------------


def face_pixel_to_bearing(face: str, u, v, face_size: int) -> np.ndarray:
    """Bearing of continuous face coordinates (u, v) in [0, face_size]."""
    fwd, right, down = _FACE_FRAMES[face]
    a = 2.0 * np.asarray(u, dtype=np.float64) / face_size - 1.0
    b = 2.0 * np.asarray(v, dtype=np.float64) / face_size - 1.0
    d = fwd + a[..., None] * right + b[..., None] * down
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def bearing_to_face(bearing) -> tuple:
    """Dominant-axis face id and normalized face coordinates of a bearing.

    Returns (face, u, v) with u, v in face-pixel units per unit face size;
    multiply by face_size for pixels. Ties on the cube edge resolve to the
    axis-order (+X, -X, +Y, -Y, +Z, -Z) first maximum.
    """
    b = np.asarray(bearing, dtype=np.float64)
    axes = np.stack([b[..., 0], -b[..., 0], b[..., 1], -b[..., 1], b[..., 2], -b[..., 2]], axis=-1)
    face_idx = np.argmax(axes, axis=-1)

    def _coords(face: str, vec: np.ndarray) -> tuple[float, float]:
        fwd, right, down = _FACE_FRAMES[face]
        t = 1.0 / float(vec @ fwd)
        p = vec * t
        return (float(p @ right) + 1.0) / 2.0, (float(p @ down) + 1.0) / 2.0

    if b.ndim == 1:
        face = FACE_IDS[int(face_idx)]
        u, v = _coords(face, b)
        return face, u, v
    flat = b.reshape(-1, 3)
    idx = np.asarray(face_idx).reshape(-1)
    faces = [FACE_IDS[int(k)] for k in idx]
    uv = np.array([_coords(f, vec) for f, vec in zip(faces, flat)])
    return faces, uv[:, 0].reshape(b.shape[:-1]), uv[:, 1].reshape(b.shape[:-1])


def equirect_to_cubemap(img: EquirectImage, face_size: int, source_id: str = "") -> CubeFaceSet:
    """Resample the panorama onto six perspective cube faces."""
    faces: dict[str, np.ndarray] = {}
    idx = np.arange(face_size) + 0.5
    uu, vv = np.meshgrid(idx, idx)  # uu varies along columns, vv along rows
    for face in FACE_IDS:
        bearings = face_pixel_to_bearing(face, uu, vv, face_size)
        x, y = bearing_to_pixel(bearings, img.size)
        rgb = sample_bilinear(img, x - 0.5, y - 0.5)
        faces[face] = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return CubeFaceSet(faces=faces, face_size=face_size, source_id=source_id)


def cubeface_to_equirect(
    face: str, u, v, face_size: int, size: ImageSize
):
    """Map continuous face coordinates back to equirect pixel coordinates."""
    return bearing_to_pixel(face_pixel_to_bearing(face, u, v, face_size), size)


def equirect_to_cubeface(x, y, size: ImageSize, face_size: int) -> tuple:
    """Inverse of :func:`cubeface_to_equirect` for round-trip checks."""
    face, u, v = bearing_to_face(pixel_to_bearing(x, y, size))
    if isinstance(face, str):
        return face, u * face_size, v * face_size
    return face, np.asarray(u) * face_size, np.asarray(v) * face_size


# ---------------------------------------------------------------------------
# Match import and augmentation
# ---------------------------------------------------------------------------


def import_matches(
    path: str | Path, images: Mapping[str, ImageSize]
) -> list[Correspondence]:
    """Parse a line-delimited JSON matches file into correspondences.

    Records carrying a face id have face-local coordinates and are
    converted to equirect coordinates on ingest (requires ``face_size``).
    See docs/FORMATS.md for the schema.

    Raises:
        ParseError: malformed record, with the 1-based line number.
        UnknownImageId: record referencing an unregistered image.
    """
    out: list[Correspondence] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                image_a = str(rec["image_a"])
                image_b = str(rec["image_b"])
                xa, ya = float(rec["xa"]), float(rec["ya"])
                xb, yb = float(rec["xb"]), float(rec["yb"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"line {lineno}: missing or invalid field ({exc})") from exc
            for image_id in (image_a, image_b):
                if image_id not in images:
                    raise UnknownImageId(f"line {lineno}: unknown image {image_id!r}")

            face_a = rec.get("face_a")
            face_b = rec.get("face_b")
            if face_a is not None or face_b is not None:
                face_size = rec.get("face_size")
                if not isinstance(face_size, int) or face_size < 1:
                    raise ParseError(
                        f"line {lineno}: face coordinates require integer face_size"
                    )
                if face_a is not None:
                    if face_a not in FACE_IDS:
                        raise ParseError(f"line {lineno}: unknown face id {face_a!r}")
                    xa, ya = cubeface_to_equirect(
                        face_a, xa, ya, face_size, images[image_a]
                    )
                    xa, ya = float(xa), float(ya)
                if face_b is not None:
                    if face_b not in FACE_IDS:
                        raise ParseError(f"line {lineno}: unknown face id {face_b!r}")
                    xb, yb = cubeface_to_equirect(
                        face_b, xb, yb, face_size, images[image_b]
                    )
                    xb, yb = float(xb), float(yb)

            out.append(
                Correspondence(
                    image_a=image_a,
                    image_b=image_b,
                    xa=xa,
                    ya=ya,
                    xb=xb,
                    yb=yb,
                    source="imported",
                )
            )
    return out


def _is_duplicate(c: Correspondence, others: Iterable[Correspondence]) -> bool:
    for o in others:
        if (
            abs(c.xa - o.xa) <= DUPLICATE_RADIUS_PX
            and abs(c.ya - o.ya) <= DUPLICATE_RADIUS_PX
            and abs(c.xb - o.xb) <= DUPLICATE_RADIUS_PX
            and abs(c.yb - o.yb) <= DUPLICATE_RADIUS_PX
        ):
            return True
    return False


def pool_bearings(
    pool: Iterable[Correspondence], sizes: Mapping[str, ImageSize]
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked unit bearings (z1s, z2s) for a list of correspondences."""
    pool = list(pool)
    if not pool:
        return np.zeros((0, 3)), np.zeros((0, 3))
    z1 = np.array([pixel_to_bearing(c.xa, c.ya, sizes[c.image_a]) for c in pool])
    z2 = np.array([pixel_to_bearing(c.xb, c.yb, sizes[c.image_b]) for c in pool])
    return z1, z2


def augment_pool(
    manual: list[Correspondence],
    imported: list[Correspondence],
    F: np.ndarray,
    epsilon: float,
    sizes: Mapping[str, ImageSize],
) -> list[Correspondence]:
    """Merge F-consistent imported matches into the manual pool.

    Keeps every manual record, admits imported records with epipolar
    residual < epsilon (relabeled ``augmented``), records the residual on
    each output record, and drops duplicates within 1 px on both sides,
    always keeping the manual one. Idempotent.
    """
    from .epipolar import epipolar_residuals

    out: list[Correspondence] = []
    for c in manual:
        z1, z2 = pool_bearings([c], sizes)
        res = float(epipolar_residuals(z1, z2, F)[0])
        out.append(
            Correspondence(
                c.image_a, c.image_b, c.xa, c.ya, c.xb, c.yb,
                source=c.source, residual=res, id=c.id,
            )
        )
    if not imported:
        return out

    z1s, z2s = pool_bearings(imported, sizes)
    residuals = epipolar_residuals(z1s, z2s, F)
    admitted: list[Correspondence] = []
    for c, res in zip(imported, residuals):
        if res >= epsilon:
            continue
        if _is_duplicate(c, out) or _is_duplicate(c, admitted):
            continue
        admitted.append(
            Correspondence(
                c.image_a, c.image_b, c.xa, c.ya, c.xb, c.yb,
                source="augmented", residual=float(res), id=c.id,
            )
        )
    return out + admitted


# ---------------------------------------------------------------------------
# Track assembly
# ---------------------------------------------------------------------------


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict = {}

    def find(self, x):
        root = x
        while self.parent.setdefault(root, root) != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root


def build_tracks(correspondences: Iterable[Correspondence]) -> list[Track]:
    """Assemble multi-image tracks by transitive closure.

    Observations are keyed by (image id, exact coordinates); edges are
    processed in canonical sorted order so the partition is independent of
    input ordering. An edge whose union would put two distinct points of
    one image into the same track is skipped and both fragments are
    flagged inconsistent. Fragments with fewer than 2 observations are
    dropped.
    """
    edges = sorted(
        correspondences,
        key=lambda c: (c.image_a, c.image_b, c.xa, c.ya, c.xb, c.yb),
    )
    uf = _UnionFind()
    # Per-root observation maps image id -> (x, y); merged on union.
    members: dict = {}
    flagged: set = set()

    def node_obs(node):
        image, x, y = node
        return {image: (x, y)}

    for c in edges:
        na = (c.image_a, c.xa, c.ya)
        nb = (c.image_b, c.xb, c.yb)
        ra, rb = uf.find(na), uf.find(nb)
        if ra not in members:
            members[ra] = node_obs(na)
        if rb not in members:
            members[rb] = node_obs(nb)
        if ra == rb:
            continue
        obs_a, obs_b = members[ra], members[rb]
        conflict = any(
            img in obs_a and obs_a[img] != pt for img, pt in obs_b.items()
        )
        if conflict:
            flagged.add(ra)
            flagged.add(rb)
            continue
        # Merge smaller into larger for balance.
        if len(obs_a) < len(obs_b):
            ra, rb = rb, ra
            obs_a, obs_b = obs_b, obs_a
        uf.parent[rb] = ra
        obs_a.update(obs_b)
        members[ra] = obs_a
        if rb in flagged:
            flagged.discard(rb)
            flagged.add(ra)
        del members[rb]

    tracks = []
    for root in sorted(members, key=lambda r: (str(r[0]), r[1], r[2])):
        obs = members[root]
        if len(obs) < 2:
            continue
        tracks.append(
            Track(
                point_id=len(tracks),
                observations=dict(sorted(obs.items())),
                consistent=root not in flagged,
            )
        )
    return tracks
