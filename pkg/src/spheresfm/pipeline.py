"""Pipeline orchestration over a project: the steps behind the CLI verbs
and the HTTP API. Every step reads committed project state, computes, then
mutates in memory; callers persist with project.save() so failed steps
never clobber previous valid state.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import correspondence as corr_mod
from .correspondence import Correspondence, build_tracks, pool_bearings
from .epipolar import (
    RansacParams,
    TwoViewSolution,
    epipolar_curve,
    epipolar_residuals,
    epipoles_from_F,
    estimate_F_linear,
    estimate_F_ransac,
    resolve_signs,
)
from .errors import InsufficientPairs, PrerequisiteMissing, ProjectError
from .ply import write_ply
from .project import PointRecord, Project, RigRecord, SolutionRecord, pair_key
from .rectify import (
    DisparityMap,
    DisparityParams,
    RectifiedPair,
    compute_disparity,
    dense_cloud,
    read_pfm,
    rectification_rotations,
    rectify_pair,
    save_disparity,
)
from .registration import (
    PairEstimate,
    PlanarRig,
    estimate_positions,
    estimate_rotations,
    refine_positions,
    triangulate_multiview,
)
from .sphere_cam import ImageSize, pixel_to_bearing

logger = logging.getLogger(__name__)

ACTIVE_SOURCES = ("manual", "augmented")


def active_pool(project: Project, a: str, b: str) -> list[Correspondence]:
    """Manual plus augmented correspondences of a pair, in stored order."""
    return [
        c for c in project.pair_correspondences(a, b) if c.source in ACTIVE_SOURCES
    ]


def imported_pool(project: Project, a: str, b: str) -> list[Correspondence]:
    return [
        c for c in project.pair_correspondences(a, b) if c.source == "imported"
    ]


def import_matches_file(project: Project, a: str, b: str, path: str | Path) -> int:
    """Ingest an external matches file for one pair; returns record count."""
    project.require_images(a, b)
    records = corr_mod.import_matches(path, project.image_sizes())
    count = 0
    for rec in records:
        if {rec.image_a, rec.image_b} != {a, b}:
            raise ProjectError(
                f"record links {rec.image_a}/{rec.image_b}, expected {a}/{b}"
            )
        project.add_correspondence(rec)
        count += 1
    return count


def estimate_pair(
    project: Project, a: str, b: str, method: str = "manual"
) -> SolutionRecord:
    """Estimate F, epipoles, and R for one pair and store the solution.

    method "manual": eight-point fit on manual annotations only (the
    default workflow; hand-picked points are trusted). method "ransac":
    robust fit over the full pool including raw imported matches.
    """
    project.require_images(a, b)
    key = pair_key(a, b)
    a, b = key.split("|")
    sizes = project.image_sizes()

    if method == "manual":
        pool = [c for c in project.pair_correspondences(a, b) if c.source == "manual"]
        if len(pool) < 8:
            raise InsufficientPairs(
                f"pair {key}: {len(pool)} manual correspondences, need >= 8"
            )
        z1s, z2s = pool_bearings(pool, sizes)
        F = estimate_F_linear(z1s, z2s)
        mask = np.ones(len(pool), dtype=bool)
    elif method == "ransac":
        pool = list(project.pair_correspondences(a, b))
        if len(pool) < 8:
            raise InsufficientPairs(f"pair {key}: {len(pool)} correspondences, need >= 8")
        z1s, z2s = pool_bearings(pool, sizes)
        cfg = project.config
        params = RansacParams(
            threshold=cfg.ransac_threshold,
            max_iterations=cfg.ransac_max_iterations,
            seed=cfg.seed,
            min_inliers=cfg.ransac_min_inliers,
        )
        F, mask = estimate_F_ransac(z1s, z2s, params)
    else:
        raise ProjectError(f"unknown estimation method {method!r}")

    e1, e2 = epipoles_from_F(F)
    resolved = resolve_signs(e1, e2, z1s[mask], z2s[mask])
    record = SolutionRecord(
        F=F,
        e1=resolved.e1,
        e2=resolved.e2,
        R=resolved.R,
        inlier_ids=[c.id for c, m in zip(pool, mask) if m and c.id is not None],
        method=method,
    )
    project.solutions[key] = record
    return record


def augment(project: Project, a: str, b: str, epsilon: float | None = None) -> int:
    """Filter imported matches through the stored F and merge survivors.

    Returns the number of newly admitted (augmented) correspondences.
    """
    key = pair_key(a, b)
    a, b = key.split("|")
    if key not in project.solutions:
        raise PrerequisiteMissing(f"pair {key}: estimate F before augmenting")
    eps = project.config.filter_epsilon if epsilon is None else epsilon
    sizes = project.image_sizes()
    pool = project.pair_correspondences(a, b)
    kept = [c for c in pool if c.source in ACTIVE_SOURCES]
    imported = [c for c in pool if c.source == "imported"]
    merged = corr_mod.augment_pool(
        kept, imported, project.solutions[key].F, eps, sizes
    )
    n_new = len(merged) - len(kept)
    project.correspondences[key] = merged + imported
    return n_new


def solution_as_two_view(record: SolutionRecord) -> TwoViewSolution:
    return TwoViewSolution(
        F=record.F,
        e1=record.e1,
        e2=record.e2,
        R=record.R,
        inlier_mask=np.array([]),
    )


# ---------------------------------------------------------------------------
# Registration and triangulation
# ---------------------------------------------------------------------------


def register(project: Project) -> RigRecord:
    """Recover the planar rig: rotations, positions, refinement.

    Solves any still-unsolved pair that has at least 8 active
    correspondences, then feeds all pairwise epipoles to the planar
    registration chain. The camera order is the sorted image id list.
    """
    image_ids = sorted(project.images)
    if len(image_ids) < 2:
        raise PrerequisiteMissing("register needs at least two images")
    index = {image_id: i for i, image_id in enumerate(image_ids)}

    pairs: list[PairEstimate] = []
    for i, a in enumerate(image_ids):
        for b in image_ids[i + 1:]:
            key = pair_key(a, b)
            if key not in project.solutions:
                if len(active_pool(project, a, b)) >= 8:
                    estimate_pair(project, a, b)
                else:
                    continue
            sol = project.solutions[key]
            pairs.append(
                PairEstimate(
                    i=index[a],
                    j=index[b],
                    e_ij=sol.e1,
                    e_ji=sol.e2,
                    weight=float(max(len(sol.inlier_ids), 1)),
                )
            )
    if not pairs:
        raise PrerequisiteMissing("no pair solutions available; annotate and solve first")

    thetas = estimate_rotations(pairs, len(image_ids), seed=project.config.seed)
    centers = estimate_positions(thetas, pairs)
    centers = refine_positions(centers, thetas, pairs)
    rig = RigRecord(image_ids=image_ids, thetas=thetas, centers=centers)
    project.rig = rig
    return rig


def triangulate(project: Project) -> list[PointRecord]:
    """Build tracks from the active pools and triangulate them on the rig."""
    if project.rig is None:
        raise PrerequisiteMissing("run register before triangulate")
    rig = PlanarRig(project.rig.thetas, project.rig.centers)
    index = {image_id: i for i, image_id in enumerate(project.rig.image_ids)}
    sizes = project.image_sizes()

    all_active: list[Correspondence] = []
    for key in sorted(project.correspondences):
        a, b = key.split("|")
        all_active.extend(active_pool(project, a, b))
    tracks = build_tracks(all_active)

    points: list[PointRecord] = []
    for track in tracks:
        if not track.consistent:
            logger.warning("track %d is inconsistent; skipping", track.point_id)
            continue
        point = triangulate_multiview(track, rig, sizes, camera_index=index)
        first_id = sorted(track.observations)[0]
        x, y = track.observations[first_id]
        rgb = project.image(first_id).pixels[
            min(int(y), sizes[first_id].height - 1) ,
            min(int(x), sizes[first_id].width - 1),
        ]
        points.append(
            PointRecord(
                track_id=track.point_id,
                P=point.P,
                ranges={str(k): v for k, v in point.ranges.items()},
                rms_residual=point.rms_residual,
                accepted=point.accepted,
                color=(int(rgb[0]), int(rgb[1]), int(rgb[2])),
                observations={str(k): v for k, v in track.observations.items()},
            )
        )
    project.points = points
    return points


# ---------------------------------------------------------------------------
# Dense pipeline
# ---------------------------------------------------------------------------


def _dense_dir(project: Project) -> Path:
    path = project.dir / "dense"
    path.mkdir(exist_ok=True)
    return path


def rectify(project: Project, a: str, b: str, rect_width: int | None = None) -> RectifiedPair:
    """Rectify a solved pair and persist the rasters."""
    key = pair_key(a, b)
    a, b = key.split("|")
    if key not in project.solutions:
        raise PrerequisiteMissing(f"pair {key}: estimate F before rectification")
    width = rect_width or project.config.rect_width
    rect_size = ImageSize(width, width // 2)
    pair = rectify_pair(
        project.image(a), project.image(b),
        solution_as_two_view(project.solutions[key]),
        rect_size,
    )
    dense = _dense_dir(project)
    tag = key.replace("|", "_")
    p1 = dense / f"{tag}_rect1.png"
    p2 = dense / f"{tag}_rect2.png"
    PILImage.fromarray(pair.rect1, mode="RGB").save(p1)
    PILImage.fromarray(pair.rect2, mode="RGB").save(p2)
    entry = project.dense_index.setdefault(key, {})
    entry["rect1"] = str(p1.relative_to(project.dir))
    entry["rect2"] = str(p2.relative_to(project.dir))
    entry["rect_width"] = str(width)
    return pair


def load_rectified(project: Project, a: str, b: str) -> RectifiedPair:
    key = pair_key(a, b)
    a, b = key.split("|")
    entry = project.dense_index.get(key)
    if not entry or "rect1" not in entry:
        raise PrerequisiteMissing(f"pair {key}: run rectify first")
    rect1 = np.asarray(PILImage.open(project.dir / entry["rect1"]).convert("RGB"))
    rect2 = np.asarray(PILImage.open(project.dir / entry["rect2"]).convert("RGB"))
    width = int(entry["rect_width"])
    sol = project.solutions[key]
    R_rect1, R_rect2 = rectification_rotations(sol.e1, sol.R)
    return RectifiedPair(
        rect1=rect1,
        rect2=rect2,
        R_rect1=R_rect1,
        R_rect2=R_rect2,
        rect_size=ImageSize(width, width // 2),
    )


def disparity(project: Project, a: str, b: str):
    """Compute and persist the disparity map of a rectified pair."""
    key = pair_key(a, b)
    pair = load_rectified(project, a, b)
    cfg = project.config
    params = DisparityParams(
        window=cfg.disparity_window,
        d_min=cfg.disparity_min,
        d_max=cfg.disparity_max,
        ncc_floor=cfg.ncc_floor,
        lr_tolerance=cfg.lr_tolerance,
        epipole_margin=cfg.epipole_margin,
    )
    disp = compute_disparity(pair, params)
    dense = _dense_dir(project)
    tag = key.replace("|", "_")
    pfm = dense / f"{tag}_disparity.pfm"
    preview = dense / f"{tag}_disparity.png"
    mask = dense / f"{tag}_disparity_mask.png"
    save_disparity(disp, pfm, preview, mask)
    entry = project.dense_index.setdefault(key, {})
    entry["pfm"] = str(pfm.relative_to(project.dir))
    entry["preview"] = str(preview.relative_to(project.dir))
    entry["mask"] = str(mask.relative_to(project.dir))
    return disp


def load_disparity(project: Project, a: str, b: str):
    key = pair_key(a, b)
    entry = project.dense_index.get(key)
    if not entry or "pfm" not in entry:
        raise PrerequisiteMissing(f"pair {key}: run disparity first")
    d = read_pfm(project.dir / entry["pfm"])
    valid = np.asarray(PILImage.open(project.dir / entry["mask"])) > 0
    return DisparityMap(
        d=d, valid=valid, radians_per_pixel=float(np.pi / d.shape[1])
    )


def baseline_length(project: Project, a: str, b: str) -> float:
    """Baseline in rig units when both cameras are registered, else 1."""
    if project.rig is not None:
        ids = project.rig.image_ids
        if a in ids and b in ids:
            ca = project.rig.centers[ids.index(a)]
            cb = project.rig.centers[ids.index(b)]
            return float(np.linalg.norm(cb - ca))
    return 1.0


def dense(project: Project, a: str, b: str) -> Path:
    """Back-project the disparity map and export the dense colored PLY."""
    key = pair_key(a, b)
    a, b = key.split("|")
    pair = load_rectified(project, a, b)
    disp = load_disparity(project, a, b)
    cloud = dense_cloud(disp, pair, T=baseline_length(project, a, b))
    dense_path = _dense_dir(project) / f"{key.replace('|', '_')}_cloud.ply"
    write_ply(dense_path, cloud.points, cloud.colors)
    entry = project.dense_index.setdefault(key, {})
    entry["ply"] = str(dense_path.relative_to(project.dir))
    return dense_path


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_sparse_ply(project: Project, path: str | Path) -> Path:
    points = [p for p in project.points if p.accepted]
    if not points:
        raise PrerequisiteMissing("no triangulated points; run triangulate first")
    coords = np.array([p.P for p in points])
    colors = np.array([p.color for p in points], dtype=np.uint8)
    write_ply(path, coords, colors)
    return Path(path)


def epipolar_curve_for_pair(
    project: Project, a: str, b: str, x: float, y: float, n_samples: int = 256
):
    """Polyline segments in the other image for a click in image a.

    The stored solution's F follows the normalized pair order; when the
    query image is the lexicographically larger one the constraint is
    queried through F transposed.
    """
    key = pair_key(a, b)
    if key not in project.solutions:
        raise PrerequisiteMissing(f"pair {key}: no solution yet")
    first, second = key.split("|")
    sol = project.solutions[key]
    z = pixel_to_bearing(x, y, project.images[a].size)
    if a == first:
        return epipolar_curve(sol.F, z, project.images[second].size, n_samples)
    return epipolar_curve(sol.F.T, z, project.images[first].size, n_samples)
