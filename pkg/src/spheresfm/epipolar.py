"""Two-view epipolar geometry on the unit sphere.

Bearing pairs (z1, z2) from two panoramas satisfy z1^T F z2 = 0 where
F = [T]x R^{-1}, T is the camera-2 center in camera-1 coordinates and R
maps camera-1 (world) directions into the camera-2 frame. Everything here
works directly on unit bearings, so no coordinate normalization is needed
before the linear solve.

Functions operating on many correspondences take stacked arrays z1s, z2s
of shape (N, 3).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousCheirality,
    DegenerateConfiguration,
    DegenerateCurve,
    InsufficientPairs,
    NoConsensus,
    ParallelRays,
    RankDeficient,
)
from .sphere_cam import ImageSize, bearing_to_pixel

logger = logging.getLogger(__name__)

MIN_PAIRS = 8


@dataclass
class RansacParams:
    """Knobs for robust F estimation; deterministic for a fixed seed."""

    threshold: float = 0.01
    max_iterations: int = 2000
    seed: int = 0
    min_inliers: int = 12

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class ResolvedSigns:
    """Epipole signs fixed by cheirality voting, with the implied rotation."""

    e1: np.ndarray
    e2: np.ndarray
    R: np.ndarray
    n_front: int
    mean_gap: float


@dataclass
class TwoViewSolution:
    """Estimated geometry of one panorama pair (unit baseline gauge)."""

    F: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    R: np.ndarray
    inlier_mask: np.ndarray


def skew(v) -> np.ndarray:
    """Cross-product matrix [v]x such that skew(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=np.float64)
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def fundamental_from_pose(R, T) -> np.ndarray:
    """Ground-truth F = [T]x R^{-1}, normalized like the estimators' output."""
    return normalize_F(skew(T) @ np.asarray(R, dtype=np.float64).T)


def normalize_F(m) -> np.ndarray:
    """Project onto rank 2, scale to unit Frobenius norm, canonicalize sign."""
    m = np.asarray(m, dtype=np.float64)
    u, s, vt = np.linalg.svd(m)
    f = (u * np.array([s[0], s[1], 0.0])) @ vt
    norm = np.linalg.norm(f)
    if norm < 1e-300:
        raise RankDeficient("matrix collapses to rank < 2")
    f /= norm
    if f.flat[np.argmax(np.abs(f))] < 0:
        f = -f
    return f


def epipolar_residuals(z1s, z2s, F) -> np.ndarray:
    """|z1^T F z2| per pair; zero iff the pair satisfies the constraint."""
    z1s = np.atleast_2d(np.asarray(z1s, dtype=np.float64))
    z2s = np.atleast_2d(np.asarray(z2s, dtype=np.float64))
    return np.abs(np.einsum("ni,ij,nj->n", z1s, F, z2s))


def epipolar_residual(z1, z2, F) -> float:
    """Scalar form of :func:`epipolar_residuals`."""
    return float(epipolar_residuals(z1, z2, F)[0])


def estimate_F_linear(z1s, z2s) -> np.ndarray:
    """Eight-point estimate of F from >= 8 bearing pairs.

    Builds the N x 9 homogeneous system with rows kron(z1, z2), takes the
    right singular vector of the smallest singular value, and returns it
    rank-2-projected, Frobenius-normalized, and sign-canonicalized.

    Raises:
        InsufficientPairs: fewer than 8 pairs.
        DegenerateConfiguration: the system has nullity > 1, so F is not
            uniquely determined (e.g. repeated or near-coplanar pairs).
    """
    z1s = np.asarray(z1s, dtype=np.float64)
    z2s = np.asarray(z2s, dtype=np.float64)
    n = len(z1s)
    if n < MIN_PAIRS:
        raise InsufficientPairs(f"need >= {MIN_PAIRS} pairs, got {n}")

    A = np.einsum("ni,nj->nij", z1s, z2s).reshape(n, 9)
    _, s, vt = np.linalg.svd(A)
    # Pad the spectrum to all 9 columns: with exactly 8 rows the 9th
    # singular value is implicitly zero.
    s_full = np.zeros(9)
    s_full[: len(s)] = s
    if s_full[7] < 1e-10 * max(s_full[0], 1e-300):
        raise DegenerateConfiguration("correspondences do not determine F uniquely")
    return normalize_F(vt[-1].reshape(3, 3))


def estimate_F_ransac(
    z1s, z2s, params: RansacParams
) -> tuple[np.ndarray, np.ndarray]:
    """RANSAC over 8-point samples; returns (F, inlier_mask).

    Sample indices are drawn from a generator seeded by ``params.seed`` and
    indexed by iteration, so the result is bit-reproducible and independent
    of any parallel evaluation order. The consensus-maximal model is refit
    on all of its inliers.

    Raises:
        InsufficientPairs: fewer than 8 pairs.
        NoConsensus: best inlier count below ``params.min_inliers``.
    """
    z1s = np.asarray(z1s, dtype=np.float64)
    z2s = np.asarray(z2s, dtype=np.float64)
    n = len(z1s)
    if n < MIN_PAIRS:
        raise InsufficientPairs(f"need >= {MIN_PAIRS} pairs, got {n}")

    rng = np.random.default_rng(params.seed)
    samples = np.argsort(rng.random((params.max_iterations, n)), axis=1)[:, :MIN_PAIRS]

    best_count = -1
    best_mask: np.ndarray | None = None
    for it in range(params.max_iterations):
        idx = samples[it]
        try:
            F = estimate_F_linear(z1s[idx], z2s[idx])
        except DegenerateConfiguration:
            continue
        mask = epipolar_residuals(z1s, z2s, F) < params.threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask

    if best_mask is None or best_count < max(params.min_inliers, MIN_PAIRS):
        raise NoConsensus(
            f"best consensus {max(best_count, 0)} < min_inliers {params.min_inliers}"
        )
    F = estimate_F_linear(z1s[best_mask], z2s[best_mask])
    return F, best_mask


def filter_matches_by_F(z1s, z2s, F, epsilon: float) -> np.ndarray:
    """Boolean inlier mask: residual < epsilon, order-preserving."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return epipolar_residuals(z1s, z2s, F) < epsilon


def epipoles_from_F(F) -> tuple[np.ndarray, np.ndarray]:
    """Unit epipoles (e1, e2) solving F^T e1 = 0 and F e2 = 0.

    Signs are arbitrary at this stage (canonicalized deterministically);
    use :func:`resolve_signs` to fix them.

    Raises:
        RankDeficient: F has rank < 2.
    """
    F = np.asarray(F, dtype=np.float64)
    u, s, vt = np.linalg.svd(F)
    if s[1] < 1e-10:
        raise RankDeficient("two singular values vanish; epipoles undefined")
    e1 = _canonical_sign(u[:, 2])
    e2 = _canonical_sign(vt[2])
    return e1, e2


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    return -v if v[np.argmax(np.abs(v))] < 0 else v


def rotation_from_epipoles(e1, e2) -> np.ndarray:
    """Minimal rotation R with -R @ e1 == e2.

    Uses R = I + [v]x + [v]x^2 (1-c)/s^2 with v = (-e1) x e2, s = |v|,
    c = -e1.e2. This is the unique minimal-twist rotation consistent with
    the epipole pair; the roll about the baseline is unobservable from the
    epipoles alone and is fixed to zero (planar-capture assumption).
    """
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    v = np.cross(-e1, e2)
    s = np.linalg.norm(v)
    c = float(-e1 @ e2)
    if s < 1e-9:
        if c > 0.0:
            return np.eye(3)
        # e2 == e1: rotate by pi about an axis orthogonal to e1, chosen from
        # the canonical basis vector least aligned with it.
        basis = np.zeros(3)
        basis[np.argmin(np.abs(e1))] = 1.0
        axis = np.cross(e1, basis)
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    K = skew(v)
    return np.eye(3) + K + K @ K * ((1.0 - c) / (s * s))


def triangulate_two_view(z1, z2, R, e1) -> tuple[np.ndarray, float, float, float]:
    """Midpoint triangulation of one bearing pair under unit baseline.

    Ray 1 is a*z1 from the origin; ray 2 is b*R^{-1}z2 + e1. Solves the
    2x2 normal equations of min |a z1 - b R^{-1} z2 - e1| in closed form.

    Returns:
        (P, a, b, gap): midpoint of the closest-approach segment, the two
        ray parameters, and the segment length (0 for an exact crossing).

    Raises:
        ParallelRays: the rays are parallel (point at infinity).
    """
    z1 = np.asarray(z1, dtype=np.float64)
    e1 = np.asarray(e1, dtype=np.float64)
    d2 = np.asarray(R, dtype=np.float64).T @ np.asarray(z2, dtype=np.float64)
    P, a, b, gap = _closest_point_between_rays(np.zeros(3), z1, e1, d2)
    return P, a, b, gap


def _closest_point_between_rays(o1, d1, o2, d2):
    """Closest-approach midpoint of lines o1 + a d1 and o2 + b d2 (unit dirs)."""
    if np.linalg.norm(np.cross(d1, d2)) <= 1e-9:
        raise ParallelRays("viewing rays are parallel")
    t = o2 - o1
    c = float(d1 @ d2)
    det = 1.0 - c * c
    p = float(d1 @ t)
    q = float(d2 @ t)
    a = (p - c * q) / det
    b = (c * p - q) / det
    r1 = o1 + a * d1
    r2 = o2 + b * d2
    gap = float(np.linalg.norm(r1 - r2))
    return 0.5 * (r1 + r2), a, b, gap


def resolve_signs(e1, e2, z1s, z2s) -> ResolvedSigns:
    """Fix the two independent epipole sign choices by cheirality voting.

    Each of the four candidates (+-e1, +-e2) implies a rotation; the sample
    pairs are triangulated under each and the candidate with the most
    points in front of both cameras (a > 0 and b > 0) wins. Ties fall back
    to the smaller mean triangulation gap.

    Raises:
        AmbiguousCheirality: the two leading candidates tie on both counts
            (e.g. all samples lie on the baseline).
    """
    z1s = np.atleast_2d(np.asarray(z1s, dtype=np.float64))
    z2s = np.atleast_2d(np.asarray(z2s, dtype=np.float64))
    if len(z1s) < 1:
        raise AmbiguousCheirality("no sample pairs to vote with")

    scored: list[tuple[int, float, ResolvedSigns]] = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            ee1 = s1 * np.asarray(e1, dtype=np.float64)
            ee2 = s2 * np.asarray(e2, dtype=np.float64)
            R = rotation_from_epipoles(ee1, ee2)
            n_front = 0
            gaps = []
            for z1, z2 in zip(z1s, z2s):
                try:
                    _, a, b, gap = triangulate_two_view(z1, z2, R, ee1)
                except ParallelRays:
                    continue
                if a > 0.0 and b > 0.0:
                    n_front += 1
                gaps.append(gap)
            mean_gap = float(np.mean(gaps)) if gaps else np.inf
            scored.append(
                (n_front, mean_gap, ResolvedSigns(ee1, ee2, R, n_front, mean_gap))
            )

    scored.sort(key=lambda t: (-t[0], t[1]))
    (n0, g0, best), (n1, g1, _) = scored[0], scored[1]
    if n0 == n1 and g0 == g1:
        raise AmbiguousCheirality("sign candidates tie on cheirality and gap")
    return best


def epipolar_curve(
    F, z1, size: ImageSize, n_samples: int = 256
) -> list[np.ndarray]:
    """Sample the epipolar great circle of z1 as pixel polylines in image 2.

    The constraint set {z2 : z1^T F z2 = 0} is the great circle with normal
    F^T z1. Returns evenly spaced samples converted to image-2 pixels and
    split into segments wherever the polyline crosses the horizontal wrap
    seam. Each segment is an (M, 2) array of (x, y).

    Raises:
        DegenerateCurve: z1 is the epipole, so every bearing satisfies
            the constraint.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    n = np.asarray(F, dtype=np.float64).T @ np.asarray(z1, dtype=np.float64)
    nn = np.linalg.norm(n)
    if nn < 1e-12:
        raise DegenerateCurve("query bearing is the epipole")
    n /= nn

    basis = np.zeros(3)
    basis[np.argmin(np.abs(n))] = 1.0
    u = np.cross(n, basis)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)

    t = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    circle = np.cos(t)[:, None] * u + np.sin(t)[:, None] * v
    x, y = bearing_to_pixel(circle, size)
    pts = np.column_stack([x, y])

    breaks = np.nonzero(np.abs(np.diff(x)) > size.width / 2.0)[0] + 1
    return [seg for seg in np.split(pts, breaks) if len(seg) > 0]
