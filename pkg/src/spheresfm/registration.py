"""Planar multicamera registration from pairwise epipoles.

All cameras sit on the z = 0 plane and differ only by a yaw angle, so each
rotation is a single angle theta and each center a planar point. The gauge
is theta[0] = 0, C[0] = origin, |C[1] - C[0]| = 1.

Pipeline: estimate_rotations (damped Newton on a smooth surrogate of the
epipole-antiparallelism objective) -> estimate_positions (pairwise ray
triangulation from a chosen baseline) -> refine_positions (gradient descent
over all measured directions) -> triangulate_multiview per tracked point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

from .epipolar import _closest_point_between_rays
from .errors import (
    CollinearCamera,
    DegenerateTrack,
    DisconnectedGraph,
    ParallelRays,
)
from .sphere_cam import ImageSize, pixel_to_bearing

logger = logging.getLogger(__name__)


def yaw_matrix(theta: float) -> np.ndarray:
    """World-to-camera rotation of a camera yawed by theta about +Z."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class PairEstimate:
    """Sign-resolved epipoles of one camera pair, in each camera's frame.

    e_ij points from camera i toward camera j, expressed in camera i's
    frame; e_ji the reverse. weight is the supporting inlier count.
    """

    i: int
    j: int
    e_ij: np.ndarray
    e_ji: np.ndarray
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise ValueError("pair must reference two distinct cameras")
        self.e_ij = np.asarray(self.e_ij, dtype=np.float64)
        self.e_ji = np.asarray(self.e_ji, dtype=np.float64)


@dataclass
class PlanarRig:
    """Registered rig: one yaw and one planar center per camera."""

    thetas: np.ndarray
    centers: np.ndarray

    def __post_init__(self) -> None:
        self.thetas = np.asarray(self.thetas, dtype=np.float64)
        self.centers = np.asarray(self.centers, dtype=np.float64)

    def rotation(self, i: int) -> np.ndarray:
        return yaw_matrix(float(self.thetas[i]))

    @property
    def n_cameras(self) -> int:
        return len(self.thetas)


@dataclass
class Track:
    """Observations of one scene point: camera id -> pixel (x, y)."""

    point_id: int
    observations: dict[Hashable, tuple[float, float]]
    consistent: bool = True


@dataclass
class MultiviewPoint:
    """Triangulated track: point, per-camera ranges, residual, acceptance."""

    P: np.ndarray
    ranges: dict[Hashable, float] = field(default_factory=dict)
    rms_residual: float = 0.0
    accepted: bool = True


# ---------------------------------------------------------------------------
# Rotation estimation
# ---------------------------------------------------------------------------


def _check_connected(pairs: list[PairEstimate], n_cameras: int) -> None:
    adj: dict[int, set[int]] = {i: set() for i in range(n_cameras)}
    for p in pairs:
        adj[p.i].add(p.j)
        adj[p.j].add(p.i)
    seen = {0}
    stack = [0]
    while stack:
        for k in adj[stack.pop()]:
            if k not in seen:
                seen.add(k)
                stack.append(k)
    if len(seen) != n_cameras:
        missing = sorted(set(range(n_cameras)) - seen)
        raise DisconnectedGraph(f"cameras {missing} unreachable from camera 0")


def _pair_terms(pairs: list[PairEstimate]):
    """Precompute dot(theta_i - theta_j) = a cos(psi - c0) + b per pair."""
    terms = []
    for p in pairs:
        u, v = p.e_ij, p.e_ji
        ru = float(np.hypot(u[0], u[1]))
        rv = float(np.hypot(v[0], v[1]))
        a = ru * rv
        b = float(u[2] * v[2])
        c0 = float(np.arctan2(u[1], u[0]) - np.arctan2(v[1], v[0]))
        terms.append((p.i, p.j, float(p.weight), a, b, c0))
    return terms


def _rotation_objective(thetas: np.ndarray, terms) -> float:
    total = 0.0
    for i, j, w, a, b, c0 in terms:
        dot = a * np.cos(thetas[i] - thetas[j] - c0) + b
        total += w * (1.0 - dot * dot)
    return float(total)


def _rotation_grad_hess(thetas: np.ndarray, terms, n: int):
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for i, j, w, a, b, c0 in terms:
        psi = thetas[i] - thetas[j] - c0
        dot = a * np.cos(psi) + b
        dd = -a * np.sin(psi)
        ddd = -a * np.cos(psi)
        g = -2.0 * w * dot * dd
        h = -2.0 * w * (dd * dd + dot * ddd)
        grad[i] += g
        grad[j] -= g
        hess[i, i] += h
        hess[j, j] += h
        hess[i, j] -= h
        hess[j, i] -= h
    return grad, hess


def _newton_from(
    start: np.ndarray, terms, n: int, max_iterations: int, grad_tol: float
) -> tuple[np.ndarray, float, bool]:
    """Damped Newton over the free angles theta[1:]; theta[0] pinned to 0."""
    thetas = start.copy()
    thetas[0] = 0.0
    obj = _rotation_objective(thetas, terms)
    lam = 1e-6
    converged = False
    for _ in range(max_iterations):
        grad, hess = _rotation_grad_hess(thetas, terms, n)
        g = grad[1:]
        if np.linalg.norm(g) < grad_tol:
            converged = True
            break
        H = hess[1:, 1:]
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(H + lam * np.eye(n - 1), -g)
            except np.linalg.LinAlgError:
                lam = max(lam, 1e-12) * 10.0
                continue
            cand = thetas.copy()
            cand[1:] += step
            cand_obj = _rotation_objective(cand, terms)
            if cand_obj <= obj:
                thetas, obj = cand, cand_obj
                lam = max(lam * 0.1, 1e-12)
                accepted = True
                break
            lam = max(lam, 1e-12) * 10.0
        if not accepted:
            break
    return thetas, obj, converged


def estimate_rotations(
    pairs: list[PairEstimate],
    n_cameras: int,
    *,
    max_iterations: int = 100,
    grad_tol: float = 1e-10,
    seed: int = 0,
) -> np.ndarray:
    """Recover per-camera yaw angles from pairwise epipoles.

    Minimizes sum over pairs of w * (1 - dot^2) where dot is the world-frame
    alignment of the two epipoles of a pair; the squared form is a smooth
    surrogate of 1 - |dot| with the same zero set, which keeps Newton's
    method well-defined. Multi-start (an 8-value grid per free angle up to
    3 cameras, seeded random restarts beyond) handles the nonconvexity.

    Each camera's angle carries an inherent pi ambiguity under the squared
    objective; a spanning-tree sign pass flips angles afterwards so that
    paired epipoles come out antiparallel in the world frame, matching the
    cheirality-resolved inputs.

    Raises:
        DisconnectedGraph: the pair graph does not reach every camera.
    """
    if n_cameras < 2:
        raise ValueError("need at least 2 cameras")
    _check_connected(pairs, n_cameras)
    terms = _pair_terms(pairs)
    m = n_cameras - 1

    starts = [np.zeros(n_cameras)]
    grid = np.linspace(-np.pi, np.pi, 8, endpoint=False)
    if m <= 2:
        mesh = np.meshgrid(*([grid] * m), indexing="ij")
        combos = np.stack([g.ravel() for g in mesh], axis=1)
        for row in combos:
            s = np.zeros(n_cameras)
            s[1:] = row
            starts.append(s)
    else:
        rng = np.random.default_rng(seed)
        for row in rng.uniform(-np.pi, np.pi, size=(8 * m, m)):
            s = np.zeros(n_cameras)
            s[1:] = row
            starts.append(s)

    best: tuple[np.ndarray, float, bool] | None = None
    for start in starts:
        cand = _newton_from(start, terms, n_cameras, max_iterations, grad_tol)
        if best is None or cand[1] < best[1]:
            best = cand
    assert best is not None
    thetas, obj, converged = best
    if not converged:
        logger.warning(
            "rotation refinement stopped before gradient tolerance "
            "(objective %.3e); returning best iterate",
            obj,
        )

    thetas = _fix_pi_flips(thetas, pairs)
    thetas = np.mod(thetas + np.pi, 2.0 * np.pi) - np.pi
    thetas[0] = 0.0
    return thetas


def _fix_pi_flips(thetas: np.ndarray, pairs: list[PairEstimate]) -> np.ndarray:
    """Flip angles by pi along a max-weight spanning tree so world-frame
    epipole pairs are antiparallel."""
    thetas = thetas.copy()
    edges: dict[int, list[tuple[float, int, PairEstimate]]] = {}
    for p in pairs:
        edges.setdefault(p.i, []).append((p.weight, p.j, p))
        edges.setdefault(p.j, []).append((p.weight, p.i, p))

    visited = {0}
    frontier = [0]
    while frontier:
        frontier.sort()
        node = frontier.pop(0)
        for _, other, p in sorted(
            edges.get(node, []), key=lambda t: (-t[0], t[1])
        ):
            if other in visited:
                continue
            d_node = yaw_matrix(thetas[node]).T @ (p.e_ij if p.i == node else p.e_ji)
            d_other = yaw_matrix(thetas[other]).T @ (p.e_ji if p.i == node else p.e_ij)
            if float(d_node @ d_other) > 0.0:
                thetas[other] += np.pi
            visited.add(other)
            frontier.append(other)
    return thetas


# ---------------------------------------------------------------------------
# Position estimation
# ---------------------------------------------------------------------------


def _planar_unit(v: np.ndarray) -> np.ndarray:
    """Project a direction onto the camera plane and renormalize."""
    p = np.array([v[0], v[1], 0.0])
    n = np.linalg.norm(p)
    if n < 1e-12:
        raise CollinearCamera("epipole direction is vertical; no planar direction")
    return p / n


def _world_directions(
    thetas: np.ndarray, pairs: list[PairEstimate]
) -> dict[tuple[int, int], tuple[np.ndarray, float]]:
    dirs: dict[tuple[int, int], tuple[np.ndarray, float]] = {}
    for p in pairs:
        d_ij = _planar_unit(yaw_matrix(thetas[p.i]).T @ p.e_ij)
        d_ji = _planar_unit(yaw_matrix(thetas[p.j]).T @ p.e_ji)
        dirs[(p.i, p.j)] = (d_ij, p.weight)
        dirs[(p.j, p.i)] = (d_ji, p.weight)
    return dirs


def estimate_positions(
    thetas: np.ndarray,
    pairs: list[PairEstimate],
    *,
    baseline: tuple[int, int] = (0, 1),
) -> np.ndarray:
    """Place camera centers by triangulating world-frame epipole directions.

    The baseline pair is fixed to unit separation (gauge); every other
    camera is the least-squares intersection of the rays from its two
    best-connected already-placed neighbors, starting with the baseline
    cameras (breadth-first placement).

    Raises:
        DisconnectedGraph: some camera never acquires two placed neighbors.
        CollinearCamera: a camera sits on its triangulation baseline
            (rays parallel within 1e-6).
    """
    n = len(thetas)
    dirs = _world_directions(thetas, pairs)
    b0, b1 = baseline
    if (b0, b1) not in dirs:
        raise DisconnectedGraph(f"baseline cameras {b0},{b1} share no pair estimate")

    centers = np.zeros((n, 3))
    centers[b1] = dirs[(b0, b1)][0]
    placed = {b0, b1}

    while len(placed) < n:
        candidates = []
        for k in range(n):
            if k in placed:
                continue
            nbrs = [
                (dirs[(p, k)][1], p)
                for p in placed
                if (p, k) in dirs
            ]
            if len(nbrs) >= 2:
                nbrs.sort(key=lambda t: (-t[0], t[1]))
                total = nbrs[0][0] + nbrs[1][0]
                candidates.append((-total, k, nbrs[0][1], nbrs[1][1]))
        if not candidates:
            unplaced = sorted(set(range(n)) - placed)
            raise DisconnectedGraph(
                f"cameras {unplaced} lack two placed neighbors for triangulation"
            )
        candidates.sort()
        _, k, p, q = candidates[0]
        d_pk, _ = dirs[(p, k)]
        d_qk, _ = dirs[(q, k)]
        if np.linalg.norm(np.cross(d_pk, d_qk)) < 1e-6:
            raise CollinearCamera(
                f"camera {k} lies on the {p}-{q} baseline; rays near-parallel"
            )
        try:
            P, _, _, _ = _closest_point_between_rays(
                centers[p], d_pk, centers[q], d_qk
            )
        except ParallelRays as exc:
            raise CollinearCamera(str(exc)) from exc
        centers[k] = [P[0], P[1], 0.0]
        placed.add(k)
    return centers


def refine_positions(
    centers: np.ndarray,
    thetas: np.ndarray,
    pairs: list[PairEstimate],
    *,
    max_steps: int = 500,
    grad_tol: float = 1e-10,
    fixed: tuple[int, int] = (0, 1),
) -> np.ndarray:
    """Gradient-descent polish of camera centers over all measured directions.

    Minimizes sum over ordered pairs of w * (1 - (unit(Cj - Ci) . d_ij)^2)
    holding the two gauge cameras fixed and all centers in the plane. The
    objective is monotonically non-increasing across accepted steps.
    """
    dirs = _world_directions(thetas, pairs)
    ordered = [(i, j, d, w) for (i, j), (d, w) in sorted(dirs.items())]
    free = np.array([k not in fixed for k in range(len(centers))])

    def objective(C: np.ndarray) -> float:
        total = 0.0
        for i, j, d, w in ordered:
            delta = C[j] - C[i]
            u = delta / np.linalg.norm(delta)
            dot = float(u @ d)
            total += w * (1.0 - dot * dot)
        return total

    def gradient(C: np.ndarray) -> np.ndarray:
        g = np.zeros_like(C)
        for i, j, d, w in ordered:
            delta = C[j] - C[i]
            L = np.linalg.norm(delta)
            u = delta / L
            dot = float(u @ d)
            dperp = (d - dot * u) / L
            g[j] += -2.0 * w * dot * dperp
            g[i] += 2.0 * w * dot * dperp
        g[~free] = 0.0
        g[:, 2] = 0.0
        return g

    C = centers.astype(np.float64).copy()
    best = C.copy()
    obj = objective(C)
    best_obj = obj
    step = 0.1
    for _ in range(max_steps):
        g = gradient(C)
        gnorm = np.linalg.norm(g)
        if gnorm < grad_tol:
            break
        improved = False
        for _ in range(60):
            cand = C - step * g
            cand_obj = objective(cand)
            if cand_obj <= obj:
                C, obj = cand, cand_obj
                step *= 1.5
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if obj < best_obj:
            best_obj, best = obj, C.copy()
    return best


# ---------------------------------------------------------------------------
# Multiview point triangulation
# ---------------------------------------------------------------------------


def triangulate_rays(origins: np.ndarray, dirs: np.ndarray):
    """Joint least squares: min over (P, r_i) of sum |o_i + r_i d_i - P|^2.

    Returns (P, ranges, rms_residual). Equivalent to averaging the
    per-camera points o_i + r_i d_i at the optimum, and identical to the
    two-ray midpoint for two observations.

    Raises:
        DegenerateTrack: fewer than 2 rays, or all rays parallel.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    m = len(dirs)
    if m < 2:
        raise DegenerateTrack("need at least 2 observations")

    M = np.zeros((3, 3))
    rhs = np.zeros(3)
    for o, d in zip(origins, dirs):
        proj = np.eye(3) - np.outer(d, d)
        M += proj
        rhs += proj @ o
    if np.linalg.eigvalsh(M)[0] < 1e-9:
        raise DegenerateTrack("all observation rays are parallel")
    P = np.linalg.solve(M, rhs)
    ranges = np.einsum("ij,ij->i", dirs, P - origins)
    closest = origins + ranges[:, None] * dirs
    rms = float(np.sqrt(np.mean(np.sum((closest - P) ** 2, axis=1))))
    return P, ranges, rms


def triangulate_multiview(
    track: Track,
    rig: PlanarRig,
    sizes: Mapping[Hashable, ImageSize],
    camera_index: Mapping[Hashable, int] | None = None,
) -> MultiviewPoint:
    """Triangulate one track against a registered rig.

    Args:
        track: observations keyed by camera id.
        rig: registered rotations and centers.
        sizes: image size per camera id (pixel-to-bearing conversion).
        camera_index: camera id -> rig index; identity for integer ids.

    Returns:
        MultiviewPoint with per-camera ranges; ``accepted`` is False when
        any range comes out non-positive (the observation points away from
        the scene point, typically an annotation mistake).
    """
    ids = sorted(track.observations, key=str)
    if len(ids) < 2:
        raise DegenerateTrack(f"track {track.point_id} has < 2 observations")

    origins = []
    dirs = []
    for cam in ids:
        idx = camera_index[cam] if camera_index is not None else int(cam)
        x, y = track.observations[cam]
        z = pixel_to_bearing(x, y, sizes[cam])
        dirs.append(rig.rotation(idx).T @ z)
        origins.append(rig.centers[idx])

    P, ranges, rms = triangulate_rays(np.array(origins), np.array(dirs))
    range_map = {cam: float(r) for cam, r in zip(ids, ranges)}
    return MultiviewPoint(
        P=P,
        ranges=range_map,
        rms_residual=rms,
        accepted=bool(np.all(ranges > 0.0)),
    )
