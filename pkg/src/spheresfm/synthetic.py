"""Synthetic scenes and oracles: planar rigs, forward projection, a
ray-cast textured room renderer, and similarity alignment for evaluation.

Everything here is deterministic given a seed and independent of the
estimation code paths it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .registration import yaw_matrix
from .sphere_cam import CameraPose, EquirectImage, ImageSize, pixel_to_bearing, project_point, bearing_to_pixel


@dataclass
class PlanarScene:
    """Ground-truth planar rig plus scene points and their projections."""

    thetas: np.ndarray  # (n,)
    centers: np.ndarray  # (n, 3), z = 0
    points: np.ndarray  # (m, 3)
    pixels: np.ndarray  # (n, m, 2) exact projections
    size: ImageSize

    def pose(self, i: int) -> CameraPose:
        return CameraPose(yaw_matrix(float(self.thetas[i])), self.centers[i])

    @property
    def n_cameras(self) -> int:
        return len(self.thetas)


def make_planar_scene(
    n_cameras: int,
    n_points: int,
    seed: int = 0,
    *,
    size: ImageSize = ImageSize(2048, 1024),
    rig_radius: float = 1.0,
    point_radius: tuple[float, float] = (2.0, 4.0),
    point_height: float = 1.5,
    min_separation: float = 0.35,
) -> PlanarScene:
    """Random planar rig with scene points in a surrounding shell.

    Camera centers are rejection-sampled for minimum pairwise separation;
    points avoid the camera plane's immediate vicinity so every view has a
    well-conditioned bearing.
    """
    rng = np.random.default_rng(seed)

    centers = np.zeros((n_cameras, 3))
    placed = 0
    while placed < n_cameras:
        cand = np.array(
            [rng.uniform(-rig_radius, rig_radius), rng.uniform(-rig_radius, rig_radius), 0.0]
        )
        if placed and np.min(np.linalg.norm(centers[:placed] - cand, axis=1)) < min_separation:
            continue
        centers[placed] = cand
        placed += 1

    thetas = rng.uniform(-np.pi, np.pi, size=n_cameras)
    thetas[0] = rng.uniform(-np.pi, np.pi)  # camera 0 deliberately not gauged

    radii = rng.uniform(point_radius[0], point_radius[1], size=n_points)
    azim = rng.uniform(0.0, 2.0 * np.pi, size=n_points)
    z = rng.uniform(-point_height, point_height, size=n_points)
    points = np.stack([radii * np.cos(azim), radii * np.sin(azim), z], axis=1)

    pixels = np.zeros((n_cameras, n_points, 2))
    scene = PlanarScene(thetas=thetas, centers=centers, points=points, pixels=pixels, size=size)
    for i in range(n_cameras):
        bearings = project_point(points, scene.pose(i))
        x, y = bearing_to_pixel(bearings, size)
        pixels[i, :, 0] = x
        pixels[i, :, 1] = y
    return scene


def gauge_normalize(scene: PlanarScene) -> PlanarScene:
    """Express ground truth in the reconstruction gauge:
    theta[0] = 0, C[0] = origin, |C[1] - C[0]| = 1."""
    R0 = yaw_matrix(float(scene.thetas[0]))
    s = float(np.linalg.norm(scene.centers[1] - scene.centers[0]))
    centers = (scene.centers - scene.centers[0]) @ R0.T / s
    points = (scene.points - scene.centers[0]) @ R0.T / s
    thetas = scene.thetas - scene.thetas[0]
    thetas = np.mod(thetas + np.pi, 2.0 * np.pi) - np.pi
    return PlanarScene(
        thetas=thetas, centers=centers, points=points, pixels=scene.pixels, size=scene.size
    )


def noisy_pixels(pixels: np.ndarray, sigma: float, seed: int, size: ImageSize) -> np.ndarray:
    """Add isotropic Gaussian pixel noise; x wraps, y clamps."""
    rng = np.random.default_rng(seed)
    out = pixels + rng.normal(0.0, sigma, size=pixels.shape)
    out[..., 0] = np.mod(out[..., 0], size.width)
    out[..., 1] = np.clip(out[..., 1], 0.0, size.height)
    return out


def bearings_for_camera(scene: PlanarScene, i: int, pixels: np.ndarray | None = None) -> np.ndarray:
    """Unit bearings of (possibly noisy) pixel observations of camera i."""
    px = scene.pixels[i] if pixels is None else pixels[i]
    return pixel_to_bearing(px[:, 0], px[:, 1], scene.size)


# ---------------------------------------------------------------------------
# Similarity alignment (evaluation oracle)
# ---------------------------------------------------------------------------


def align_similarity(src: np.ndarray, dst: np.ndarray):
    """Least-squares similarity src -> dst (no reflection).

    Returns (s, Q, t, transformed) with transformed = s * src @ Q.T + t.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U @ Vt) < 0:
        S[2, 2] = -1.0
    Q = U @ S @ Vt
    var_s = (xs * xs).sum() / len(src)
    s = float(np.trace(np.diag(D) @ S) / var_s) if var_s > 0 else 1.0
    t = mu_d - s * Q @ mu_s
    return s, Q, t, s * src @ Q.T + t


def aligned_rmse(src: np.ndarray, dst: np.ndarray) -> float:
    """RMSE of src against dst after similarity alignment."""
    _, _, _, mapped = align_similarity(src, dst)
    return float(np.sqrt(np.mean(np.sum((mapped - dst) ** 2, axis=1))))


def rotation_angle(R: np.ndarray) -> float:
    """Angular magnitude of a rotation matrix, in radians."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# Ray-cast textured room oracle
# ---------------------------------------------------------------------------

_WALL_AXES = (
    # (axis, sign): +x wall, -x wall, +y, -y, +z (ceiling), -z (floor)
    (0, +1), (0, -1), (1, +1), (1, -1), (2, +1), (2, -1),
)


@dataclass
class Room:
    """Axis-aligned box interior with one procedural texture per wall."""

    half_extent: np.ndarray  # (3,)
    textures: list[np.ndarray]  # six (K, K, 3) float arrays in [0, 255]

    @staticmethod
    def make(seed: int = 0, half_extent=(2.0, 2.0, 1.4), texture_res: int = 192) -> "Room":
        rng = np.random.default_rng(seed)
        textures = []
        for _ in range(6):
            coarse = rng.uniform(40.0, 215.0, size=(texture_res // 8, texture_res // 8, 3))
            fine = rng.uniform(-28.0, 28.0, size=(texture_res, texture_res, 3))
            tex = _upsample(coarse, texture_res) + fine
            textures.append(np.clip(tex, 0.0, 255.0))
        return Room(half_extent=np.asarray(half_extent, dtype=np.float64), textures=textures)

    def cast(self, origin: np.ndarray, dirs: np.ndarray):
        """Intersect rays with the box walls from inside.

        Args:
            origin: (3,) point strictly inside the box.
            dirs: (..., 3) unit directions.

        Returns:
            (t, wall, u, v): hit distance, wall index, and in-wall texture
            coordinates in [0, 1).
        """
        dirs = np.asarray(dirs, dtype=np.float64)
        flat = dirs.reshape(-1, 3)
        he = self.half_extent
        with np.errstate(divide="ignore", invalid="ignore"):
            t_all = np.where(
                np.abs(flat) > 1e-15,
                (np.where(flat > 0, he, -he) - origin) / flat,
                np.inf,
            )
        axis = np.argmin(t_all, axis=1)
        t = t_all[np.arange(len(flat)), axis]
        hit = origin + t[:, None] * flat
        sign = np.sign(flat[np.arange(len(flat)), axis])
        wall = axis * 2 + (sign < 0)

        # In-wall coordinates: the two non-normal axes, normalized to [0, 1).
        u = np.empty(len(flat))
        v = np.empty(len(flat))
        for a in range(3):
            m = axis == a
            oa, ob = (a + 1) % 3, (a + 2) % 3
            u[m] = (hit[m, oa] + he[oa]) / (2 * he[oa])
            v[m] = (hit[m, ob] + he[ob]) / (2 * he[ob])
        u = np.clip(u, 0.0, 1.0 - 1e-9)
        v = np.clip(v, 0.0, 1.0 - 1e-9)
        shape = dirs.shape[:-1]
        return t.reshape(shape), wall.reshape(shape), u.reshape(shape), v.reshape(shape)

    def shade(self, wall, u, v) -> np.ndarray:
        """Bilinear texture lookup per hit, returning float RGB."""
        wall = np.asarray(wall).reshape(-1)
        uu = np.asarray(u, dtype=np.float64).reshape(-1)
        vv = np.asarray(v, dtype=np.float64).reshape(-1)
        out = np.empty((len(wall), 3))
        for w in range(6):
            m = wall == w
            if not m.any():
                continue
            tex = self.textures[w]
            K = tex.shape[0]
            x = uu[m] * (K - 1)
            y = vv[m] * (K - 1)
            x0 = np.floor(x).astype(np.int64)
            y0 = np.floor(y).astype(np.int64)
            x1 = np.minimum(x0 + 1, K - 1)
            y1 = np.minimum(y0 + 1, K - 1)
            fx = (x - x0)[:, None]
            fy = (y - y0)[:, None]
            top = tex[y0, x0] * (1 - fx) + tex[y0, x1] * fx
            bot = tex[y1, x0] * (1 - fx) + tex[y1, x1] * fx
            out[m] = top * (1 - fy) + bot * fy
        return out

    def render_panorama(self, pose: CameraPose, size: ImageSize) -> EquirectImage:
        """Equirectangular render of the room from a camera pose."""
        xs = np.arange(size.width) + 0.5
        ys = np.arange(size.height) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        bearings = pixel_to_bearing(gx, gy, size)
        world_dirs = bearings @ pose.R  # R^T per row
        _, wall, u, v = self.cast(pose.C, world_dirs)
        rgb = self.shade(wall, u, v).reshape(size.height, size.width, 3)
        return EquirectImage(np.clip(np.rint(rgb), 0, 255).astype(np.uint8))

    def depth_along(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """True range to the wall along world-frame unit directions."""
        t, _, _, _ = self.cast(origin, dirs)
        return t


def _upsample(img: np.ndarray, res: int) -> np.ndarray:
    """Bilinear upsample of a (k, k, 3) grid to (res, res, 3)."""
    k = img.shape[0]
    pos = np.linspace(0.0, k - 1.0, res)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, k - 1)
    f = pos - i0
    rows = img[i0][:, i0] * np.outer(1 - f, 1 - f)[..., None]
    rows += img[i0][:, i1] * np.outer(1 - f, f)[..., None]
    rows += img[i1][:, i0] * np.outer(f, 1 - f)[..., None]
    rows += img[i1][:, i1] * np.outer(f, f)[..., None]
    return rows
