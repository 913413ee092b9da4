"""Unit-sphere camera model for equirectangular (full-view) panoramas.

Conventions:
  - Image: continuous pixel coordinates, x in [0, width) rightward
    (longitude axis, wraps), y in [0, height] downward (latitude axis).
    The center of raster cell (i, j) is at coordinate (i + 0.5, j + 0.5).
  - Angles: theta = longitude in [0, 2*pi), phi = colatitude in [0, pi]
    with phi = 0 at the +Z pole (top image row).
  - Bearing: unit 3-vector (sin(phi)cos(theta), sin(phi)sin(theta), cos(phi)).
  - Pose: R maps world directions into the camera frame, C is the camera
    center in world units.

All conversion functions broadcast over leading array dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DegeneratePoint

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ImageSize:
    """Equirectangular raster dimensions; width must be 2 x height."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width != 2 * self.height:
            raise ValueError(
                f"equirectangular images must be 2:1, got {self.width}x{self.height}"
            )
        if self.width < 2 or self.height < 1:
            raise ValueError(f"image too small: {self.width}x{self.height}")


@dataclass
class CameraPose:
    """World-to-camera rotation R and camera center C (world units)."""

    R: np.ndarray
    C: np.ndarray

    def __post_init__(self) -> None:
        self.R = np.asarray(self.R, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64).reshape(3)
        if self.R.shape != (3, 3):
            raise ValueError(f"R must be 3x3, got {self.R.shape}")
        if np.linalg.norm(self.R.T @ self.R - np.eye(3)) > 1e-9:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > 1e-9:
            raise ValueError("R is not a proper rotation (det != +1)")

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(np.eye(3), np.zeros(3))


@dataclass
class EquirectImage:
    """8-bit RGB equirectangular raster, row-major (height, width, 3)."""

    pixels: np.ndarray
    size: ImageSize = field(init=False)

    def __post_init__(self) -> None:
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) RGB raster, got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        self.size = ImageSize(w, h)

    @staticmethod
    def load(path: str | Path) -> "EquirectImage":
        """Load a PNG/JPEG panorama; enforces the 2:1 aspect at load time."""
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"))
        return EquirectImage(rgb)

    def save(self, path: str | Path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(path)


def pixel_to_angles(x, y, size: ImageSize):
    """Map continuous pixel coordinates to (theta, phi).

    theta = 2*pi*x/width mod 2*pi, phi = pi*y/height clamped to [0, pi].
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    theta = np.mod(TWO_PI * x / size.width, TWO_PI)
    phi = np.clip(np.pi * y / size.height, 0.0, np.pi)
    return theta, phi


def angles_to_pixel(theta, phi, size: ImageSize):
    """Inverse of :func:`pixel_to_angles`; returns (x, y)."""
    theta = np.mod(np.asarray(theta, dtype=np.float64), TWO_PI)
    phi = np.clip(np.asarray(phi, dtype=np.float64), 0.0, np.pi)
    return theta * size.width / TWO_PI, phi * size.height / np.pi


def angles_to_bearing(theta, phi) -> np.ndarray:
    """Return unit bearings (..., 3) for longitude theta, colatitude phi."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    sin_phi = np.sin(phi)
    return np.stack(
        [sin_phi * np.cos(theta), sin_phi * np.sin(theta), np.cos(phi)], axis=-1
    )


def bearing_to_angles(b) -> tuple[np.ndarray, np.ndarray]:
    """Return (theta, phi) for unit bearings; theta = 0 at the poles."""
    b = np.asarray(b, dtype=np.float64)
    phi = np.arccos(np.clip(b[..., 2], -1.0, 1.0))
    theta = np.mod(np.arctan2(b[..., 1], b[..., 0]), TWO_PI)
    # atan2(0, 0) already yields 0 at the poles, but enforce it against
    # residual floating-point components.
    at_pole = np.abs(b[..., 2]) >= 1.0 - 1e-15
    theta = np.where(at_pole, 0.0, theta)
    return theta, phi


def pixel_to_bearing(x, y, size: ImageSize) -> np.ndarray:
    """Compose pixel -> angles -> bearing."""
    theta, phi = pixel_to_angles(x, y, size)
    return angles_to_bearing(theta, phi)


def bearing_to_pixel(b, size: ImageSize):
    """Compose bearing -> angles -> pixel; returns (x, y)."""
    theta, phi = bearing_to_angles(b)
    return angles_to_pixel(theta, phi, size)


def project_point(P, pose: CameraPose) -> np.ndarray:
    """Project world point(s) P to unit bearings in the camera frame.

    Returns R @ (P - C) / ||P - C||.

    Raises:
        DegeneratePoint: if any point coincides with the camera center.
    """
    P = np.asarray(P, dtype=np.float64)
    d = P - pose.C
    rho = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(rho < 1e-12):
        raise DegeneratePoint("point coincides with the camera center")
    return (d / rho) @ pose.R.T


def bearing_to_disk(b) -> np.ndarray:
    """Vertical projection onto the image plane: drop the Z component.

    Display/debug utility for the circular-disk view of a hemisphere.
    """
    b = np.asarray(b, dtype=np.float64)
    return b[..., :2]


def sample_bilinear(img: EquirectImage, x, y) -> np.ndarray:
    """Bilinearly sample the panorama at raster positions (x, y).

    Coordinates are array positions: integer x lands exactly on column x.
    x wraps periodically (equirectangular seam), y clamps at the poles.
    Returns float RGB values with the input's broadcast shape + (3,).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w = img.pixels.shape[:2]

    x = np.mod(x, w)
    x0 = np.floor(x).astype(np.int64)
    fx = x - x0
    x0 = np.mod(x0, w)
    x1 = np.mod(x0 + 1, w)

    yc = np.clip(y, 0.0, h - 1.0)
    y0 = np.floor(yc).astype(np.int64)
    fy = yc - y0
    y1 = np.minimum(y0 + 1, h - 1)

    px = img.pixels.astype(np.float64)
    fx = fx[..., None]
    fy = fy[..., None]
    top = px[y0, x0] * (1.0 - fx) + px[y0, x1] * fx
    bot = px[y1, x0] * (1.0 - fx) + px[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy
