"""Spherical rectification, scanline disparity, and dense reconstruction.

Rectification rotates both view spheres so the baseline becomes the polar
axis; epipolar great circles then become meridians, i.e. vertical lines in
the equirectangular mapping. The rectified rasters are stored transposed,
so epipolar curves are horizontal rows:

  - row index    = longitude about the baseline, in [0, 2*pi)
  - column index = latitude from the baseline (colatitude x), in [0, pi]

Disparity is d = x2 - x1 in columns; the angular scale is pi divided by
the number of columns. Range follows the law of sines in the epipolar
triangle: |O1 P| = T sin(x2)/sin(d), |O2 P| = T sin(x1)/sin(d).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import uniform_filter

from .epipolar import TwoViewSolution
from .errors import DegenerateDisparity
from .sphere_cam import (
    EquirectImage,
    ImageSize,
    angles_to_bearing,
    bearing_to_angles,
    bearing_to_pixel,
    pixel_to_bearing,
    sample_bilinear,
)

TWO_PI = 2.0 * np.pi


@dataclass
class RectifiedPair:
    """Baseline-aligned, transposed rasters plus the rotations applied."""

    rect1: np.ndarray  # (n_rows, n_cols, 3) uint8, n_rows = rect_size.width
    rect2: np.ndarray
    R_rect1: np.ndarray
    R_rect2: np.ndarray
    rect_size: ImageSize

    @property
    def n_rows(self) -> int:
        return self.rect_size.width

    @property
    def n_cols(self) -> int:
        return self.rect_size.height


@dataclass
class DisparityParams:
    """Block-matching knobs; defaults follow the shipped configuration."""

    window: int = 11
    d_min: int = 1
    d_max: int | None = None  # defaults to n_cols // 4
    ncc_floor: float = 0.5
    lr_tolerance: float = 1.0
    epipole_margin: float = 0.02  # fraction of columns masked at each side


@dataclass
class DisparityMap:
    """Per-pixel disparity in rectified coordinates, with a validity mask."""

    d: np.ndarray  # (n_rows, n_cols) float32, pixels along columns
    valid: np.ndarray  # bool, same shape
    radians_per_pixel: float

    @property
    def height(self) -> int:
        return self.d.shape[0]

    @property
    def width(self) -> int:
        return self.d.shape[1]


@dataclass
class DenseCloud:
    """Colored points reconstructed from a disparity map."""

    points: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) uint8

    def __len__(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------------
# Rectification
# ---------------------------------------------------------------------------


def rectification_rotations(e1, R) -> tuple[np.ndarray, np.ndarray]:
    """Rotations aligning both camera frames with the baseline.

    R_rect1 maps camera-1 bearings into a frame whose +Z is the epipole e1;
    its X axis is the projection of world +Z onto the plane orthogonal to
    e1 (falling back to world +X when e1 is within 1e-9 of the poles, so
    the frame is always defined). R_rect2 = R_rect1 R^{-1}, which gives
    both rectified frames identical axes in world terms.
    """
    e1 = np.asarray(e1, dtype=np.float64)
    z_axis = e1 / np.linalg.norm(e1)
    ref = np.array([0.0, 0.0, 1.0])
    x_axis = ref - (ref @ z_axis) * z_axis
    nx = np.linalg.norm(x_axis)
    if nx < 1e-9:
        ref = np.array([1.0, 0.0, 0.0])
        x_axis = ref - (ref @ z_axis) * z_axis
        nx = np.linalg.norm(x_axis)
    x_axis /= nx
    y_axis = np.cross(z_axis, x_axis)
    R_rect1 = np.stack([x_axis, y_axis, z_axis])
    R_rect2 = R_rect1 @ np.asarray(R, dtype=np.float64).T
    return R_rect1, R_rect2


def _rect_grid(rect_size: ImageSize) -> np.ndarray:
    """Unit bearings of all rectified raster cells, shape (rows, cols, 3)."""
    psi = TWO_PI * (np.arange(rect_size.width) + 0.5) / rect_size.width
    lat = np.pi * (np.arange(rect_size.height) + 0.5) / rect_size.height
    psi_g, lat_g = np.meshgrid(psi, lat, indexing="ij")
    return angles_to_bearing(psi_g, lat_g)


def _resample(img: EquirectImage, bearings_cam: np.ndarray) -> np.ndarray:
    x, y = bearing_to_pixel(bearings_cam, img.size)
    rgb = sample_bilinear(img, x - 0.5, y - 0.5)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def rectify_pair(
    img1: EquirectImage,
    img2: EquirectImage,
    solution: TwoViewSolution,
    rect_size: ImageSize,
) -> RectifiedPair:
    """Resample both panoramas into the baseline-aligned transposed rasters."""
    R_rect1, R_rect2 = rectification_rotations(solution.e1, solution.R)
    grid = _rect_grid(rect_size)
    rect1 = _resample(img1, grid @ R_rect1)  # rows of grid times R_rect1^T
    rect2 = _resample(img2, grid @ R_rect2)
    return RectifiedPair(rect1, rect2, R_rect1, R_rect2, rect_size)


def rectified_coords(x, y, img_size: ImageSize, R_rect, rect_size: ImageSize):
    """Continuous (row, col) rectified coordinates of source pixels (x, y)."""
    z = pixel_to_bearing(x, y, img_size)
    b = z @ np.asarray(R_rect, dtype=np.float64).T
    psi, lat = bearing_to_angles(b)
    return psi * rect_size.width / TWO_PI, lat * rect_size.height / np.pi


# ---------------------------------------------------------------------------
# Disparity
# ---------------------------------------------------------------------------


def _gray(raster: np.ndarray) -> np.ndarray:
    return raster.astype(np.float64).mean(axis=2)


def _shift_cols(a: np.ndarray, d: int) -> np.ndarray:
    """Shift columns left by d (content at column c becomes column c-d)."""
    out = np.zeros_like(a)
    if d == 0:
        return a.copy()
    out[:, :-d] = a[:, d:]
    return out


_FILTER_MODE = ("wrap", "nearest")  # rows are periodic in longitude


def _ncc_stack(g_ref: np.ndarray, g_other: np.ndarray, d_range, window: int, sign: int):
    """Best NCC match per pixel of g_ref against g_other shifted by +-d.

    sign=+1 matches g_ref column c to g_other column c+d (left raster);
    sign=-1 matches to column c-d (right raster). Returns integer best
    disparity, best/left/right scores for sub-pixel interpolation.
    """
    shape = g_ref.shape
    mu_r = uniform_filter(g_ref, window, mode=_FILTER_MODE)
    var_r = uniform_filter(g_ref * g_ref, window, mode=_FILTER_MODE) - mu_r * mu_r
    mu_o = uniform_filter(g_other, window, mode=_FILTER_MODE)
    var_o = uniform_filter(g_other * g_other, window, mode=_FILTER_MODE) - mu_o * mu_o

    neg_inf = -np.inf
    best = np.full(shape, neg_inf)
    best_d = np.full(shape, -1, dtype=np.int32)
    left = np.full(shape, neg_inf)
    right = np.full(shape, neg_inf)
    prev = np.full(shape, neg_inf)
    cols = np.arange(shape[1])
    hw = window // 2

    for d in d_range:
        if sign > 0:
            shifted = _shift_cols(g_other, d)
            mu_s = _shift_cols(mu_o, d)
            var_s = _shift_cols(var_o, d)
            in_range = cols + d <= shape[1] - 1 - hw
        else:
            shifted = _shift_cols(g_other[:, ::-1], d)[:, ::-1]
            mu_s = _shift_cols(mu_o[:, ::-1], d)[:, ::-1]
            var_s = _shift_cols(var_o[:, ::-1], d)[:, ::-1]
            in_range = cols - d >= hw
        cross = uniform_filter(g_ref * shifted, window, mode=_FILTER_MODE) - mu_r * mu_s
        denom = var_r * var_s
        with np.errstate(invalid="ignore", divide="ignore"):
            score = np.where(denom > 1e-12, cross / np.sqrt(np.maximum(denom, 1e-300)), neg_inf)
        score = np.where(in_range[None, :], score, neg_inf)

        # Fill the right-neighbor score of pixels whose best was d - 1.
        just_won = best_d == d - 1
        right = np.where(just_won, score, right)
        is_new = score > best
        left = np.where(is_new, prev, left)
        best = np.where(is_new, score, best)
        best_d = np.where(is_new, d, best_d)
        right = np.where(is_new, neg_inf, right)
        prev = score
    return best_d, best, left, right


def _subpixel(best_d, best, left, right):
    """Parabolic refinement of the NCC peak; 0 offset at range edges."""
    interpolable = np.isfinite(left) & np.isfinite(right) & np.isfinite(best)
    l = np.where(interpolable, left, 0.0)
    r = np.where(interpolable, right, 0.0)
    b = np.where(interpolable, best, 1.0)
    denom = l + r - 2.0 * b
    with np.errstate(invalid="ignore", divide="ignore"):
        offset = np.where(
            interpolable & (np.abs(denom) > 1e-12), (l - r) / (2.0 * denom), 0.0
        )
    return best_d.astype(np.float64) + np.clip(offset, -1.0, 1.0)


def compute_disparity(pair: RectifiedPair, params: DisparityParams | None = None) -> DisparityMap:
    """Winner-take-all NCC block matching along rectified rows.

    Applies a left-right consistency check, an NCC floor, and masks the
    epipole neighborhoods (where all epipolar curves converge and matching
    is meaningless). Candidate disparities that would push the match past
    x = pi are geometrically impossible and are never considered. Failed
    pixels are flagged invalid rather than raised.
    """
    params = params or DisparityParams()
    g1 = _gray(pair.rect1)
    g2 = _gray(pair.rect2)
    n_rows, n_cols = g1.shape
    d_max = params.d_max if params.d_max is not None else n_cols // 4
    d_range = range(params.d_min, d_max + 1)

    best_d, best, left, right = _ncc_stack(g1, g2, d_range, params.window, +1)
    d_sub = _subpixel(best_d, best, left, right)

    best_d2, best2, left2, right2 = _ncc_stack(g2, g1, d_range, params.window, -1)
    d2_sub = _subpixel(best_d2, best2, left2, right2)

    valid = np.isfinite(best) & (best >= params.ncc_floor) & (best_d >= 0)

    # Left-right consistency: the match position in raster 2 must point back.
    cols = np.arange(n_cols)[None, :]
    match_col = np.clip(np.rint(cols + d_sub).astype(np.int64), 0, n_cols - 1)
    rows = np.arange(n_rows)[:, None]
    valid &= best_d2[rows, match_col] >= 0
    d_back = d2_sub[rows, match_col]
    valid &= np.abs(d_sub - d_back) <= params.lr_tolerance

    hw = params.window // 2
    margin = max(int(round(params.epipole_margin * n_cols)), hw)
    valid[:, :margin] = False
    valid[:, n_cols - margin:] = False

    d_out = np.where(valid, d_sub, 0.0).astype(np.float32)
    return DisparityMap(
        d=d_out, valid=valid, radians_per_pixel=float(np.pi / n_cols)
    )


# ---------------------------------------------------------------------------
# Depth and dense cloud
# ---------------------------------------------------------------------------


def disparity_to_range(x1, d, T: float = 1.0):
    """Law-of-sines ranges (|O1 P|, |O2 P|) from latitude x1 and disparity d.

    Both in radians; x2 = x1 + d must stay below pi and d must be positive
    for the triangle to close.

    Raises:
        DegenerateDisparity: d <= 1e-9 (point at infinity) or x1 + d >= pi.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 1e-9):
        raise DegenerateDisparity("disparity is zero; point at infinity")
    if np.any(x1 + d >= np.pi) or np.any(x1 <= 0.0):
        raise DegenerateDisparity("latitudes leave the epipolar triangle")
    x2 = x1 + d
    sin_d = np.sin(d)
    r1 = T * np.sin(x2) / sin_d
    r2 = T * np.sin(x1) / sin_d
    if x1.ndim == 0:
        return float(r1), float(r2)
    return r1, r2


def dense_cloud(
    disp: DisparityMap, pair: RectifiedPair, T: float = 1.0
) -> DenseCloud:
    """Back-project every valid disparity pixel into camera-1 coordinates.

    Points are range1 along the rectified bearing, rotated back through
    R_rect1; colors come from the first rectified raster. Pixels whose
    disparity degenerates (flat triangle) are skipped.
    """
    rows, cols = np.nonzero(disp.valid)
    if len(rows) == 0:
        return DenseCloud(points=np.zeros((0, 3)), colors=np.zeros((0, 3), dtype=np.uint8))

    scale = disp.radians_per_pixel
    x1 = (cols + 0.5) * scale
    d_rad = disp.d[rows, cols].astype(np.float64) * scale
    ok = (d_rad > 1e-9) & (x1 + d_rad < np.pi) & (x1 > 0.0)
    rows, cols, x1, d_rad = rows[ok], cols[ok], x1[ok], d_rad[ok]

    r1 = T * np.sin(x1 + d_rad) / np.sin(d_rad)
    psi = (rows + 0.5) * TWO_PI / pair.n_rows
    bearings_rect = angles_to_bearing(psi, x1)
    points = r1[:, None] * (bearings_rect @ pair.R_rect1)
    colors = pair.rect1[rows, cols]
    return DenseCloud(points=points, colors=colors)


# ---------------------------------------------------------------------------
# Disparity export
# ---------------------------------------------------------------------------


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write a single-channel little-endian PFM (rows bottom-to-top)."""
    data = np.asarray(data, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError("not a single-channel PFM file")
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        raw = np.frombuffer(fh.read(w * h * 4), dtype="<f4" if scale < 0 else ">f4")
    return raw.reshape(h, w)[::-1].copy()


def disparity_preview(disp: DisparityMap) -> np.ndarray:
    """8-bit preview: brighter means smaller disparity, invalid pixels 0."""
    out = np.zeros(disp.d.shape, dtype=np.uint8)
    if not disp.valid.any():
        return out
    vals = disp.d[disp.valid]
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-12:
        out[disp.valid] = 255
        return out
    norm = (hi - disp.d[disp.valid]) / (hi - lo)
    out[disp.valid] = np.clip(np.rint(255.0 * norm), 0, 255).astype(np.uint8)
    return out


def save_disparity(disp: DisparityMap, pfm_path: str | Path, preview_path: str | Path,
                   mask_path: str | Path | None = None) -> None:
    """Persist a disparity map as PFM + preview PNG (+ optional mask PNG)."""
    write_pfm(pfm_path, np.where(disp.valid, disp.d, 0.0))
    Image.fromarray(disparity_preview(disp), mode="L").save(preview_path)
    if mask_path is not None:
        Image.fromarray((disp.valid * np.uint8(255)), mode="L").save(mask_path)
