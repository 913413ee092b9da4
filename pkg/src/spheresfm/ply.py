"""ASCII PLY export/import for colored point clouds."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import EmptyCloud


def write_ply(path: str | Path, points: np.ndarray, colors: np.ndarray | None = None) -> None:
    """Write points (N, 3) with optional uint8 colors (N, 3) as ASCII PLY.

    Vertex order follows the input; output is byte-deterministic.

    Raises:
        EmptyCloud: no points to write.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise EmptyCloud("no points to export")
    if colors is None:
        colors = np.full((len(points), 3), 255, dtype=np.uint8)
    colors = np.asarray(colors, dtype=np.uint8)

    lines = [
        "ply",
        "format ascii 1.0",
        "comment spheresfm point cloud",
        "comment coordinate system: right-handed, Z up",
        "comment colors: 8-bit RGB",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for (x, y, z), (r, g, b) in zip(points, colors):
        lines.append(f"{x:.9g} {y:.9g} {z:.9g} {int(r)} {int(g)} {int(b)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_ply(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an ASCII PLY written by :func:`write_ply`; returns (points, colors)."""
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or text[0] != "ply":
        raise ValueError("not a PLY file")
    n = None
    body_start = None
    for i, line in enumerate(text):
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        if line == "end_header":
            body_start = i + 1
            break
    if n is None or body_start is None:
        raise ValueError("malformed PLY header")
    rows = [line.split() for line in text[body_start : body_start + n]]
    points = np.array([[float(v) for v in r[:3]] for r in rows])
    colors = np.array([[int(v) for v in r[3:6]] for r in rows], dtype=np.uint8)
    return points, colors
