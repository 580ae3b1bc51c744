"""Grasp <-> heatmap codec and the per-grid training loss.

A grasp set is encoded onto four aligned H x W grids: quality (1 inside each
painted center region), cos/sin of twice the grasp angle (the doubling removes
the pi-periodic wraparound), and jaw opening normalized by a width scale.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EncodeError, ShapeMismatchError, UndefinedAngleError
from .geometry import GraspPose, canonical_angle, rect_from_grasp

DEFAULT_WIDTH_SCALE = 150.0
QUALITY_FLOOR = 0.1

_PLANES = ("quality", "cos2", "sin2", "width")


@dataclass(frozen=True)
class HeatmapSet:
    """Four aligned float grids describing grasps over an image."""

    quality: np.ndarray
    cos2: np.ndarray
    sin2: np.ndarray
    width: np.ndarray

    def __post_init__(self):
        shape = None
        for name in _PLANES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2:
                raise ShapeMismatchError(f"{name} plane must be 2-D, got shape {arr.shape}")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ShapeMismatchError(f"{name} plane {arr.shape} != {shape}")
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.quality.shape


@dataclass(frozen=True)
class LossBreakdown:
    l_center: float
    l_cos: float
    l_sin: float
    l_width: float
    l_overall: float


def _paint_cells(corners: np.ndarray, height: int, width: int):
    """Integer grid cells whose coordinates fall inside a convex CCW polygon."""
    xs, ys = corners[:, 0], corners[:, 1]
    x0 = max(int(math.floor(xs.min())), 0)
    x1 = min(int(math.ceil(xs.max())), width - 1)
    y0 = max(int(math.floor(ys.min())), 0)
    y1 = min(int(math.ceil(ys.max())), height - 1)
    if x0 > x1 or y0 > y1:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    inside = np.ones(gx.shape, dtype=bool)
    for i in range(4):
        px, py = corners[i]
        qx, qy = corners[(i + 1) % 4]
        cross = (qx - px) * (gy - py) - (qy - py) * (gx - px)
        inside &= cross >= -1e-9
    return gy[inside], gx[inside]


def encode(
    annotations: Iterable[GraspPose],
    dims: tuple[int, int],
    width_scale: float = DEFAULT_WIDTH_SCALE,
) -> HeatmapSet:
    """Paint grasps onto fresh grids of shape ``dims`` (height, width).

    Each grasp paints the cells of a center region: opening/3 long along the
    grasp axis and jaw_size/2 across it. Later grasps overwrite earlier ones
    where regions overlap. Raises EncodeError when a center leaves the grid.
    """
    height, width = int(dims[0]), int(dims[1])
    if height <= 0 or width <= 0:
        raise EncodeError(f"grid dims must be positive, got {dims!r}")
    quality = np.zeros((height, width))
    cos2 = np.zeros((height, width))
    sin2 = np.zeros((height, width))
    wplane = np.zeros((height, width))
    for pose in annotations:
        if not (0.0 <= pose.center_x < width and 0.0 <= pose.center_y < height):
            raise EncodeError(
                f"grasp center ({pose.center_x}, {pose.center_y}) outside {width}x{height} grid"
            )
        region = rect_from_grasp(
            GraspPose(pose.center_x, pose.center_y, pose.angle, pose.opening / 3.0, pose.jaw_size / 2.0)
        )
        rows, cols = _paint_cells(region.corners, height, width)
        # The center cell is always painted so every grasp stays decodable.
        center_row = min(max(int(round(pose.center_y)), 0), height - 1)
        center_col = min(max(int(round(pose.center_x)), 0), width - 1)
        rows = np.append(rows, center_row)
        cols = np.append(cols, center_col)
        quality[rows, cols] = 1.0
        cos2[rows, cols] = math.cos(2.0 * pose.angle)
        sin2[rows, cols] = math.sin(2.0 * pose.angle)
        wplane[rows, cols] = min(pose.opening, width_scale) / width_scale
    return HeatmapSet(quality, cos2, sin2, wplane)


def recover_angle(c: float, s: float) -> float:
    """Invert the doubled-angle encoding; scale-invariant in (c, s).

    Raises UndefinedAngleError when both components are zero.
    """
    if c == 0.0 and s == 0.0:
        raise UndefinedAngleError("angle is undefined for cos=sin=0")
    return canonical_angle(math.atan2(s, c) / 2.0)


def _peak_mask(quality: np.ndarray) -> np.ndarray:
    """Strict 8-neighborhood local maxima with lowest-row-major-index tie-break.

    A cell beats a neighbor that comes later in row-major order on >=, and an
    earlier neighbor only on >. Exactly one cell survives per flat plateau.
    """
    h, w = quality.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = quality
    mask = np.ones((h, w), dtype=bool)
    for dr, dc in ((-1, -1), (-1, 0), (-1, 1), (0, -1)):
        mask &= quality > padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
    for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
        mask &= quality >= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
    return mask


def decode(
    maps: HeatmapSet,
    top_k: int,
    width_scale: float = DEFAULT_WIDTH_SCALE,
    jaw_size: float = 10.0,
    quality_floor: float = QUALITY_FLOOR,
) -> list[GraspPose]:
    """Extract up to ``top_k`` grasps at quality peaks, best quality first.

    Peaks below ``quality_floor`` are dropped; ranking ties break toward the
    lower row-major index so the output order is deterministic. May return an
    empty list.
    """
    if top_k <= 0:
        return []
    quality = maps.quality
    mask = _peak_mask(quality) & (quality >= quality_floor)
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return []
    h, w = quality.shape
    order = np.lexsort((rows * w + cols, -quality[rows, cols]))
    poses: list[GraspPose] = []
    for idx in order:
        r, c = int(rows[idx]), int(cols[idx])
        cos_v = float(maps.cos2[r, c])
        sin_v = float(maps.sin2[r, c])
        opening = float(maps.width[r, c]) * width_scale
        if (cos_v == 0.0 and sin_v == 0.0) or opening <= 0.0:
            continue  # junk peak with no orientation or extent
        poses.append(GraspPose(float(c), float(r), recover_angle(cos_v, sin_v), opening, jaw_size))
        if len(poses) == top_k:
            break
    return poses


def loss(pred: HeatmapSet, target: HeatmapSet) -> LossBreakdown:
    """Mean-squared error per plane; the overall value is their exact sum."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} != target {target.shape}")

    def mse(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.mean((a - b) ** 2))

    l_center = mse(pred.quality, target.quality)
    l_cos = mse(pred.cos2, target.cos2)
    l_sin = mse(pred.sin2, target.sin2)
    l_width = mse(pred.width, target.width)
    return LossBreakdown(l_center, l_cos, l_sin, l_width, l_center + l_cos + l_sin + l_width)


def save_heatmaps(maps: HeatmapSet, width_scale: float, path: Path | str) -> None:
    """Write a JSON header line then the four planes as row-major float32."""
    h, w = maps.shape
    header = json.dumps({"h": h, "w": w, "width_scale": width_scale}).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(header)
        for name in _PLANES:
            fh.write(np.ascontiguousarray(getattr(maps, name), dtype="<f4").tobytes())


def load_heatmaps(path: Path | str) -> tuple[HeatmapSet, float]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        h, w = int(header["h"]), int(header["w"])
        plane_bytes = h * w * struct.calcsize("<f")
        planes = []
        for _ in _PLANES:
            raw = fh.read(plane_bytes)
            planes.append(np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(float))
    return HeatmapSet(*planes), float(header["width_scale"])
