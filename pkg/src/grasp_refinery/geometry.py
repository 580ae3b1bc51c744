"""Rotated-rectangle grasp geometry: poses, polygon clipping, IOU, angle metrics.

Coordinates follow the image convention: x grows right, y grows down, and
angles are measured from the +x axis. Grasp angles are pi-periodic because a
parallel jaw flipped by 180 degrees is the same grasp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyGroundTruthError, InvalidGraspError

# Points within this distance of a clip edge count as inside, which keeps
# shared-edge and shared-vertex intersections stable.
CLIP_EPS = 1e-9

DEFAULT_IOU_MIN = 0.25
DEFAULT_ANGLE_MAX = math.radians(30.0)

_FIELDS = ("center_x", "center_y", "angle", "opening", "jaw_size")


def canonical_angle(theta: float) -> float:
    """Fold a pi-periodic angle into the canonical range (-pi/2, pi/2]."""
    t = theta - math.pi * math.floor(theta / math.pi)  # [0, pi)
    if t > math.pi / 2.0:
        t -= math.pi
    return t


@dataclass(frozen=True)
class GraspPose:
    """A parallel-jaw grasp: center, orientation, opening and jaw footprint.

    ``opening`` is the jaw separation along the grasp axis and ``jaw_size``
    the plate width across it; both are strictly positive. The angle is
    stored canonically in (-pi/2, pi/2].
    """

    center_x: float
    center_y: float
    angle: float
    opening: float
    jaw_size: float

    def __post_init__(self):
        for name in _FIELDS:
            raw = getattr(self, name)
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise InvalidGraspError(f"{name} is not a number: {raw!r}") from None
            if not math.isfinite(value):
                raise InvalidGraspError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.opening <= 0.0 or self.jaw_size <= 0.0:
            raise InvalidGraspError(
                f"extents must be positive (opening={self.opening}, jaw_size={self.jaw_size})"
            )
        object.__setattr__(self, "angle", canonical_angle(self.angle))


def pose_to_dict(pose: GraspPose) -> dict:
    """Serialize a pose with the angle in radians."""
    return {
        "x": pose.center_x,
        "y": pose.center_y,
        "angle": pose.angle,
        "opening": pose.opening,
        "jaw_size": pose.jaw_size,
    }


def pose_from_dict(data: dict) -> GraspPose:
    return GraspPose(data["x"], data["y"], data["angle"], data["opening"], data["jaw_size"])


def _signed_area(points) -> float:
    """Shoelace sum / 2; positive for counter-clockwise vertex order."""
    total = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return float(0.5 * total)


def shoelace_area(points) -> float:
    """Unsigned polygon area from its vertex list."""
    return abs(_signed_area(points))


@dataclass(frozen=True)
class GraspRectangle:
    """Oriented rectangle as a (4, 2) corner array in counter-clockwise order.

    Valid corners have positive shoelace area and opposite sides equal and
    parallel within 1e-6 relative tolerance.
    """

    corners: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=float)
        if c.shape != (4, 2) or not np.all(np.isfinite(c)):
            raise InvalidGraspError("corners must be a finite 4x2 array")
        object.__setattr__(self, "corners", c)
        if _signed_area(c) <= 0.0:
            raise InvalidGraspError("corners must be counter-clockwise with positive area")
        edges = np.roll(c, -1, axis=0) - c
        scale = float(np.max(np.linalg.norm(edges, axis=1)))
        tol = 1e-6 * scale
        if (
            np.max(np.abs(edges[0] + edges[2])) > tol
            or np.max(np.abs(edges[1] + edges[3])) > tol
        ):
            raise InvalidGraspError("opposite sides must be parallel and equal")

    @property
    def area(self) -> float:
        return _signed_area(self.corners)

    @property
    def centroid(self) -> tuple[float, float]:
        c = self.corners.mean(axis=0)
        return float(c[0]), float(c[1])


def rect_from_grasp(pose: GraspPose) -> GraspRectangle:
    """Expand a pose into its rectangle: center +- (opening/2)u +- (jaw_size/2)v."""
    u = np.array([math.cos(pose.angle), math.sin(pose.angle)])
    v = np.array([-math.sin(pose.angle), math.cos(pose.angle)])
    c = np.array([pose.center_x, pose.center_y])
    a = 0.5 * pose.opening
    b = 0.5 * pose.jaw_size
    corners = np.array([c - a * u - b * v, c + a * u - b * v, c + a * u + b * v, c - a * u + b * v])
    return GraspRectangle(corners)


def _intersect_lines(s, e, c1, c2):
    """Intersection of lines (s, e) and (c1, c2) by the determinant formula."""
    dcx, dcy = c1[0] - c2[0], c1[1] - c2[1]
    dpx, dpy = s[0] - e[0], s[1] - e[1]
    n1 = c1[0] * c2[1] - c1[1] * c2[0]
    n2 = s[0] * e[1] - s[1] * e[0]
    den = dcx * dpy - dcy * dpx
    return ((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den)


def clip_convex(subject: Sequence, clip_poly: Sequence) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of a convex subject by a convex CCW polygon."""
    output = [(float(p[0]), float(p[1])) for p in subject]
    n = len(clip_poly)
    for i in range(n):
        if not output:
            return []
        c1 = clip_poly[i]
        c2 = clip_poly[(i + 1) % n]
        ex, ey = c2[0] - c1[0], c2[1] - c1[1]
        tol = -CLIP_EPS * math.hypot(ex, ey)

        def side(p):
            return ex * (p[1] - c1[1]) - ey * (p[0] - c1[0])

        current = output
        output = []
        s = current[-1]
        s_in = side(s) >= tol
        for e in current:
            e_in = side(e) >= tol
            if e_in != s_in:
                output.append(_intersect_lines(s, e, c1, c2))
            if e_in:
                output.append(e)
            s, s_in = e, e_in
    return output


def intersection_area(a: GraspRectangle, b: GraspRectangle) -> float:
    """Exact overlap area of two rectangles via convex polygon clipping."""
    poly = clip_convex(a.corners, b.corners)
    if len(poly) < 3:
        return 0.0
    return shoelace_area(poly)


def iou(a: GraspRectangle, b: GraspRectangle) -> float:
    """Intersection over union in [0, 1]."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def angle_distance(a: float, b: float) -> float:
    """Distance between pi-periodic angles, in [0, pi/2]."""
    d = (a - b) % math.pi
    return min(d, math.pi - d)


def max_iou(pred: GraspPose, gts: Sequence[GraspPose]) -> tuple[float, int]:
    """Best IOU of a prediction against ground-truth poses.

    Returns (best_iou, index of the best match); ties keep the lowest index.
    Raises EmptyGroundTruthError when ``gts`` is empty.
    """
    if not gts:
        raise EmptyGroundTruthError("max_iou needs at least one ground-truth grasp")
    rect = rect_from_grasp(pred)
    best = -1.0
    best_index = 0
    for i, gt in enumerate(gts):
        value = iou(rect, rect_from_grasp(gt))
        if value > best:
            best = value
            best_index = i
    return best, best_index


def grasp_success(
    pred: GraspPose,
    gts: Sequence[GraspPose],
    iou_min: float = DEFAULT_IOU_MIN,
    angle_max: float = DEFAULT_ANGLE_MAX,
) -> bool:
    """Rectangle-metric success: some ground truth overlaps at ``iou_min`` or
    better while its angle lies within ``angle_max`` radians."""
    if not gts:
        raise EmptyGroundTruthError("grasp_success needs at least one ground-truth grasp")
    rect = rect_from_grasp(pred)
    for gt in gts:
        if angle_distance(pred.angle, gt.angle) <= angle_max:
            if iou(rect, rect_from_grasp(gt)) >= iou_min:
                return True
    return False
