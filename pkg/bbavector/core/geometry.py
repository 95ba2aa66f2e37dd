"""Rotated-rectangle and convex-quadrilateral geometry.

Image coordinates are used throughout: x grows to the right, y grows downward.
With that convention a quadrilateral listed clockwise on screen has a positive
shoelace area, and that is the canonical corner order of an ``OrientedBox``.
"""
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import DegenerateBox

AREA_EPS = 1e-6


class Point2(NamedTuple):
    x: float
    y: float


Quad = Tuple[Point2, Point2, Point2, Point2]


@dataclass(frozen=True)
class OrientedBox:
    """Convex quadrilateral in canonical clockwise order, first corner top-left.

    Build it through ``canonicalize``; the constructor does not reorder.
    """
    corners: Quad

    @property
    def center(self) -> Point2:
        xs, ys = zip(*self.corners)
        return Point2(sum(xs) / 4.0, sum(ys) / 4.0)

    @property
    def area(self) -> float:
        return polygon_area(self.corners)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.corners, dtype=np.float64)

    def translated(self, dx: float, dy: float) -> 'OrientedBox':
        return OrientedBox(tuple(Point2(x + dx, y + dy) for x, y in self.corners))


@dataclass(frozen=True)
class BBAVectors:
    """Center-to-edge-midpoint vectors: top, right, bottom, left"""
    t: Point2
    r: Point2
    b: Point2
    l: Point2

    def as_array(self) -> np.ndarray:
        return np.array([*self.t, *self.r, *self.b, *self.l], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'BBAVectors':
        v = [float(x) for x in values]
        return cls(Point2(v[0], v[1]), Point2(v[2], v[3]), Point2(v[4], v[5]), Point2(v[6], v[7]))

    def scaled(self, factor: float) -> 'BBAVectors':
        return BBAVectors.from_array(self.as_array() * factor)


@dataclass(frozen=True)
class HBBSize:
    w_e: float
    h_e: float


def polygon_area(points: Sequence[Sequence[float]]) -> float:
    """Signed shoelace area; positive for clockwise-on-screen order"""
    n = len(points)
    total = 0.0
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


def canonicalize(corners: Sequence[Sequence[float]]) -> OrientedBox:
    pts = np.asarray(corners, dtype=np.float64)
    if pts.shape != (4, 2):
        raise DegenerateBox(f"expected 4 corners, got array of shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateBox("corners must be finite")

    center = pts.mean(axis=0)
    angles = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
    ring = pts[np.argsort(angles, kind='stable')]

    area = polygon_area(ring - center)
    if area <= AREA_EPS:
        raise DegenerateBox(f"quadrilateral area {area:.3g} px^2 is too small")

    # every turn must be strictly clockwise on screen: no collinear triple, no reflex corner
    edges = np.roll(ring, -1, axis=0) - ring
    nxt = np.roll(edges, -1, axis=0)
    turns = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    scale = float(np.abs(edges).max())
    if np.any(turns <= 1e-12 * scale * scale):
        raise DegenerateBox("corners are collinear or do not form a convex quadrilateral")

    start = int(np.lexsort((ring[:, 0], ring[:, 1]))[0])
    ring = np.roll(ring, -start, axis=0)
    return OrientedBox(tuple(Point2(float(x), float(y)) for x, y in ring))


def box_from_params(cx: float, cy: float, w: float, h: float, angle_deg: float) -> OrientedBox:
    """Rectangle of size w x h centred at (cx, cy), rotated clockwise on screen by angle_deg"""
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    corners = []
    for dx, dy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        corners.append((cx + dx * cos_t - dy * sin_t, cy + dx * sin_t + dy * cos_t))
    return canonicalize(corners)


def bba_vectors(box: OrientedBox) -> BBAVectors:
    ring = box.as_array()
    center = ring.mean(axis=0)
    mids = (ring + np.roll(ring, -1, axis=0)) / 2.0 - center

    # top = smallest y; a tie goes to the vector reached first sweeping clockwise from straight up
    ys = mids[:, 1]
    tol = 1e-9 * max(1.0, float(np.abs(mids).max()))
    candidates = np.flatnonzero(ys <= ys.min() + tol)
    k = int(candidates[np.argmax(mids[candidates, 0])])

    t, r, b, l = (Point2(float(mids[(k + i) % 4, 0]), float(mids[(k + i) % 4, 1])) for i in range(4))
    return BBAVectors(t=t, r=r, b=b, l=l)


def corners_from_vectors(center: Sequence[float], v: BBAVectors) -> Quad:
    """tl, tr, br, bl from a center and its BBAVectors"""
    cx, cy = center
    return (
        Point2(cx + v.t.x + v.l.x, cy + v.t.y + v.l.y),
        Point2(cx + v.t.x + v.r.x, cy + v.t.y + v.r.y),
        Point2(cx + v.b.x + v.r.x, cy + v.b.y + v.r.y),
        Point2(cx + v.b.x + v.l.x, cy + v.b.y + v.l.y),
    )


def corners_from_hbb(center: Sequence[float], size: HBBSize) -> Quad:
    cx, cy = center
    hw, hh = size.w_e / 2.0, size.h_e / 2.0
    return (
        Point2(cx - hw, cy - hh),
        Point2(cx + hw, cy - hh),
        Point2(cx + hw, cy + hh),
        Point2(cx - hw, cy + hh),
    )


def enclosing_hbb(box: OrientedBox) -> HBBSize:
    xs, ys = zip(*box.corners)
    return HBBSize(w_e=max(xs) - min(xs), h_e=max(ys) - min(ys))


def hbb_box(box: OrientedBox) -> OrientedBox:
    xs, ys = zip(*box.corners)
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    return OrientedBox((Point2(x0, y0), Point2(x1, y0), Point2(x1, y1), Point2(x0, y1)))


def _clip(subject: List[Tuple[float, float]], clipper: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Sutherland-Hodgman clipping of a polygon by a convex, positively oriented clipper"""
    output = subject
    ax, ay = clipper[-1]
    for bx, by in clipper:
        if not output:
            break
        ex, ey = bx - ax, by - ay
        points = output
        output = []
        sx, sy = points[-1]
        ds = ex * (sy - ay) - ey * (sx - ax)
        for px, py in points:
            dp = ex * (py - ay) - ey * (px - ax)
            if dp >= 0:
                if ds < 0:
                    f = ds / (ds - dp)
                    output.append((sx + f * (px - sx), sy + f * (py - sy)))
                output.append((px, py))
            elif ds >= 0:
                f = ds / (ds - dp)
                output.append((sx + f * (px - sx), sy + f * (py - sy)))
            sx, sy, ds = px, py, dp
        ax, ay = bx, by
    return output


def convex_polygon_iou(p: Sequence[Sequence[float]], q: Sequence[Sequence[float]]) -> float:
    """IOU of two convex polygons of either orientation; 0 if one of them is degenerate"""
    ox = sum(pt[0] for pt in p) / len(p)
    oy = sum(pt[1] for pt in p) / len(p)
    a = [(float(x) - ox, float(y) - oy) for x, y in p]
    b = [(float(x) - ox, float(y) - oy) for x, y in q]

    area_a = polygon_area(a)
    area_b = polygon_area(b)
    if area_a < 0:
        a.reverse()
        area_a = -area_a
    if area_b < 0:
        b.reverse()
        area_b = -area_b
    if not (area_a > AREA_EPS and area_b > AREA_EPS) or not math.isfinite(area_a + area_b):
        return 0.0

    inter = _clip(a, b)
    inter_area = abs(polygon_area(inter)) if len(inter) >= 3 else 0.0
    union = area_a + area_b - inter_area
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter_area / union))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    for box in (a, b):
        if abs(box.area) <= AREA_EPS:
            raise DegenerateBox(f"box area {box.area:.3g} px^2 is too small")
    return convex_polygon_iou(a.corners, b.corners)


def orientation_class(box: OrientedBox, iou_thresh: float = 0.95) -> int:
    """1 (RBB) when the box overlaps its enclosing horizontal box by less than iou_thresh, else 0 (HBB)"""
    area = abs(box.area)
    if area <= AREA_EPS:
        raise DegenerateBox(f"box area {box.area:.3g} px^2 is too small")
    # the box lies inside its enclosing HBB, so their IOU is the area ratio
    hbb = enclosing_hbb(box)
    return 1 if area / (hbb.w_e * hbb.h_e) < iou_thresh else 0
