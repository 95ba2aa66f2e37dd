"""Independent reference implementations the library is checked against."""
import math

import numpy as np
from scipy.stats import qmc

from bbavector.core.geometry import canonicalize, convex_polygon_iou


def inside_convex(points: np.ndarray, corners) -> np.ndarray:
    """Mask of points inside a canonical (clockwise on screen) convex polygon"""
    ring = np.asarray(canonicalize(corners).corners)
    inside = np.ones(len(points), dtype=bool)
    for a, b in zip(ring, np.roll(ring, -1, axis=0)):
        edge = b - a
        rel = points - a
        inside &= edge[0] * rel[:, 1] - edge[1] * rel[:, 0] >= 0
    return inside


def monte_carlo_iou(p, q, log2_samples: int = 20, seed: int = 0) -> float:
    """IOU by quasi-random point sampling over the joint bounding region"""
    both = np.vstack([np.asarray(p, dtype=float), np.asarray(q, dtype=float)])
    lo, hi = both.min(axis=0), both.max(axis=0)
    points = qmc.scale(qmc.Sobol(d=2, scramble=True, seed=seed).random_base2(m=log2_samples), lo, hi)
    in_p, in_q = inside_convex(points, p), inside_convex(points, q)
    union = np.count_nonzero(in_p | in_q)
    return np.count_nonzero(in_p & in_q) / union if union else 0.0


def bisect(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of a function changing sign on [lo, hi]"""
    f_lo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (f_lo > 0):
            lo, f_lo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def displacement_radius(h: float, w: float, min_overlap: float) -> float:
    """Smallest of the three corner-displacement radii found by bisection on the IOU itself"""
    def shifted(r):
        inter = max(h - r, 0) * max(w - r, 0)
        return inter / (2 * h * w - inter)

    def shrunk(r):
        return max(h - 2 * r, 0) * max(w - 2 * r, 0) / (h * w)

    def grown(r):
        return h * w / ((h + 2 * r) * (w + 2 * r))

    limit = min(h, w) / 2
    radii = [bisect(lambda r, iou=iou: iou(r) - min_overlap, 0.0, hi)
             for iou, hi in ((shifted, min(h, w)), (shrunk, limit), (grown, 10 * max(h, w)))]
    return min(radii)


def greedy_nms(dets, iou_thresh: float):
    """Score-ordered greedy suppression checking every kept box"""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept = []
    for i in order:
        if all(
            dets[k].class_id != dets[i].class_id
            or convex_polygon_iou(dets[k].corners, dets[i].corners) <= iou_thresh
            for k in kept
        ):
            kept.append(i)
    return [dets[i] for i in kept]


def closed_form_crossing(aspect: float, iou_thresh: float) -> float:
    """Rotation (degrees) where a w:h = aspect rectangle overlaps its enclosing box by iou_thresh"""
    # IOU = 1 / (1 + (aspect + 1 / aspect) sin t cos t)
    k = aspect + 1.0 / aspect
    return math.degrees(0.5 * math.asin(2 * (1.0 / iou_thresh - 1.0) / k))
