"""Ground truth -> target maps (P, O, B, alpha) and predicted maps -> detections."""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import maximum_filter

from bbavector.utils.utils import category_id
from .errors import DegenerateBox, InvalidOverlap, OutOfBounds, ShapeMismatch
from .geometry import (
    HBBSize,
    BBAVectors,
    bba_vectors,
    canonicalize,
    corners_from_hbb,
    corners_from_vectors,
    enclosing_hbb,
    orientation_class,
)
from .schemas import AnnotationRecord, Detection

logger = logging.getLogger(__name__)

BOX_CHANNELS = 10
MIN_SIGMA = 1.0 / 6.0


@dataclass(frozen=True)
class GaussianSpec:
    sigma: float
    center: Tuple[int, int]  # (column, row) on the output grid

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class TargetMaps:
    """The four dense planes at output stride s.

    P is (K, H, W), O is (2, H, W), B is (10, H, W) with channels
    t.x, t.y, r.x, r.y, b.x, b.y, l.x, l.y, w_e, h_e, alpha is (1, H, W).
    O and B are in output-grid units. Arrays are exposed read-only.
    """
    P: np.ndarray
    O: np.ndarray
    B: np.ndarray
    alpha: np.ndarray
    s: int = 4
    skipped: int = 0

    def __post_init__(self):
        for name in ('P', 'O', 'B', 'alpha'):
            view = np.asarray(getattr(self, name), dtype=np.float64).view()
            view.flags.writeable = False
            object.__setattr__(self, name, view)
        if self.P.ndim != 3:
            raise ShapeMismatch(f"P must be (K, H, W), got shape {self.P.shape}")
        grid = self.P.shape[1:]
        expected = {'O': (2, *grid), 'B': (BOX_CHANNELS, *grid), 'alpha': (1, *grid)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name} must have shape {shape}, got {getattr(self, name).shape}")
        if self.s <= 0:
            raise ShapeMismatch(f"stride must be positive, got {self.s}")

    @property
    def K(self) -> int:
        return self.P.shape[0]

    @property
    def height(self) -> int:
        return self.P.shape[1]

    @property
    def width(self) -> int:
        return self.P.shape[2]

    @property
    def image_size(self) -> Tuple[int, int]:
        """(H, W) of the input image the grid covers"""
        return self.height * self.s, self.width * self.s

    def center_mask(self) -> np.ndarray:
        """Cells supervised for O, B and alpha: any class channel of P equals 1"""
        return np.any(self.P == 1.0, axis=0)

    def object_count(self) -> int:
        return int(np.count_nonzero(self.P == 1.0))

    @classmethod
    def zeros(cls, K: int, height: int, width: int, s: int = 4) -> 'TargetMaps':
        return cls(
            P=np.zeros((K, height, width)),
            O=np.zeros((2, height, width)),
            B=np.zeros((BOX_CHANNELS, height, width)),
            alpha=np.zeros((1, height, width)),
            s=s,
        )

    def replace(self, **planes) -> 'TargetMaps':
        fields = {'P': self.P, 'O': self.O, 'B': self.B, 'alpha': self.alpha, 's': self.s, 'skipped': self.skipped}
        fields.update(planes)
        return TargetMaps(**fields)


def gaussian_radius(box_h: float, box_w: float, min_overlap: float = 0.7) -> float:
    """Largest corner displacement keeping IOU >= min_overlap, over the three corner-pair cases"""
    if not 0.0 < min_overlap < 1.0:
        raise InvalidOverlap(f"min_overlap must lie in (0, 1), got {min_overlap}")
    h, w, o = float(box_h), float(box_w), float(min_overlap)

    # one corner inside the ground truth, the other outside
    b1 = h + w
    c1 = w * h * (1 - o) / (1 + o)
    r1 = (b1 - math.sqrt(b1 ** 2 - 4 * c1)) / 2

    # both corners inside
    a2 = 4.0
    b2 = 2 * (h + w)
    c2 = (1 - o) * w * h
    r2 = (b2 - math.sqrt(b2 ** 2 - 4 * a2 * c2)) / (2 * a2)

    # both corners outside
    a3 = 4 * o
    b3 = 2 * o * (h + w)
    c3 = (o - 1) * w * h
    r3 = (-b3 + math.sqrt(b3 ** 2 - 4 * a3 * c3)) / (2 * a3)

    return max(0.0, min(r1, r2, r3))


def splat_gaussian(P: np.ndarray, class_id: int, spec: GaussianSpec) -> None:
    """Write max(existing, gaussian) into channel class_id of P in place"""
    _, height, width = P.shape
    cx, cy = spec.center
    if not (0 <= cx < width and 0 <= cy < height):
        raise OutOfBounds(f"gaussian center {spec.center} outside grid {width}x{height}")

    extent = max(1, int(math.ceil(3 * spec.sigma)))
    x0, x1 = max(0, cx - extent), min(width, cx + extent + 1)
    y0, y1 = max(0, cy - extent), min(height, cy + extent + 1)
    ys, xs = np.ogrid[y0 - cy:y1 - cy, x0 - cx:x1 - cx]
    bump = np.exp(-(xs * xs + ys * ys) / (2 * spec.sigma ** 2))

    region = P[class_id, y0:y1, x0:x1]
    np.maximum(region, bump, out=region)


def encode(
    annotations: Sequence[AnnotationRecord],
    image: Tuple[int, int],
    K: int,
    s: int = 4,
    min_overlap: float = 0.7,
    rbb_iou_thresh: float = 0.95,
) -> TargetMaps:
    """Build the target maps of one image of size image = (H, W).

    Objects out of bounds, of a class >= K or with degenerate corners are skipped
    and counted in ``TargetMaps.skipped``.
    """
    H, W = image
    grid_h, grid_w = math.ceil(H / s), math.ceil(W / s)
    P = np.zeros((K, grid_h, grid_w))
    O = np.zeros((2, grid_h, grid_w))
    B = np.zeros((BOX_CHANNELS, grid_h, grid_w))
    alpha = np.zeros((1, grid_h, grid_w))

    skipped = 0
    for record in annotations:
        try:
            cid = category_id(record.category)
            if cid >= K:
                raise OutOfBounds(f"class {record.category} (id {cid}) not among the first {K} categories")
            if not all(0 <= x < W and 0 <= y < H for x, y in record.corners):
                raise OutOfBounds(f"object corners {record.corners} leave the {W}x{H} image")
            box = canonicalize(record.corners)
        except (OutOfBounds, DegenerateBox, KeyError) as e:
            skipped += 1
            logger.debug("Skipping object: %s", e)
            continue

        cx, cy = box.center
        gx, gy = cx / s, cy / s
        ix, iy = int(math.floor(gx)), int(math.floor(gy))
        hbb = enclosing_hbb(box)

        O[0, iy, ix] = gx - ix
        O[1, iy, ix] = gy - iy
        B[:8, iy, ix] = bba_vectors(box).as_array() / s
        B[8, iy, ix] = hbb.w_e / s
        B[9, iy, ix] = hbb.h_e / s
        alpha[0, iy, ix] = orientation_class(box, rbb_iou_thresh)

        radius = gaussian_radius(hbb.h_e / s, hbb.w_e / s, min_overlap)
        splat_gaussian(P, cid, GaussianSpec(sigma=max(radius / 3, MIN_SIGMA), center=(ix, iy)))

    if skipped:
        logger.warning("Skipped %d of %d objects while encoding", skipped, len(annotations))
    return TargetMaps(P=P, O=O, B=B, alpha=alpha, s=s, skipped=skipped)


def find_peaks(P: np.ndarray, top_k: int) -> np.ndarray:
    """Flat indices of the top_k positive 3x3 local maxima, best first, ties in (class, row, column) order"""
    if top_k <= 0:
        return np.empty(0, dtype=np.intp)
    pooled = maximum_filter(P, size=(1, 3, 3), mode='constant', cval=-np.inf)
    flat = P.ravel()
    # a flat zero background equals its own max-pool; it holds no peaks
    candidates = np.flatnonzero((P >= pooled) & (P > 0))
    scores = flat[candidates]
    if candidates.size > top_k:
        cut = candidates.size - top_k
        kth = np.partition(scores, cut)[cut]
        keep = scores > kth
        ties = np.flatnonzero(scores == kth)[:top_k - int(keep.sum())]
        keep[ties] = True
        candidates, scores = candidates[keep], scores[keep]
    order = np.argsort(-scores, kind='stable')
    return candidates[order]


def decode(
    maps: TargetMaps,
    top_k: int = 500,
    score_thresh: float = 0.1,
    alpha_thresh: float = 0.5,
    use_orientation: bool = True,
    image_id: Optional[str] = None,
) -> List[Detection]:
    """Peaks -> detections in input-image pixels.

    Top-k selection happens before the score threshold. With use_orientation off
    every peak takes the BBAVector branch.
    """
    s = maps.s
    peaks = find_peaks(maps.P, top_k)
    flat_scores = maps.P.ravel()[peaks]
    peaks = peaks[flat_scores >= score_thresh]
    if peaks.size == 0:
        return []

    classes, rows, cols = np.unravel_index(peaks, maps.P.shape)
    img_h, img_w = maps.image_size
    centers_x = np.clip((cols + maps.O[0, rows, cols]) * s, 0.0, img_w)
    centers_y = np.clip((rows + maps.O[1, rows, cols]) * s, 0.0, img_h)
    params = maps.B[:, rows, cols] * s
    alphas = maps.alpha[0, rows, cols]
    scores = np.clip(maps.P[classes, rows, cols], 0.0, 1.0)

    detections = []
    for i in range(peaks.size):
        center = (float(centers_x[i]), float(centers_y[i]))
        is_rbb = (not use_orientation) or bool(alphas[i] > alpha_thresh)
        if is_rbb:
            corners = corners_from_vectors(center, BBAVectors.from_array(params[:8, i]))
        else:
            corners = corners_from_hbb(center, HBBSize(w_e=float(params[8, i]), h_e=float(params[9, i])))
        detections.append(Detection(
            corners=corners,
            score=float(scores[i]),
            class_id=int(classes[i]),
            is_rbb=is_rbb,
            image_id=image_id,
        ))
    return detections
