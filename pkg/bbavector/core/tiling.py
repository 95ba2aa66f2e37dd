"""Patch-based inference support: tile layout, annotation cropping, global remapping, merge."""
import math
from typing import Iterable, List, Optional, Sequence

from .errors import InvalidOverlap
from .geometry import Point2
from .postprocess import rotated_nms
from .schemas import AnnotationRecord, Detection, TileSpec


def _starts(length: int, patch: int, step: int) -> List[int]:
    """Window starts along one axis; the last window is pulled inward, never padded"""
    if length <= patch:
        return [0]
    starts = list(range(0, length - patch + 1, step))
    if starts[-1] + patch < length:
        starts.append(length - patch)
    return starts


def make_tiles(
    image_w: int,
    image_h: int,
    patch: int = 600,
    overlap: int = 100,
    scales: Sequence[float] = (0.5, 1.0),
    step: Optional[int] = None,
    image_id: str = "",
) -> List[TileSpec]:
    """Tiles per scale on a grid of step = patch - overlap (or an explicit step)"""
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {image_w}x{image_h}")
    if not 0 <= overlap < patch:
        raise InvalidOverlap(f"overlap {overlap} must lie in [0, patch={patch})")
    step = patch - overlap if step is None else step
    if step <= 0:
        raise InvalidOverlap(f"step must be positive, got {step}")

    tiles = []
    for scale in scales:
        scaled_w = max(1, int(math.floor(image_w * scale)))
        scaled_h = max(1, int(math.floor(image_h * scale)))
        width, height = min(patch, scaled_w), min(patch, scaled_h)
        for y in _starts(scaled_h, patch, step):
            for x in _starts(scaled_w, patch, step):
                tiles.append(TileSpec(
                    origin=Point2(x / scale, y / scale),
                    size=patch,
                    scale=scale,
                    width=width,
                    height=height,
                    image_id=image_id,
                    tile_id=f"{image_id}__{scale:g}__{x}___{y}",
                ))
    return tiles


def to_tile(point: Sequence[float], tile: TileSpec) -> Point2:
    ox, oy = tile.scaled_origin
    return Point2(point[0] * tile.scale - ox, point[1] * tile.scale - oy)


def crop_annotations(annotations: Iterable[AnnotationRecord], tile: TileSpec) -> List[AnnotationRecord]:
    """Keep objects whose center falls inside the tile, in tile coordinates, unclipped"""
    cropped = []
    for record in annotations:
        corners = tuple(to_tile(p, tile) for p in record.corners)
        cx = sum(p.x for p in corners) / 4.0
        cy = sum(p.y for p in corners) / 4.0
        if not (0 <= cx < tile.width and 0 <= cy < tile.height):
            continue
        truncated = not all(0 <= p.x <= tile.width and 0 <= p.y <= tile.height for p in corners)
        cropped.append(record.model_copy(update={'corners': corners, 'truncated': truncated}))
    return cropped


def to_global(det: Detection, tile: TileSpec) -> Detection:
    corners = tuple(
        Point2(x / tile.scale + tile.origin.x, y / tile.scale + tile.origin.y)
        for x, y in det.corners
    )
    return det.model_copy(update={'corners': corners, 'image_id': tile.image_id or det.image_id})


def merge(dets: Sequence[Detection], iou_thresh: float = 0.1) -> List[Detection]:
    """Pooled class-wise NMS over detections already in global coordinates"""
    return rotated_nms(dets, iou_thresh)
