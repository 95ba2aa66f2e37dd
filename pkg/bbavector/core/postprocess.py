"""Greedy rotated NMS and rotated-IOU mean average precision."""
import logging
from collections import defaultdict
from typing import Dict, List, Mapping, Sequence

import numpy as np

from bbavector.utils.utils import category_id, category_name, normalize_category
from .errors import EmptyGroundTruth
from .geometry import convex_polygon_iou
from .schemas import AnnotationRecord, ClassResult, Detection, MatchResult, RankedDetection

logger = logging.getLogger(__name__)


def _score_order(dets: Sequence[Detection]) -> List[int]:
    # score descending; ties keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def _bounds(dets: Sequence[Detection]) -> np.ndarray:
    quads = np.array([d.corners for d in dets], dtype=np.float64).reshape(len(dets), 4, 2)
    return np.concatenate([quads.min(axis=1), quads.max(axis=1)], axis=1)


def rotated_nms(dets: Sequence[Detection], iou_thresh: float = 0.1) -> List[Detection]:
    """Class-wise greedy NMS; a box is suppressed when its IOU with a kept box exceeds iou_thresh"""
    if not 0.0 <= iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must lie in [0, 1], got {iou_thresh}")
    if not dets:
        return []

    order = np.array(_score_order(dets))
    bounds = _bounds(dets)[order]
    classes = np.array([dets[i].class_id for i in order])
    suppressed = np.zeros(len(order), dtype=bool)

    kept = []
    for pos in range(len(order)):
        if suppressed[pos]:
            continue
        kept.append(dets[order[pos]])
        if iou_thresh >= 1.0:
            continue
        x0, y0, x1, y1 = bounds[pos]
        rest = np.arange(pos + 1, len(order))
        # only boxes whose enclosing horizontal boxes touch can overlap
        touching = rest[
            ~suppressed[pos + 1:]
            & (classes[pos + 1:] == classes[pos])
            & (bounds[pos + 1:, 0] <= x1) & (bounds[pos + 1:, 2] >= x0)
            & (bounds[pos + 1:, 1] <= y1) & (bounds[pos + 1:, 3] >= y0)
        ]
        corners = dets[order[pos]].corners
        for other in touching:
            if convex_polygon_iou(corners, dets[order[other]].corners) > iou_thresh:
                suppressed[other] = True
    return kept


def voc_ap(rec: np.ndarray, prec: np.ndarray, use_07_metric: bool = True) -> float:
    """AP from a PR curve; 11-point interpolation when use_07_metric, else all-point area"""
    if rec.size == 0:
        return 0.0
    if use_07_metric:
        points = [np.max(prec[rec >= t]) if np.any(rec >= t) else 0.0 for t in np.linspace(0.0, 1.0, 11)]
        return float(np.sum(points) / 11.0)

    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    i = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def evaluate_class(
    class_id: int,
    dets: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, Sequence[AnnotationRecord]],
    iou_thresh: float = 0.5,
    use_07_metric: bool = True,
) -> ClassResult:
    name = category_name(class_id)
    class_gts = {
        image_id: [g for g in records if normalize_category(g.category) == name]
        for image_id, records in gts.items()
    }
    n_gt = sum(1 for records in class_gts.values() for g in records if not g.difficult)
    if n_gt == 0:
        raise EmptyGroundTruth(f"no non-difficult ground truth for class '{name}'")

    pool = [
        (image_id, d) for image_id in sorted(dets)
        for d in dets[image_id] if d.class_id == class_id
    ]
    pool.sort(key=lambda item: -item[1].score)
    matched = {image_id: [False] * len(records) for image_id, records in class_gts.items()}

    ranked = []
    for image_id, det in pool:
        candidates = class_gts.get(image_id, [])
        best_iou, best = -1.0, None
        for j, gt in enumerate(candidates):
            # difficult ground truths stay available; they never count as matched
            if matched[image_id][j] and not gt.difficult:
                continue
            iou = convex_polygon_iou(det.corners, gt.corners)
            if iou > best_iou:
                best_iou, best = iou, j
        if best is not None and best_iou >= iou_thresh:
            if candidates[best].difficult:
                outcome = 'ignored'
            else:
                matched[image_id][best] = True
                outcome = 'tp'
        else:
            outcome = 'fp'
        ranked.append(RankedDetection(image_id=image_id, score=det.score, outcome=outcome))

    counted = [r for r in ranked if r.outcome != 'ignored']
    tp = np.cumsum([r.outcome == 'tp' for r in counted], dtype=np.float64)
    fp = np.cumsum([r.outcome == 'fp' for r in counted], dtype=np.float64)
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, np.finfo(np.float64).eps)
    ap = voc_ap(recall, precision, use_07_metric)
    return ClassResult(
        category=name,
        n_gt=n_gt,
        detections=ranked,
        precision=precision.tolist(),
        recall=recall.tolist(),
        ap=min(1.0, ap),
    )


def evaluate_map(
    dets: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, Sequence[AnnotationRecord]],
    iou_thresh: float = 0.5,
    use_07_metric: bool = True,
) -> MatchResult:
    """Per-class AP and their mean over classes with at least one non-difficult ground truth"""
    class_ids = sorted({category_id(g.category) for records in gts.values() for g in records})
    results: Dict[str, ClassResult] = {}
    for class_id in class_ids:
        try:
            result = evaluate_class(class_id, dets, gts, iou_thresh, use_07_metric)
        except EmptyGroundTruth as e:
            logger.warning("%s; excluded from mAP", e)
            continue
        results[result.category] = result

    if not results:
        logger.warning("No class has ground truth; mAP reported as 0")
        return MatchResult(classes={}, mAP=0.0)
    mean_ap = float(np.mean([r.ap for r in results.values()]))
    return MatchResult(classes=results, mAP=min(1.0, mean_ap))


def group_by_image(dets: Sequence[Detection]) -> Dict[str, List[Detection]]:
    grouped = defaultdict(list)
    for det in dets:
        grouped[det.image_id or ""].append(det)
    return dict(grouped)
