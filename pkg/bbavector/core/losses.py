"""Training losses on the four maps and their gradients w.r.t. the (activated) predictions.

Every term is normalised by N, the object count of the image (cells where the
ground-truth heatmap equals 1). Probabilities are clamped to [EPS, 1 - EPS]
before logs; the gradient is zero wherever the clamp is active.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .codec import TargetMaps
from .errors import NoPositives, ShapeMismatch
from .schemas import LossReport

EPS = 1e-4

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class FocalParams:
    focal_alpha: float = 2.0
    focal_beta: float = 4.0

    def __post_init__(self):
        if not (self.focal_alpha > 0 and self.focal_beta > 0):
            raise ValueError("focal exponents must be positive")


@dataclass(frozen=True, eq=False)
class MapGradients:
    P: np.ndarray
    O: np.ndarray
    B: np.ndarray
    alpha: np.ndarray


def smooth_l1(x: ArrayLike) -> ArrayLike:
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * ax * ax, ax - 0.5)
    return float(out) if np.ndim(out) == 0 else out


def smooth_l1_grad(x: ArrayLike) -> ArrayLike:
    out = np.where(np.abs(x) < 1.0, x, np.sign(x))
    return float(out) if np.ndim(out) == 0 else out


def _clamp(p: np.ndarray, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Clamped values and the mask where the clamp is inactive"""
    p = np.asarray(p, dtype=np.float64)
    return np.clip(p, eps, 1.0 - eps), (p >= eps) & (p <= 1.0 - eps)


def _check_positives(n: int) -> int:
    if n <= 0:
        raise NoPositives("no annotated centers in the target maps")
    return n


def heatmap_loss(P: np.ndarray, P_hat: np.ndarray, params: FocalParams = FocalParams(), eps: float = EPS) -> float:
    return _heatmap(P, P_hat, params, eps)[0]


def heatmap_loss_grad(P: np.ndarray, P_hat: np.ndarray, params: FocalParams = FocalParams(), eps: float = EPS) -> np.ndarray:
    return _heatmap(P, P_hat, params, eps)[1]


def _heatmap(P, P_hat, params: FocalParams, eps: float):
    P_hat = np.asarray(P_hat, dtype=np.float64)
    if np.shape(P) != P_hat.shape:
        raise ShapeMismatch(f"heatmap shapes differ: {np.shape(P)} vs {P_hat.shape}")
    positive = P_hat == 1.0
    n = _check_positives(int(np.count_nonzero(positive)))
    a, b = params.focal_alpha, params.focal_beta
    p, active = _clamp(P, eps)

    log_p, log_q = np.log(p), np.log1p(-p)
    weight = (1.0 - P_hat) ** b
    pos_term = (1.0 - p) ** a * log_p
    neg_term = weight * p ** a * log_q
    loss = -(pos_term[positive].sum() + neg_term[~positive].sum()) / n

    pos_grad = -a * (1.0 - p) ** (a - 1) * log_p + (1.0 - p) ** a / p
    neg_grad = weight * (a * p ** (a - 1) * log_q - p ** a / (1.0 - p))
    grad = -np.where(positive, pos_grad, neg_grad) / n
    return float(loss), np.where(active, grad, 0.0)


def _regression(pred, gt, mask, n_objects):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[1:] != np.shape(mask):
        raise ShapeMismatch(f"regression shapes differ: {pred.shape}, {gt.shape}, mask {np.shape(mask)}")
    mask = np.asarray(mask, dtype=bool)
    n = _check_positives(int(mask.sum()) if n_objects is None else n_objects)

    diff = pred[:, mask] - gt[:, mask]
    grad = np.zeros_like(pred)
    grad[:, mask] = smooth_l1_grad(diff) / n
    return float(np.sum(smooth_l1(diff)) / n), grad


def offset_loss(pred_offsets, gt_offsets, mask, n_objects: Optional[int] = None) -> float:
    return _regression(pred_offsets, gt_offsets, mask, n_objects)[0]


def offset_loss_grad(pred_offsets, gt_offsets, mask, n_objects: Optional[int] = None) -> np.ndarray:
    return _regression(pred_offsets, gt_offsets, mask, n_objects)[1]


def box_loss(pred_B, gt_B, mask, n_objects: Optional[int] = None) -> float:
    return _regression(pred_B, gt_B, mask, n_objects)[0]


def box_loss_grad(pred_B, gt_B, mask, n_objects: Optional[int] = None) -> np.ndarray:
    return _regression(pred_B, gt_B, mask, n_objects)[1]


def _orientation(pred_alpha, gt_alpha, mask, n_objects, eps):
    pred_alpha = np.asarray(pred_alpha, dtype=np.float64)
    gt_alpha = np.asarray(gt_alpha, dtype=np.float64)
    if pred_alpha.shape != gt_alpha.shape or pred_alpha.shape[1:] != np.shape(mask):
        raise ShapeMismatch(f"orientation shapes differ: {pred_alpha.shape}, {gt_alpha.shape}")
    mask = np.asarray(mask, dtype=bool)
    n = _check_positives(int(mask.sum()) if n_objects is None else n_objects)

    p, active = _clamp(pred_alpha[:, mask], eps)
    y = gt_alpha[:, mask]
    loss = -np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)) / n

    grad = np.zeros_like(pred_alpha)
    grad[:, mask] = np.where(active, -(y / p - (1.0 - y) / (1.0 - p)) / n, 0.0)
    return float(loss), grad


def orientation_loss(pred_alpha, gt_alpha, mask, n_objects: Optional[int] = None, eps: float = EPS) -> float:
    return _orientation(pred_alpha, gt_alpha, mask, n_objects, eps)[0]


def orientation_loss_grad(pred_alpha, gt_alpha, mask, n_objects: Optional[int] = None, eps: float = EPS) -> np.ndarray:
    return _orientation(pred_alpha, gt_alpha, mask, n_objects, eps)[1]


def total_loss(
    prediction: TargetMaps,
    target: TargetMaps,
    params: FocalParams = FocalParams(),
    eps: float = EPS,
) -> Tuple[LossReport, MapGradients]:
    """L = L_h + L_o + L_b + L_alpha, unweighted, with the gradient of L for each predicted plane"""
    if prediction.P.shape != target.P.shape:
        raise ShapeMismatch(f"prediction grid {prediction.P.shape} does not match target {target.P.shape}")
    n = _check_positives(target.object_count())
    mask = target.center_mask()

    l_h, g_h = _heatmap(prediction.P, target.P, params, eps)
    l_o, g_o = _regression(prediction.O, target.O, mask, n)
    l_b, g_b = _regression(prediction.B, target.B, mask, n)
    l_a, g_a = _orientation(prediction.alpha, target.alpha, mask, n, eps)

    report = LossReport(l_h=l_h, l_o=l_o, l_b=l_b, l_alpha=l_a, total=l_h + l_o + l_b + l_a)
    return report, MapGradients(P=g_h, O=g_o, B=g_b, alpha=g_a)
