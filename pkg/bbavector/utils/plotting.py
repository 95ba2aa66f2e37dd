import io
from pathlib import Path
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

from bbavector.core.schemas import AnnotationRecord, Detection, MatchResult  # noqa: E402
from bbavector.utils.utils import atomic_write  # noqa: E402


def _save(fig, path: Path) -> None:
    buffer = io.BytesIO()
    fig.savefig(buffer, format='png', dpi=100, bbox_inches='tight')
    atomic_write(path, buffer.getvalue())


def plot_pr_curves(result: MatchResult, out_dir) -> List[Path]:
    """One precision-recall PNG per class"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, class_result in result.classes.items():
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.step(class_result.recall, class_result.precision, where='post', color='tab:blue')
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel('Recall')
        ax.set_ylabel('Precision')
        ax.set_title(f"{name}  AP={class_result.ap:.4f}")
        path = out_dir / f"pr_{name}.png"
        _save(fig, path)
        plt.close(fig)
        written.append(path)
    return written


def plot_overlay(
    path,
    dets: Sequence[Detection],
    gts: Sequence[AnnotationRecord] = (),
    image_size: Optional[Sequence[int]] = None,
    image=None,
) -> Path:
    """Ground truth in green, RBB detections in red, HBB detections in orange"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 8))
    if image is not None:
        ax.imshow(image)
    for gt in gts:
        ax.add_patch(Polygon(gt.corners, closed=True, fill=False, edgecolor='lime', linewidth=1.5))
    for det in dets:
        color = 'red' if det.is_rbb else 'orange'
        ax.add_patch(Polygon(det.corners, closed=True, fill=False, edgecolor=color, linewidth=1))
        ax.text(det.corners[0][0], det.corners[0][1], f"{det.score:.2f}", color=color, fontsize=6)

    if image_size is not None:
        width, height = image_size
    else:
        points = [p for obj in [*gts, *dets] for p in obj.corners] or [(0, 0), (1, 1)]
        width = max(p[0] for p in points) + 1
        height = max(p[1] for p in points) + 1
    ax.set_xlim(0, width)
    ax.set_ylim(height, 0)
    ax.set_aspect('equal')
    _save(fig, path)
    plt.close(fig)
    return path
