"""Synthetic detector harness standing in for the network.

Scenes are random oriented boxes (coordinates only). "Predicted" maps are the
encoded targets with controlled noise, and the full decode -> NMS -> mAP chain
runs on them. Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence([seed, stream])``, which is reproducible across platforms.
"""
import logging
import math
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np
from dotenv import dotenv_values
from joblib import Parallel, delayed
from pydantic import ValidationError

from bbavector.core.codec import TargetMaps, decode, encode
from bbavector.core.errors import ParseError, PlacementFailure
from bbavector.core.geometry import OrientedBox, box_from_params, convex_polygon_iou
from bbavector.core.postprocess import evaluate_map, rotated_nms
from bbavector.core.schemas import AnnotationRecord, Detection, MatchResult, NoiseSpec, SceneSpec
from bbavector.utils.utils import category_name

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000
SCENE_STREAM = 0
NOISE_STREAM = 1


def make_rng(seed: int, stream: int = SCENE_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def _fits(box: OrientedBox, width: int, height: int) -> bool:
    return all(0 <= x < width and 0 <= y < height for x, y in box.corners)


def generate_scene(spec: SceneSpec) -> List[AnnotationRecord]:
    rng = make_rng(spec.seed)
    count = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    min_distance = spec.min_separation * spec.stride

    placed: List[Tuple[OrientedBox, float, float]] = []
    cells = set()
    records = []
    for index in range(count):
        for _ in range(MAX_ATTEMPTS):
            w, h = rng.uniform(spec.min_size, spec.max_size, size=2)
            angle = rng.uniform(spec.min_angle, spec.max_angle)
            theta = math.radians(angle)
            half_x = (abs(w * math.cos(theta)) + abs(h * math.sin(theta))) / 2
            half_y = (abs(w * math.sin(theta)) + abs(h * math.cos(theta))) / 2
            if 2 * half_x >= spec.image_width or 2 * half_y >= spec.image_height:
                continue
            cx = rng.uniform(half_x, spec.image_width - half_x)
            cy = rng.uniform(half_y, spec.image_height - half_y)

            box = box_from_params(cx, cy, w, h, angle)
            center = box.center
            cell = (int(center.x // spec.stride), int(center.y // spec.stride))
            if not _fits(box, spec.image_width, spec.image_height) or cell in cells:
                continue
            if any(math.hypot(center.x - px, center.y - py) < min_distance for _, px, py in placed):
                continue
            if not spec.allow_overlap and any(convex_polygon_iou(box.corners, other.corners) > 0 for other, _, _ in placed):
                continue
            break
        else:
            raise PlacementFailure(
                f"could not place object {index + 1} of {count} in {MAX_ATTEMPTS} attempts (seed {spec.seed})"
            )

        placed.append((box, center.x, center.y))
        cells.add(cell)
        class_id = int(rng.integers(0, spec.classes))
        records.append(AnnotationRecord(corners=box.corners, category=category_name(class_id), difficult=0))
    return records


def _is_silent(noise: NoiseSpec) -> bool:
    return not any((
        noise.attenuation, noise.heatmap_std, noise.offset_std,
        noise.box_std, noise.alpha_std, noise.spurious_rate,
    ))


def perturb(maps: TargetMaps, noise: NoiseSpec, seed: int) -> TargetMaps:
    """Attenuate, add Gaussian noise per plane and inject spurious peaks; P and alpha are re-clamped"""
    if _is_silent(noise):
        return maps.replace()

    rng = make_rng(seed, NOISE_STREAM)
    # draws happen in a fixed order so the same seed gives the same noise field at any std
    P = maps.P * (1.0 - noise.attenuation)
    P = P + noise.heatmap_std * rng.standard_normal(P.shape)
    O = maps.O + noise.offset_std * rng.standard_normal(maps.O.shape)
    B = maps.B + noise.box_std * rng.standard_normal(maps.B.shape)
    alpha = maps.alpha + noise.alpha_std * rng.standard_normal(maps.alpha.shape)

    hits = rng.random(P.shape) < noise.spurious_rate
    P[hits] = np.maximum(P[hits], noise.spurious_score)

    return maps.replace(P=np.clip(P, 0.0, 1.0), O=O, B=B, alpha=np.clip(alpha, 0.0, 1.0))


def run_seed(
    scene: SceneSpec,
    noise: NoiseSpec,
    seed: int,
    top_k: int = 500,
    score_thresh: float = 0.1,
    alpha_thresh: float = 0.5,
    nms_iou: float = 0.1,
) -> Tuple[str, List[AnnotationRecord], List[Detection]]:
    """generate -> encode -> perturb -> decode -> rotated NMS for one seed"""
    image_id = f"scene_{seed:06d}"
    records = generate_scene(scene.model_copy(update={'seed': seed}))
    maps = encode(records, (scene.image_height, scene.image_width), K=scene.classes, s=scene.stride)
    predicted = perturb(maps, noise, seed)
    dets = decode(predicted, top_k=top_k, score_thresh=score_thresh, alpha_thresh=alpha_thresh, image_id=image_id)
    return image_id, records, rotated_nms(dets, nms_iou)


def run_pipeline(
    scene: SceneSpec,
    noise: NoiseSpec,
    seeds: Iterable[int],
    top_k: int = 500,
    score_thresh: float = 0.1,
    alpha_thresh: float = 0.5,
    nms_iou: float = 0.1,
    eval_iou: float = 0.5,
    n_jobs: int = 1,
) -> MatchResult:
    seeds = list(seeds)
    outputs = Parallel(n_jobs=n_jobs)(
        delayed(run_seed)(scene, noise, seed, top_k, score_thresh, alpha_thresh, nms_iou)
        for seed in seeds
    )
    gts = {image_id: records for image_id, records, _ in outputs}
    dets = {image_id: found for image_id, _, found in outputs}
    logger.info("Simulated %d scenes, %d objects, %d detections",
                len(seeds), sum(map(len, gts.values())), sum(map(len, dets.values())))
    return evaluate_map(dets, gts, iou_thresh=eval_iou)


def load_specs(path) -> Tuple[SceneSpec, NoiseSpec]:
    """SceneSpec and NoiseSpec from a KEY=value file; keys are field names, case-insensitive"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values = {key.lower(): value for key, value in dotenv_values(path).items() if value is not None}
    scene_keys = set(SceneSpec.model_fields)
    noise_keys = set(NoiseSpec.model_fields)
    unknown = set(values) - scene_keys - noise_keys
    if unknown:
        raise ParseError(f"unknown config keys {sorted(unknown)}", path=str(path))
    try:
        scene = SceneSpec(**{k: v for k, v in values.items() if k in scene_keys})
        noise = NoiseSpec(**{k: v for k, v in values.items() if k in noise_keys})
    except ValidationError as e:
        raise ParseError(f"invalid config: {e}", path=str(path)) from None
    return scene, noise
