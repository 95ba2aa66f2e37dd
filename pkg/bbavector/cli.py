"""Command line surface: python -m bbavector.cli <command> [flags]"""
import functools
import io
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click
import pandas as pd
from joblib import Parallel, delayed

from bbavector.config.config import settings
from bbavector.core import codec, postprocess, tiling
from bbavector.core.errors import BBAVectorError, EmptyInput
from bbavector.core.geometry import convex_polygon_iou
from bbavector.core.parsers import group_by_class, parse_annotations, write_annotations, write_submission
from bbavector.core.repositories import (
    MAPS_SUFFIX,
    GroundTruthRepository,
    TileManifestRepository,
    list_map_files,
    load_maps,
    read_detections,
    save_maps,
    write_detections,
)
from bbavector.services import synth
from bbavector.utils.utils import atomic_write

logger = logging.getLogger(__name__)

EXIT_MISSING_PATH = 6
IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg', '.tif', '.tiff', '.bmp')


def handle_errors(command):
    """Report every failure as one JSON object on stderr with a per-kind exit code"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except FileNotFoundError as e:
            _fail('FileNotFound', str(e), EXIT_MISSING_PATH, path=e.filename)
        except BBAVectorError as e:
            _fail(type(e).__name__, str(e), e.exit_code, path=getattr(e, 'path', None))
        except Exception as e:
            logger.debug("Unexpected failure", exc_info=True)
            _fail(type(e).__name__, str(e), BBAVectorError.exit_code)
    return wrapper


def _fail(kind: str, message: str, code: int, path: Optional[str] = None):
    payload = {'error': kind, 'message': message}
    if path is not None:
        payload['path'] = str(path)
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def _parse_size(value: Optional[str]) -> Optional[Tuple[int, int]]:
    if value is None:
        return None
    try:
        width, height = (int(v) for v in value.lower().split('x'))
    except ValueError:
        raise click.BadParameter(f"expected WIDTHxHEIGHT, got {value!r}") from None
    return height, width


def _parse_scales(value: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in value.split(',') if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma separated scales, got {value!r}") from None


@click.group()
@click.option('--log-level', default=settings.LOG_LEVEL, show_default=True, help="Logging level.")
def cli(log_level: str):
    """Oriented object detection toolkit: target maps, decoding, NMS, tiling and mAP."""
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _encode_file(path: Path, out_dir: Path, image: Tuple[int, int], K: int, stride: int) -> int:
    records = parse_annotations(path.read_bytes(), path=str(path))
    maps = codec.encode(records, image, K=K, s=stride, min_overlap=settings.MIN_OVERLAP,
                        rbb_iou_thresh=settings.RBB_IOU_THRESH)
    save_maps(out_dir / f"{path.stem}{MAPS_SUFFIX}", maps)
    return maps.skipped


@cli.command()
@click.option('--annotations', 'annotations_dir', required=True, type=click.Path(path_type=Path))
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path))
@click.option('--stride', default=settings.STRIDE, show_default=True, type=int)
@click.option('--classes', default=15, show_default=True, type=click.IntRange(1, 15))
@click.option('--size', default=None, help="Input image size WIDTHxHEIGHT for every file.")
@click.option('--manifest', default=None, type=click.Path(path_type=Path), help="Tile manifest giving per-tile sizes.")
@handle_errors
def encode(annotations_dir: Path, out_dir: Path, stride: int, classes: int, size: Optional[str], manifest: Optional[Path]):
    """DOTA annotation files -> serialized target maps."""
    gt = GroundTruthRepository.from_dir(annotations_dir)
    uniform = _parse_size(size)
    tiles = TileManifestRepository.from_csv(manifest) if manifest is not None else None
    if uniform is None and tiles is None:
        raise click.UsageError("encode needs --size or --manifest to know the image dimensions")

    jobs = []
    for image_id in gt.records:
        if tiles is not None:
            tile = tiles.get_tile(image_id)
            image = (tile.height, tile.width)
        else:
            image = uniform
        jobs.append((annotations_dir / f"{image_id}.txt", image))

    out_dir.mkdir(parents=True, exist_ok=True)
    skipped = Parallel(n_jobs=settings.n_jobs)(
        delayed(_encode_file)(path, out_dir, image, classes, stride) for path, image in jobs
    )
    logger.info("Encoded %d files into %s (%d objects skipped)", len(jobs), out_dir, sum(skipped))


@cli.command()
@click.option('--maps', 'maps_dir', required=True, type=click.Path(path_type=Path))
@click.option('--out', 'out_file', required=True, type=click.Path(path_type=Path))
@click.option('--topk', default=settings.TOP_K, show_default=True, type=click.IntRange(min=0))
@click.option('--score', default=settings.SCORE_THRESH, show_default=True, type=float)
@click.option('--alpha', default=settings.ALPHA_THRESH, show_default=True, type=float)
@click.option('--no-orientation', is_flag=True, help="Always use the BBAVector branch.")
@handle_errors
def decode(maps_dir: Path, out_file: Path, topk: int, score: float, alpha: float, no_orientation: bool):
    """Serialized maps -> detection records (JSON lines)."""
    files = list_map_files(maps_dir)
    if not files:
        raise EmptyInput(f"no {MAPS_SUFFIX} files in {maps_dir}")
    dets = []
    for path in files:
        maps = load_maps(path)
        dets.extend(codec.decode(maps, top_k=topk, score_thresh=score, alpha_thresh=alpha,
                                 use_orientation=not no_orientation, image_id=path.stem))
    write_detections(out_file, dets)
    logger.info("Decoded %d detections from %d map files", len(dets), len(files))


def _load_boxes(path: Path) -> List[Tuple]:
    if not path.exists():
        raise FileNotFoundError(2, "file not found", str(path))
    if path.suffix == '.jsonl':
        return [d.corners for d in read_detections(path)]
    return [r.corners for r in parse_annotations(path.read_bytes(), path=str(path))]


@cli.command()
@click.option('--a', 'a_file', required=True, type=click.Path(path_type=Path))
@click.option('--b', 'b_file', required=True, type=click.Path(path_type=Path))
@click.option('--out', 'out_file', default=None, type=click.Path(path_type=Path))
@handle_errors
def iou(a_file: Path, b_file: Path, out_file: Optional[Path]):
    """Pairwise rotated IOU table between the boxes of two files."""
    boxes_a, boxes_b = _load_boxes(a_file), _load_boxes(b_file)
    table = pd.DataFrame(
        [[convex_polygon_iou(a, b) for b in boxes_b] for a in boxes_a],
        index=[f"a{i}" for i in range(len(boxes_a))],
        columns=[f"b{j}" for j in range(len(boxes_b))],
    )
    if out_file is not None:
        atomic_write(out_file, table.to_csv())
    else:
        click.echo(table.to_string(float_format=lambda v: f"{v:.6f}"))


@cli.command()
@click.option('--dets', 'dets_file', required=True, type=click.Path(path_type=Path))
@click.option('--iou', 'iou_thresh', default=settings.NMS_IOU, show_default=True, type=click.FloatRange(0, 1))
@click.option('--out', 'out_file', default=None, type=click.Path(path_type=Path))
@handle_errors
def nms(dets_file: Path, iou_thresh: float, out_file: Optional[Path]):
    """Class-wise rotated NMS per image."""
    grouped = postprocess.group_by_image(read_detections(dets_file))
    kept = [d for image_id in sorted(grouped) for d in postprocess.rotated_nms(grouped[image_id], iou_thresh)]
    if out_file is not None:
        write_detections(out_file, kept)
    else:
        for det in kept:
            click.echo(det.model_dump_json())


@cli.command(name='eval')
@click.option('--dets', 'dets_file', required=True, type=click.Path(path_type=Path))
@click.option('--gt', 'gt_dir', required=True, type=click.Path(path_type=Path))
@click.option('--iou', 'iou_thresh', default=settings.EVAL_IOU, show_default=True, type=click.FloatRange(0, 1))
@click.option('--report', 'report_file', default=None, type=click.Path(path_type=Path))
@click.option('--plot', 'plot_dir', default=None, type=click.Path(path_type=Path), help="Write PR curves here.")
@click.option('--overlay', 'overlay_dir', default=None, type=click.Path(path_type=Path), help="Write box overlays here.")
@click.option('--all-point', is_flag=True, help="All-point AP instead of 11-point.")
@handle_errors
def evaluate(dets_file: Path, gt_dir: Path, iou_thresh: float, report_file: Optional[Path],
             plot_dir: Optional[Path], overlay_dir: Optional[Path], all_point: bool):
    """Rotated-IOU mAP of detections against a folder of DOTA annotations."""
    gt = GroundTruthRepository.from_dir(gt_dir)
    dets = postprocess.group_by_image(read_detections(dets_file))
    result = postprocess.evaluate_map(dets, gt.records, iou_thresh=iou_thresh, use_07_metric=not all_point)

    table = pd.DataFrame(
        [(name, r.n_gt, len(r.detections), r.ap) for name, r in result.classes.items()],
        columns=['category', 'n_gt', 'n_det', 'ap'],
    )
    click.echo(table.to_string(index=False))
    click.echo(f"mAP {result.mAP:.6f}")
    if report_file is not None:
        atomic_write(report_file, result.model_dump_json(indent=2))
    if plot_dir is not None or overlay_dir is not None:
        from bbavector.utils.plotting import plot_overlay, plot_pr_curves
        if plot_dir is not None:
            plot_pr_curves(result, plot_dir)
        if overlay_dir is not None:
            for image_id, records in gt.records.items():
                plot_overlay(Path(overlay_dir) / f"{image_id}.png", dets.get(image_id, []), records)


@cli.command()
@click.option('--images', 'images_dir', required=True, type=click.Path(path_type=Path))
@click.option('--annotations', 'annotations_dir', required=True, type=click.Path(path_type=Path))
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path))
@click.option('--patch', default=settings.PATCH, show_default=True, type=click.IntRange(min=1))
@click.option('--overlap', default=settings.OVERLAP, show_default=True, type=click.IntRange(min=0))
@click.option('--scales', default=','.join(f"{s:g}" for s in settings.SCALES), show_default=True)
@click.option('--step', default=None, type=click.IntRange(min=1), help="Explicit window step (literal stride).")
@click.option('--save-patches', is_flag=True, help="Also write the cropped image patches.")
@handle_errors
def tile(images_dir: Path, annotations_dir: Path, out_dir: Path, patch: int, overlap: int,
         scales: str, step: Optional[int], save_patches: bool):
    """Crop images and annotations into overlapping patches; writes manifest.csv and per-tile annotations."""
    from PIL import Image

    if not images_dir.is_dir():
        raise FileNotFoundError(2, "image directory not found", str(images_dir))
    if not annotations_dir.is_dir():
        raise FileNotFoundError(2, "annotation directory not found", str(annotations_dir))
    images = sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise EmptyInput(f"no images in {images_dir}")

    all_tiles = []
    for image_path in images:
        with Image.open(image_path) as image:
            width, height = image.size
            ann_path = annotations_dir / f"{image_path.stem}.txt"
            records = parse_annotations(ann_path.read_bytes(), path=str(ann_path)) if ann_path.exists() else []
            tiles = tiling.make_tiles(width, height, patch, overlap, _parse_scales(scales), step=step,
                                      image_id=image_path.stem)
            resized = {}
            for spec in tiles:
                cropped = tiling.crop_annotations(records, spec)
                atomic_write(out_dir / 'annotations' / f"{spec.tile_id}.txt", write_annotations(cropped))
                if save_patches:
                    if spec.scale not in resized:
                        size = (max(1, int(width * spec.scale)), max(1, int(height * spec.scale)))
                        resized[spec.scale] = image if size == image.size else image.resize(size)
                    x0, y0 = (int(round(v)) for v in spec.scaled_origin)
                    buffer = io.BytesIO()
                    resized[spec.scale].crop((x0, y0, x0 + spec.width, y0 + spec.height)).save(buffer, format='PNG')
                    atomic_write(out_dir / 'images' / f"{spec.tile_id}.png", buffer.getvalue())
            all_tiles.extend(tiles)

    TileManifestRepository.from_tiles(all_tiles).to_csv(out_dir / 'manifest.csv')
    logger.info("Wrote %d tiles for %d images", len(all_tiles), len(images))


@cli.command()
@click.option('--dets', 'dets_path', required=True, type=click.Path(path_type=Path))
@click.option('--manifest', required=True, type=click.Path(path_type=Path))
@click.option('--iou', 'iou_thresh', default=settings.NMS_IOU, show_default=True, type=click.FloatRange(0, 1))
@click.option('--out', 'out_file', default=None, type=click.Path(path_type=Path))
@click.option('--submission', 'submission_dir', default=None, type=click.Path(path_type=Path),
              help="Also write DOTA Task-1 files here.")
@handle_errors
def merge(dets_path: Path, manifest: Path, iou_thresh: float, out_file: Optional[Path], submission_dir: Optional[Path]):
    """Tile detections -> global detections de-duplicated by rotated NMS."""
    tiles = TileManifestRepository.from_csv(manifest)
    global_dets = [tiling.to_global(det, tiles.get_tile(det.image_id or "")) for det in read_detections(dets_path)]

    grouped = postprocess.group_by_image(global_dets)
    merged = [d for image_id in sorted(grouped) for d in tiling.merge(grouped[image_id], iou_thresh)]

    if out_file is not None:
        write_detections(out_file, merged)
    else:
        for det in merged:
            click.echo(det.model_dump_json())
    if submission_dir is not None:
        for name, text in write_submission(group_by_class(merged)).items():
            atomic_write(Path(submission_dir) / f"Task1_{name}.txt", text)
    logger.info("Merged %d tile detections into %d", len(global_dets), len(merged))


@cli.command()
@click.option('--config', 'config_file', required=True, type=click.Path(path_type=Path))
@click.option('--seeds', default=50, show_default=True, type=click.IntRange(min=1))
@click.option('--first-seed', default=0, show_default=True, type=int)
@click.option('--report', 'report_file', default=None, type=click.Path(path_type=Path))
@handle_errors
def simulate(config_file: Path, seeds: int, first_seed: int, report_file: Optional[Path]):
    """Synthetic encode -> perturb -> decode -> NMS -> mAP run."""
    scene, noise = synth.load_specs(config_file)
    result = synth.run_pipeline(
        scene, noise, range(first_seed, first_seed + seeds),
        top_k=settings.TOP_K, score_thresh=settings.SCORE_THRESH, alpha_thresh=settings.ALPHA_THRESH,
        nms_iou=settings.NMS_IOU, eval_iou=settings.EVAL_IOU, n_jobs=settings.n_jobs,
    )
    for name, class_result in result.classes.items():
        click.echo(json.dumps({'category': name, 'n_gt': class_result.n_gt, 'ap': class_result.ap}))
    click.echo(json.dumps({'mAP': result.mAP, 'seeds': seeds}))
    if report_file is not None:
        atomic_write(report_file, result.model_dump_json(indent=2))


if __name__ == '__main__':
    cli()
