"""On-disk storage: target maps, ground-truth folders, detection files and tile manifests.

TargetMaps layout (little endian): magic b"BBAVMAP1", uint32 H, W, stride, K,
then float32 planes P (K x H x W), O (2), B (10), alpha (1), row-major. A text
sidecar ``<file>.hdr`` repeats the dimensions as key=value lines.
"""
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from bbavector.utils.utils import DOTA_CATEGORIES, atomic_write
from .codec import BOX_CHANNELS, TargetMaps
from .errors import EmptyInput, ParseError
from .geometry import Point2
from .parsers import dump_detections, load_detections, parse_annotations
from .schemas import AnnotationRecord, Detection, TileSpec

MAGIC = b"BBAVMAP1"
MAPS_SUFFIX = ".bbav"
_HEADER = np.dtype('<u4')
_PLANE = np.dtype('<f4')

PathLike = Union[str, os.PathLike]


def save_maps(path: PathLike, maps: TargetMaps) -> None:
    dims = np.array([maps.height, maps.width, maps.s, maps.K], dtype=_HEADER)
    planes = np.concatenate([maps.P, maps.O, maps.B, maps.alpha], axis=0).astype(_PLANE)
    atomic_write(path, MAGIC + dims.tobytes() + planes.tobytes(order='C'))
    sidecar = (
        "format=BBAVMAP1\n"
        f"height={maps.height}\nwidth={maps.width}\nstride={maps.s}\n"
        f"classes={maps.K}\nskipped={maps.skipped}\n"
        "planes=P,O,B,alpha\ndtype=float32-le\n"
    )
    atomic_write(f"{os.fspath(path)}.hdr", sidecar)


def load_maps(path: PathLike) -> TargetMaps:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ParseError("not a BBAVMAP1 file (bad magic bytes)", path=os.fspath(path))
    offset = len(MAGIC)
    if len(data) < offset + 4 * _HEADER.itemsize:
        raise ParseError("truncated header", path=os.fspath(path))
    height, width, stride, K = (int(v) for v in np.frombuffer(data, dtype=_HEADER, count=4, offset=offset))
    offset += 4 * _HEADER.itemsize
    if not 1 <= K <= len(DOTA_CATEGORIES):
        raise ParseError(f"class count {K} outside 1..{len(DOTA_CATEGORIES)}", path=os.fspath(path))

    channels = K + 2 + BOX_CHANNELS + 1
    expected = channels * height * width * _PLANE.itemsize
    if len(data) - offset != expected:
        raise ParseError(f"payload holds {len(data) - offset} bytes, expected {expected}", path=os.fspath(path))
    planes = np.frombuffer(data, dtype=_PLANE, offset=offset).reshape(channels, height, width).astype(np.float64)
    if not np.isfinite(planes).all():
        raise ParseError("maps hold non-finite values", path=os.fspath(path))

    skipped = 0
    sidecar = Path(f"{os.fspath(path)}.hdr")
    if sidecar.exists():
        meta = dict(line.split('=', 1) for line in sidecar.read_text().splitlines() if '=' in line)
        skipped = int(meta.get('skipped', 0))
    return TargetMaps(
        P=planes[:K],
        O=planes[K:K + 2],
        B=planes[K + 2:K + 2 + BOX_CHANNELS],
        alpha=planes[K + 2 + BOX_CHANNELS:],
        s=stride,
        skipped=skipped,
    )


def list_map_files(directory: PathLike) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"maps directory not found: {directory}")
    return sorted(directory.glob(f"*{MAPS_SUFFIX}"))


@dataclass
class GroundTruthRepository:
    """DOTA annotation files of a folder, keyed by file stem"""
    records: Dict[str, List[AnnotationRecord]]

    @classmethod
    def from_dir(cls, directory: PathLike) -> 'GroundTruthRepository':
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"annotation directory not found: {directory}")
        records = {
            path.stem: parse_annotations(path.read_bytes(), path=str(path))
            for path in sorted(directory.glob('*.txt'))
        }
        if not records:
            raise EmptyInput(f"no annotation files (*.txt) in {directory}")
        return cls(records=records)

    def get(self, image_id: str) -> List[AnnotationRecord]:
        return self.records.get(image_id, [])


def read_detections(path: PathLike) -> List[Detection]:
    """Detection records from one JSON-lines file or every *.jsonl file of a folder"""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob('*.jsonl'))
    elif path.exists():
        files = [path]
    else:
        raise FileNotFoundError(f"detections not found: {path}")
    dets = []
    for file in files:
        dets.extend(load_detections(file.read_bytes(), path=str(file)))
    return dets


def write_detections(path: PathLike, dets: List[Detection]) -> None:
    atomic_write(path, dump_detections(dets))


@dataclass
class TileManifestRepository:
    """Tile layout of a tiling run, one CSV row per tile"""
    tiles: pd.DataFrame

    COLUMNS = ['tile_id', 'image_id', 'origin_x', 'origin_y', 'size', 'scale', 'width', 'height']
    NUMERIC = ['origin_x', 'origin_y', 'size', 'scale', 'width', 'height']

    @classmethod
    def from_tiles(cls, tiles: List[TileSpec]) -> 'TileManifestRepository':
        rows = [
            [t.tile_id, t.image_id, t.origin.x, t.origin.y, t.size, t.scale, t.width, t.height]
            for t in tiles
        ]
        return cls(tiles=pd.DataFrame(rows, columns=cls.COLUMNS).set_index('tile_id', drop=False))

    @classmethod
    def from_csv(cls, filepath: PathLike) -> 'TileManifestRepository':
        if not Path(filepath).exists():
            raise FileNotFoundError(f"tile manifest not found: {filepath}")
        path = os.fspath(filepath)
        try:
            df = pd.read_csv(filepath, dtype={'tile_id': str, 'image_id': str}, keep_default_na=False)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise ParseError(f"unreadable manifest: {e}", path=path) from None
        missing = set(cls.COLUMNS) - set(df.columns)
        if missing:
            raise ParseError(f"manifest lacks columns {sorted(missing)}", path=path)
        for column in cls.NUMERIC:
            values = pd.to_numeric(df[column], errors='coerce')
            bad = ~np.isfinite(values.to_numpy(dtype=np.float64))
            if bad.any():
                row = int(bad.argmax())
                raise ParseError(f"non-numeric {column} {df[column].iloc[row]!r}", line=row + 2, path=path)
            df[column] = values
        if df['tile_id'].duplicated().any():
            raise ParseError(f"duplicate tile ids {sorted(set(df.loc[df['tile_id'].duplicated(), 'tile_id']))}", path=path)
        return cls(tiles=df.set_index('tile_id', drop=False))

    def to_csv(self, filepath: PathLike) -> None:
        atomic_write(filepath, self.tiles[self.COLUMNS].to_csv(index=False))

    def get_tile(self, tile_id: str) -> TileSpec:
        try:
            row = self.tiles.loc[tile_id]
        except KeyError:
            raise EmptyInput(f"tile '{tile_id}' is not in the manifest") from None
        try:
            return TileSpec(
                origin=Point2(float(row['origin_x']), float(row['origin_y'])),
                size=int(row['size']),
                scale=float(row['scale']),
                width=int(row['width']),
                height=int(row['height']),
                image_id=str(row['image_id']),
                tile_id=str(row['tile_id']),
            )
        except ValidationError as e:
            raise ParseError(f"invalid manifest row for tile '{tile_id}': {e}") from None

    def all_tiles(self) -> List[TileSpec]:
        return [self.get_tile(tile_id) for tile_id in self.tiles['tile_id']]
