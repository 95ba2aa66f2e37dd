"""DOTA annotation / Task-1 submission text formats and detection JSON lines."""
import json
import math
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Union

from pydantic import ValidationError

from bbavector.utils.utils import category_name, normalize_category
from .errors import ParseError, UnknownCategory
from .geometry import Point2
from .schemas import AnnotationRecord, Detection, SubmissionRecord

HEADER_PREFIXES = ('imagesource:', 'gsd:')


def _decode(text: Union[str, bytes], path: Optional[str]) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode('utf-8')
    except UnicodeDecodeError as e:
        line = text[:e.start].count(b'\n') + 1
        raise ParseError(f"invalid UTF-8: {e.reason}", line=line, path=path) from None


def _corners(fields: Sequence[str], line: int, path: Optional[str]):
    try:
        values = [float(v) for v in fields]
    except ValueError:
        raise ParseError(f"coordinates must be numbers, got {' '.join(fields)!r}", line=line, path=path) from None
    if not all(math.isfinite(v) for v in values):
        raise ParseError("coordinates must be finite", line=line, path=path)
    return tuple(Point2(values[i], values[i + 1]) for i in range(0, 8, 2))


def parse_annotation_line(raw: str, line: int = 1, path: Optional[str] = None) -> AnnotationRecord:
    fields = raw.split()
    if len(fields) not in (9, 10):
        raise ParseError(f"expected 'x1 y1 ... x4 y4 category [difficult]', got {len(fields)} fields", line=line, path=path)
    corners = _corners(fields[:8], line, path)
    try:
        category = normalize_category(fields[8])
    except KeyError:
        raise UnknownCategory(fields[8], line=line, path=path) from None
    difficult = fields[9] if len(fields) == 10 else '0'
    if difficult not in ('0', '1'):
        raise ParseError(f"difficult flag must be 0 or 1, got {difficult!r}", line=line, path=path)
    try:
        return AnnotationRecord(corners=corners, category=category, difficult=int(difficult))
    except ValidationError as e:
        raise ParseError(f"invalid annotation: {e}", line=line, path=path) from None


def parse_annotations(text: Union[str, bytes], path: Optional[str] = None) -> List[AnnotationRecord]:
    """One record per 'x1 y1 x2 y2 x3 y3 x4 y4 category difficult' line; the
    'imagesource:' / 'gsd:' header lines and blank lines are skipped."""
    records = []
    for number, raw in enumerate(_decode(text, path).splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if number <= 2 and stripped.lower().startswith(HEADER_PREFIXES):
            continue
        records.append(parse_annotation_line(stripped, number, path))
    return records


def write_annotations(records: Iterable[AnnotationRecord]) -> str:
    lines = []
    for record in records:
        coords = ' '.join(f"{v:.1f}" for point in record.corners for v in point)
        lines.append(f"{coords} {record.category} {record.difficult}")
    return ''.join(line + '\n' for line in lines)


def write_submission(dets_by_class: Dict[int, Sequence[Detection]]) -> Dict[str, str]:
    """One Task-1 text stream per class name: 'image_id score x1 y1 ... x4 y4'"""
    streams = {}
    for class_id in sorted(dets_by_class):
        lines = []
        for det in dets_by_class[class_id]:
            coords = ' '.join(f"{v:.1f}" for point in det.corners for v in point)
            lines.append(f"{det.image_id or ''} {det.score:.4f} {coords}\n")
        streams[category_name(class_id)] = ''.join(lines)
    return streams


def parse_submission(text: Union[str, bytes], path: Optional[str] = None) -> List[SubmissionRecord]:
    records = []
    for number, raw in enumerate(_decode(text, path).splitlines(), start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != 10:
            raise ParseError(f"expected 'image_id score x1 y1 ... x4 y4', got {len(fields)} fields", line=number, path=path)
        try:
            corners = _corners(fields[2:], number, path)
            record = SubmissionRecord(image_id=fields[0], score=fields[1], corners=corners)
        except ValidationError as e:
            raise ParseError(f"invalid submission line: {e}", line=number, path=path) from None
        records.append(record)
    return records


def group_by_class(dets: Iterable[Detection]) -> Dict[int, List[Detection]]:
    grouped = defaultdict(list)
    for det in dets:
        grouped[det.class_id].append(det)
    return dict(grouped)


def dump_detections(dets: Iterable[Detection]) -> str:
    return ''.join(det.model_dump_json() + '\n' for det in dets)


def load_detections(text: Union[str, bytes], path: Optional[str] = None) -> List[Detection]:
    dets = []
    for number, raw in enumerate(_decode(text, path).splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            dets.append(Detection.model_validate(json.loads(raw)))
        except (ValueError, ValidationError) as e:
            raise ParseError(f"invalid detection record: {e}", line=number, path=path) from None
    return dets
