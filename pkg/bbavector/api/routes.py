from typing import Dict, List

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from bbavector.config.config import settings
from bbavector.core.errors import BBAVectorError
from bbavector.core.geometry import convex_polygon_iou
from bbavector.core.postprocess import evaluate_map, group_by_image, rotated_nms
from bbavector.core.schemas import AnnotationRecord, Corners, Detection, MatchResult, TileSpec
from bbavector.core.tiling import merge, to_global


router = APIRouter()


class IouRequest(BaseModel):
	a: List[Corners]
	b: List[Corners]

class NmsRequest(BaseModel):
	detections: List[Detection]
	iou_thresh: float = Field(default=settings.NMS_IOU, ge=0.0, le=1.0)

class MergeRequest(BaseModel):
	detections: List[Detection]
	tiles: List[TileSpec]
	iou_thresh: float = Field(default=settings.NMS_IOU, ge=0.0, le=1.0)

class EvaluateRequest(BaseModel):
	detections: List[Detection]
	ground_truth: Dict[str, List[AnnotationRecord]]
	iou_thresh: float = Field(default=settings.EVAL_IOU, ge=0.0, le=1.0)
	use_07_metric: bool = True


@router.get("/")
def health():
	return {"status": "ok"}

@router.post("/iou")
def pairwise_iou(request: IouRequest) -> List[List[float]]:
	return [[convex_polygon_iou(a, b) for b in request.b] for a in request.a]

@router.post("/nms")
def nms(request: NmsRequest) -> List[Detection]:
	grouped = group_by_image(request.detections)
	return [d for image_id in sorted(grouped) for d in rotated_nms(grouped[image_id], request.iou_thresh)]

@router.post("/merge")
def merge_tiles(request: MergeRequest) -> List[Detection]:
	tiles = {tile.tile_id: tile for tile in request.tiles}
	try:
		global_dets = [to_global(det, tiles[det.image_id or ""]) for det in request.detections]
	except KeyError as e:
		raise HTTPException(status_code=404, detail=f"Tile {e.args[0]!r} not found")
	grouped = group_by_image(global_dets)
	return [d for image_id in sorted(grouped) for d in merge(grouped[image_id], request.iou_thresh)]

@router.post("/evaluate")
def evaluate(request: EvaluateRequest) -> MatchResult:
	try:
		return evaluate_map(
			group_by_image(request.detections),
			request.ground_truth,
			iou_thresh=request.iou_thresh,
			use_07_metric=request.use_07_metric,
		)
	except (BBAVectorError, KeyError) as e:
		raise HTTPException(status_code=422, detail=str(e))
