import math
from typing import Annotated, Dict, List, Literal, Optional, Tuple

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator, model_validator

from bbavector.utils.utils import DOTA_CATEGORIES
from .geometry import Point2

def _finite_corners(corners):
	if not all(math.isfinite(v) for point in corners for v in point):
		raise ValueError("corners must be finite")
	return corners

Corners = Annotated[Tuple[Point2, Point2, Point2, Point2], AfterValidator(_finite_corners)]

class AnnotationRecord(BaseModel):
	model_config = ConfigDict(frozen=True)

	corners: Corners
	category: str
	difficult: Literal[0, 1] = 0
	truncated: bool = False

class Detection(BaseModel):
	model_config = ConfigDict(frozen=True)

	corners: Corners
	score: float = Field(ge=0.0, le=1.0)
	class_id: int = Field(ge=0, lt=len(DOTA_CATEGORIES))
	is_rbb: bool = True
	image_id: Optional[str] = None

class SubmissionRecord(BaseModel):
	model_config = ConfigDict(frozen=True)

	image_id: str
	score: float = Field(ge=0.0, le=1.0)
	corners: Corners

class TileSpec(BaseModel):
	"""Crop window: origin in global pre-scale pixels, width/height in scaled pixels"""
	model_config = ConfigDict(frozen=True)

	origin: Point2
	size: int = Field(default=600, gt=0)
	scale: float = Field(default=1.0, gt=0.0)
	width: int = Field(gt=0)
	height: int = Field(gt=0)
	image_id: str = ""
	tile_id: str = ""

	# origin scaled into the resized image
	@property
	def scaled_origin(self) -> Point2:
		return Point2(self.origin.x * self.scale, self.origin.y * self.scale)

	@field_validator('origin')
	@classmethod
	def _origin_non_negative(cls, origin: Point2) -> Point2:
		if origin.x < 0 or origin.y < 0:
			raise ValueError("tile origin must be non-negative")
		return origin

class LossReport(BaseModel):
	l_h: float = Field(ge=0.0)
	l_o: float = Field(ge=0.0)
	l_b: float = Field(ge=0.0)
	l_alpha: float = Field(ge=0.0)
	total: float = Field(ge=0.0)

class RankedDetection(BaseModel):
	image_id: str
	score: float
	outcome: Literal['tp', 'fp', 'ignored']

class ClassResult(BaseModel):
	category: str
	n_gt: int
	detections: List[RankedDetection]
	precision: List[float]
	recall: List[float]
	ap: float = Field(ge=0.0, le=1.0)

class MatchResult(BaseModel):
	classes: Dict[str, ClassResult]
	mAP: float = Field(ge=0.0, le=1.0)

class SceneSpec(BaseModel):
	image_width: int = Field(default=512, gt=0)
	image_height: int = Field(default=512, gt=0)
	min_objects: int = Field(default=1, ge=1)
	max_objects: int = Field(default=10, ge=1)
	min_size: float = Field(default=16.0, gt=0.0)
	max_size: float = Field(default=64.0, gt=0.0)
	min_angle: float = 10.0
	max_angle: float = 80.0
	min_separation: float = Field(default=1.0, ge=1.0)
	classes: int = Field(default=3, ge=1, le=15)
	stride: int = Field(default=4, gt=0)
	allow_overlap: bool = False
	seed: int = 0

	@model_validator(mode='after')
	def _ranges_non_empty(self) -> 'SceneSpec':
		if self.min_objects > self.max_objects:
			raise ValueError("object count range is empty")
		if self.min_size > self.max_size:
			raise ValueError("size range is empty")
		if self.min_angle > self.max_angle:
			raise ValueError("rotation range is empty")
		return self

class NoiseSpec(BaseModel):
	attenuation: float = Field(default=0.0, ge=0.0, le=1.0)
	heatmap_std: float = Field(default=0.0, ge=0.0)
	offset_std: float = Field(default=0.0, ge=0.0)
	box_std: float = Field(default=0.0, ge=0.0)
	alpha_std: float = Field(default=0.0, ge=0.0)
	spurious_rate: float = Field(default=0.0, ge=0.0, le=1.0)
	spurious_score: float = Field(default=0.6, ge=0.0, le=1.0)
