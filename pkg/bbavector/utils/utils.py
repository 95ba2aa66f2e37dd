import os
import tempfile
from typing import Union

# DOTA-v1.0 categories, index = class id
DOTA_CATEGORIES = [
	'plane',
	'baseball-diamond',
	'bridge',
	'ground-track-field',
	'small-vehicle',
	'large-vehicle',
	'ship',
	'tennis-court',
	'basketball-court',
	'storage-tank',
	'soccer-ball-field',
	'roundabout',
	'harbor',
	'swimming-pool',
	'helicopter',
]

category_aliases = {
	'PL': 'plane',
	'BD': 'baseball-diamond',
	'BR': 'bridge',
	'GTF': 'ground-track-field',
	'SV': 'small-vehicle',
	'LV': 'large-vehicle',
	'SH': 'ship',
	'TC': 'tennis-court',
	'BC': 'basketball-court',
	'ST': 'storage-tank',
	'SBF': 'soccer-ball-field',
	'RA': 'roundabout',
	'HA': 'harbor',
	'SP': 'swimming-pool',
	'HC': 'helicopter',
	'Plane': 'plane',
	'Bridge': 'bridge',
	'Ship': 'ship',
	'Harbor': 'harbor',
}

CATEGORY_INDEX = {name: i for i, name in enumerate(DOTA_CATEGORIES)}


def normalize_category(name: str) -> str:
	"""Map a category name or alias to its canonical DOTA name, or raise KeyError"""
	if name in CATEGORY_INDEX:
		return name
	return category_aliases[name]


def category_id(name: str) -> int:
	return CATEGORY_INDEX[normalize_category(name)]


def category_name(class_id: int) -> str:
	return DOTA_CATEGORIES[class_id]


def atomic_write(path: Union[str, os.PathLike], data: Union[str, bytes]) -> None:
	"""Write to a temp file in the target directory, then rename over the target"""
	path = os.fspath(path)
	directory = os.path.dirname(os.path.abspath(path))
	os.makedirs(directory, exist_ok=True)
	mode = 'wb' if isinstance(data, bytes) else 'w'
	fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
	try:
		with os.fdopen(fd, mode, **({} if mode == 'wb' else {'encoding': 'utf-8'})) as f:
			f.write(data)
		os.replace(tmp_path, path)
	except BaseException:
		if os.path.exists(tmp_path):
			os.remove(tmp_path)
		raise
