import numpy as np
import pytest

from bbavector.core.errors import InvalidOverlap
from bbavector.core.geometry import Point2
from bbavector.core.schemas import Detection, TileSpec
from bbavector.core.tiling import crop_annotations, make_tiles, merge, to_global, to_tile
from tests.factories import make_detection, make_record


def origins_x(tiles, scale=1.0):
    return sorted({t.origin.x for t in tiles if t.scale == scale})


class TestMakeTiles:
    def test_single_tile_per_scale(self):
        tiles = make_tiles(600, 600, 600, 100, (0.5, 1.0))
        assert [(t.scale, t.origin, t.width, t.height) for t in tiles] == [
            (0.5, (0, 0), 300, 300),
            (1.0, (0, 0), 600, 600),
        ]

    def test_two_windows(self):
        assert origins_x(make_tiles(1100, 600, 600, 100, (1.0,))) == [0, 500]

    def test_last_window_clamps_inward(self):
        tiles = make_tiles(4000, 4000, 600, 100, (1.0,))
        assert origins_x(tiles) == [0, 500, 1000, 1500, 2000, 2500, 3000, 3400]
        assert len(tiles) == 64

    def test_origins_are_global_at_every_scale(self):
        tiles = make_tiles(2000, 1000, 600, 100, (0.5,))
        assert origins_x(tiles, 0.5) == [0, 800]
        assert all(t.scaled_origin.x + t.width <= 1000 for t in tiles)

    def test_explicit_step(self):
        assert origins_x(make_tiles(1100, 600, 600, 0, (1.0,), step=100)) == [0, 100, 200, 300, 400, 500]

    def test_tile_ids_are_unique(self):
        tiles = make_tiles(3000, 2000, 600, 100, (0.5, 1.0), image_id='P0001')
        assert len({t.tile_id for t in tiles}) == len(tiles)
        assert tiles[0].tile_id == 'P0001__0.5__0___0'

    @pytest.mark.parametrize('overlap', [600, 700, -1])
    def test_invalid_overlap(self, overlap):
        with pytest.raises(InvalidOverlap):
            make_tiles(1000, 1000, 600, overlap)

    def test_rejects_empty_image(self):
        with pytest.raises(ValueError):
            make_tiles(0, 100)

    @pytest.mark.parametrize('seed', range(20))
    def test_every_center_is_covered(self, seed):
        rng = np.random.default_rng(seed)
        width, height = (int(v) for v in rng.integers(200, 4001, 2))
        tiles = make_tiles(width, height, 600, 100, (1.0,))
        for _ in range(100):
            size = rng.uniform(10, 500)
            cx, cy = rng.uniform(0, width), rng.uniform(0, height)
            record = make_record(cx, cy, size, size / 2, rng.uniform(0, 180))
            assert any(crop_annotations([record], tile) for tile in tiles)


class TestCrop:
    @pytest.fixture
    def tile(self):
        return TileSpec(origin=Point2(500, 0), size=600, scale=1.0, width=600, height=600, image_id='img')

    def test_inside_box_is_translated(self, tile):
        record = make_record(700, 300, 40, 20, 30)
        cropped, = crop_annotations([record], tile)
        assert np.allclose(np.asarray(cropped.corners), np.asarray(record.corners) - [500, 0])
        assert not cropped.truncated

    def test_center_outside_is_dropped(self, tile):
        assert crop_annotations([make_record(480, 300, 60, 20)], tile) == []

    def test_boundary_box_is_truncated(self, tile):
        cropped, = crop_annotations([make_record(510, 300, 60, 20)], tile)
        assert cropped.truncated
        assert min(p.x for p in cropped.corners) < 0

    def test_scaled_tile(self):
        tile = TileSpec(origin=Point2(0, 0), scale=0.5, width=300, height=300)
        cropped, = crop_annotations([make_record(100, 100, 40, 20)], tile)
        assert np.allclose(np.mean(cropped.corners, axis=0), [50, 50])


class TestToGlobal:
    def _det(self, corner):
        x, y = corner
        return Detection(corners=((x, y), (x + 4, y), (x + 4, y + 4), (x, y + 4)), score=0.5, class_id=0, image_id='t')

    def test_identity_tile(self):
        det = self._det((10, 10))
        tile = TileSpec(origin=Point2(0, 0), width=600, height=600, image_id='img')
        assert to_global(det, tile).corners == det.corners

    def test_offset(self):
        tile = TileSpec(origin=Point2(500, 0), width=600, height=600, image_id='img')
        moved = to_global(self._det((10, 10)), tile)
        assert moved.corners[0] == (510, 10)
        assert moved.image_id == 'img'

    def test_scale(self):
        tile = TileSpec(origin=Point2(0, 0), scale=0.5, width=300, height=300)
        assert to_global(self._det((10, 10)), tile).corners[0] == (20, 20)

    @pytest.mark.parametrize('scale', [0.5, 1.0, 1.5])
    def test_inverts_tile_coordinates(self, scale):
        tile = TileSpec(origin=Point2(800, 400), scale=scale, width=600, height=600, image_id='img')
        det = make_detection(1000, 600, 30, 12, 25)
        local = det.model_copy(update={'corners': tuple(to_tile(p, tile) for p in det.corners)})
        assert np.allclose(np.asarray(to_global(local, tile).corners), np.asarray(det.corners), atol=1e-9)


class TestMerge:
    def test_duplicates_from_two_tiles(self):
        a = make_detection(550, 300, 40, 20, 30, score=0.9)
        b = make_detection(550.4, 300.2, 40, 20, 30.5, score=0.85)
        assert merge([a, b]) == [a]

    def test_disjoint_detections_survive(self):
        dets = [make_detection(100, 100, 20, 10, score=0.9), make_detection(900, 100, 20, 10, score=0.8)]
        assert merge(dets) == dets

    def test_three_tile_duplicates(self):
        dets = [
            make_detection(550 + dx, 550, 40, 20, 30, score=score)
            for dx, score in ((0.0, 0.7), (1.0, 0.9), (2.0, 0.8))
        ]
        assert merge(dets) == [dets[1]]

    def test_tile_order_does_not_matter(self, rng):
        dets = [
            make_detection(*rng.uniform(0, 800, 2), *rng.uniform(10, 60, 2), rng.uniform(0, 180),
                           score=float(rng.uniform()), class_id=int(rng.integers(0, 3)))
            for _ in range(60)
        ]
        assert sorted(merge(dets), key=lambda d: d.score) == sorted(merge(dets[::-1]), key=lambda d: d.score)

    def test_cross_tile_pipeline(self):
        tiles = make_tiles(1100, 600, 600, 100, (1.0,), image_id='img')
        record = make_record(550, 300, 40, 20, 30)
        found = []
        for tile in tiles:
            for cropped in crop_annotations([record], tile):
                found.append(to_global(
                    Detection(corners=cropped.corners, score=0.9 - 0.1 * len(found), class_id=0, image_id=tile.tile_id),
                    tile,
                ))
        assert len(found) == 2
        merged, = merge(found)
        assert merged.image_id == 'img'
        assert np.allclose(np.asarray(merged.corners), np.asarray(record.corners))
