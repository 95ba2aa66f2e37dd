import math

import numpy as np
import pytest
from scipy.stats import binom

from bbavector.core.codec import TargetMaps, decode, encode
from bbavector.core.errors import ParseError, PlacementFailure
from bbavector.core.geometry import canonicalize, convex_polygon_iou
from bbavector.core.schemas import NoiseSpec, SceneSpec
from bbavector.services.synth import generate_scene, load_specs, make_rng, perturb, run_pipeline, run_seed

SILENT = NoiseSpec()


class TestGenerateScene:
    def test_same_seed_same_scene(self):
        spec = SceneSpec(seed=42)
        assert generate_scene(spec) == generate_scene(spec)

    def test_different_seeds_differ(self):
        assert generate_scene(SceneSpec(seed=1)) != generate_scene(SceneSpec(seed=2))

    def test_fixed_rotation_single_object(self):
        spec = SceneSpec(min_objects=1, max_objects=1, min_angle=45, max_angle=45, min_size=20, max_size=20, seed=3)
        record, = generate_scene(spec)
        corners = np.asarray(canonicalize(record.corners).corners)
        edge = corners[1] - corners[0]
        assert math.degrees(math.atan2(edge[1], edge[0])) == pytest.approx(45.0)
        assert generate_scene(spec) == [record]

    @pytest.mark.parametrize('seed', range(10))
    def test_constraints(self, seed):
        spec = SceneSpec(seed=seed, max_objects=15, min_separation=3)
        records = generate_scene(spec)
        assert 1 <= len(records) <= 15
        centers = []
        for record in records:
            box = canonicalize(record.corners)
            assert all(0 <= x < spec.image_width and 0 <= y < spec.image_height for x, y in box.corners)
            centers.append(box.center)
        for i, a in enumerate(centers):
            for b in centers[i + 1:]:
                assert math.dist(a, b) >= spec.min_separation * spec.stride
        for i, a in enumerate(records):
            for b in records[i + 1:]:
                assert convex_polygon_iou(a.corners, b.corners) < 1e-9

    def test_impossible_separation(self):
        spec = SceneSpec(image_width=128, image_height=128, min_objects=2, max_objects=2,
                         min_size=8, max_size=8, min_separation=64, seed=0)
        with pytest.raises(PlacementFailure):
            generate_scene(spec)

    def test_invalid_ranges(self):
        with pytest.raises(ValueError):
            SceneSpec(min_size=50, max_size=10)


class TestPerturb:
    @pytest.fixture
    def maps(self):
        return encode(generate_scene(SceneSpec(seed=5, classes=4)), (512, 512), K=4)

    def test_silent_noise_is_identity(self, maps):
        out = perturb(maps, SILENT, seed=9)
        for name in ('P', 'O', 'B', 'alpha'):
            assert np.array_equal(getattr(out, name), getattr(maps, name))

    def test_attenuation_scales_peaks(self, maps):
        out = perturb(maps, NoiseSpec(attenuation=0.3), seed=9)
        peaks = maps.P == 1.0
        assert np.allclose(out.P[peaks], 0.7)
        assert np.allclose(out.P, maps.P * 0.7)

    def test_values_stay_in_unit_interval(self, maps):
        out = perturb(maps, NoiseSpec(heatmap_std=0.5, alpha_std=0.5, offset_std=1.0), seed=1)
        for plane in (out.P, out.alpha):
            assert plane.min() >= 0.0 and plane.max() <= 1.0

    def test_same_seed_same_noise(self, maps):
        noise = NoiseSpec(heatmap_std=0.2, box_std=0.3, spurious_rate=0.01)
        a, b = perturb(maps, noise, seed=4), perturb(maps, noise, seed=4)
        assert np.array_equal(a.P, b.P) and np.array_equal(a.B, b.B)

    def test_spurious_peak_rate(self):
        maps = TargetMaps.zeros(2, 32, 32)
        rate, seeds = 0.01, 100
        hits = sum(
            int(np.count_nonzero(perturb(maps, NoiseSpec(spurious_rate=rate), seed=seed).P == 0.6))
            for seed in range(seeds)
        )
        trials = maps.P.size * seeds
        low, high = binom.interval(0.997, trials, rate)
        assert low <= hits <= high


class TestPipeline:
    def test_rng_is_pcg64(self):
        assert isinstance(make_rng(0).bit_generator, np.random.PCG64)

    def test_zero_noise_is_perfect(self):
        result = run_pipeline(SceneSpec(classes=3), SILENT, range(50))
        assert result.mAP == 1.0
        assert all(r.ap == 1.0 for r in result.classes.values())

    def test_deterministic(self):
        noise = NoiseSpec(heatmap_std=0.1, offset_std=0.1, spurious_rate=0.001)
        first = run_pipeline(SceneSpec(), noise, range(5))
        assert run_pipeline(SceneSpec(), noise, range(5)) == first

    def test_parallel_matches_serial(self):
        noise = NoiseSpec(heatmap_std=0.1, box_std=0.2)
        assert run_pipeline(SceneSpec(), noise, range(6), n_jobs=2) == run_pipeline(SceneSpec(), noise, range(6))

    def test_full_attenuation_finds_nothing(self):
        assert run_pipeline(SceneSpec(), NoiseSpec(attenuation=1.0), range(5)).mAP == 0.0

    def test_axis_aligned_scenes_use_horizontal_boxes(self):
        scene = SceneSpec(min_angle=0, max_angle=0)
        image_id, records, dets = run_seed(scene, SILENT, 11)
        assert image_id == 'scene_000011'
        assert len(dets) == len(records)
        assert not any(d.is_rbb for d in dets)

    def test_rotated_scenes_use_vectors(self):
        maps = encode(generate_scene(SceneSpec(seed=8)), (512, 512), K=3)
        assert all(d.is_rbb for d in decode(maps, score_thresh=0.5))

    @pytest.mark.slow
    def test_heatmap_noise_lowers_map(self):
        levels = [0.0, 0.1, 0.2, 0.4]
        scores = [run_pipeline(SceneSpec(), NoiseSpec(heatmap_std=std), range(50)).mAP for std in levels]
        assert scores[0] == 1.0
        for better, worse in zip(scores, scores[1:]):
            assert worse <= better


class TestLoadSpecs:
    def test_keys_are_case_insensitive(self, tmp_path):
        path = tmp_path / 'sim.env'
        path.write_text("IMAGE_WIDTH=256\nimage_height=256\nMAX_OBJECTS=4\nHEATMAP_STD=0.1\nseed=3\n")
        scene, noise = load_specs(path)
        assert (scene.image_width, scene.image_height, scene.max_objects, scene.seed) == (256, 256, 4, 3)
        assert noise.heatmap_std == 0.1

    def test_unknown_key(self, tmp_path):
        path = tmp_path / 'sim.env'
        path.write_text("COLOUR=red\n")
        with pytest.raises(ParseError):
            load_specs(path)

    def test_invalid_value(self, tmp_path):
        path = tmp_path / 'sim.env'
        path.write_text("HEATMAP_STD=-1\n")
        with pytest.raises(ParseError):
            load_specs(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_specs(tmp_path / 'none.env')
