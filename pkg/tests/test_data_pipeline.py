import json
import math

import numpy as np
import pytest

from centerdet.data import (
    AnnotationError,
    Chip,
    SamplingPolicy,
    Scene,
    ShapeClass,
    SyntheticSpec,
    augment,
    color_jitter,
    generate_synthetic_scene,
    hflip_chip,
    load_annotations,
    rotate90_chip,
    sample_chip,
    save_annotations,
    write_synthetic_dataset,
)
from centerdet.data.synthetic import SyntheticError, default_spec, generate_scenes
from centerdet.geometry import GroundTruthObject, Point2D

SQRT2 = math.sqrt(2.0)


def flat_scene(width=64, height=64, objects=(), gsd=None, image_id="s0", value=0.5):
    pixels = np.full((height, width, 3), value, dtype=np.float32)
    return Scene(
        image_id=image_id,
        width=width,
        height=height,
        gsd=gsd,
        objects=list(objects),
        pixels=pixels,
    )


class TestAnnotationsIO:
    def test_roundtrip_one_scene(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        line = {
            "image_id": "a",
            "image_path": None,
            "width": 100,
            "height": 80,
            "gsd": 0.3,
            "objects": [
                {"class_id": 0, "center": [10.5, 20.25]},
                {"class_id": 2, "hbox": [0, 0, 10, 20]},
            ],
        }
        path.write_text(json.dumps(line) + "\n")
        scenes = load_annotations(path)
        assert len(scenes) == 1
        scene = scenes[0]
        assert len(scene.objects) == 2
        assert scene.objects[0].center == Point2D(10.5, 20.25)
        # hbox converted to its centerpoint, box retained
        assert scene.objects[1].center == Point2D(5, 10)
        assert scene.objects[1].source_box.as_tuple() == (0, 0, 10, 20)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text("")
        assert load_annotations(path) == []

    def test_rotated_box_record(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        rec = {
            "image_id": "a",
            "image_path": None,
            "width": 10,
            "height": 10,
            "gsd": None,
            "objects": [{"class_id": 0, "rbox": [5, 5, 2, 2, math.pi / 4]}],
        }
        path.write_text(json.dumps(rec) + "\n")
        obj = load_annotations(path)[0].objects[0]
        assert obj.center == Point2D(5, 5)
        from centerdet.geometry import rotated_to_horizontal

        hull = rotated_to_horizontal(obj.source_box)
        assert hull.as_tuple() == pytest.approx(
            (5 - SQRT2, 5 - SQRT2, 5 + SQRT2, 5 + SQRT2)
        )

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        good = {"image_id": "a", "width": 10, "height": 10, "objects": []}
        path.write_text(json.dumps(good) + "\n{not json\n")
        with pytest.raises(AnnotationError, match=":2:"):
            load_annotations(path)

    def test_out_of_bounds_center_rejected(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        bad = {
            "image_id": "a",
            "width": 10,
            "height": 10,
            "objects": [{"class_id": 0, "center": [11, 5]}],
        }
        path.write_text(json.dumps(bad) + "\n")
        with pytest.raises(AnnotationError, match=":1:"):
            load_annotations(path)

    def test_save_load_roundtrip(self, tmp_path):
        scenes = [
            flat_scene(
                objects=[GroundTruthObject(Point2D(3, 4), 1)], gsd=0.25, image_id="x"
            )
        ]
        save_annotations(scenes, tmp_path / "out.jsonl")
        back = load_annotations(tmp_path / "out.jsonl")
        assert back[0].image_id == "x"
        assert back[0].gsd == 0.25
        assert back[0].objects[0].center == Point2D(3, 4)


class TestSampleChip:
    def test_random_branch_whole_scene(self):
        scene = flat_scene(width=64, height=64)
        policy = SamplingPolicy(chip_size=64, random_fraction=1.0, scale_range=(1.0, 1.0))
        chip = sample_chip([scene], policy, np.random.default_rng(0))
        assert chip.pixels.shape == (64, 64, 3)
        np.testing.assert_allclose(chip.pixels, scene.pixels)
        assert chip.scale == 1.0
        assert chip.origin == Point2D(0, 0)

    def test_class_balanced_contains_lone_object(self):
        obj = GroundTruthObject(Point2D(200, 40), 3)
        scene = flat_scene(width=256, height=256, objects=[obj])
        policy = SamplingPolicy(chip_size=64, random_fraction=0.0, scale_range=(1.0, 1.0))
        for seed in range(20):
            chip = sample_chip([scene], policy, np.random.default_rng(seed))
            assert any(o.class_id == 3 for o in chip.objects)

    def test_class_sampling_is_uniform_over_classes(self):
        # one instance of class 0 vs 99 of class 1: class-balanced draws should
        # surface class 0 in about half of the chips (binomial 3 sigma)
        rng = np.random.default_rng(123)
        objects = [GroundTruthObject(Point2D(128, 128), 0)]
        for i in range(99):
            x = 16 + (i % 10) * 22
            y = 16 + (i // 10) * 22
            objects.append(GroundTruthObject(Point2D(x, y), 1))
        # separate scenes so a chip containing the class-0 object is unambiguous
        scene_a = flat_scene(width=256, height=256, objects=[objects[0]], image_id="a")
        scene_b = flat_scene(width=256, height=256, objects=objects[1:], image_id="b")
        policy = SamplingPolicy(chip_size=32, random_fraction=0.0, scale_range=(1.0, 1.0))
        n = 3000
        hits = 0
        for _ in range(n):
            chip = sample_chip([scene_a, scene_b], policy, rng)
            if chip.image_id == "a":
                hits += 1
        sigma = math.sqrt(n * 0.25)
        assert abs(hits - n / 2) < 3 * sigma

    def test_gsd_mode_effective_gsd_in_range(self):
        scene = flat_scene(width=200, height=200, gsd=0.3)
        policy = SamplingPolicy(chip_size=64, random_fraction=1.0)
        for seed in range(10):
            chip = sample_chip([scene], policy, np.random.default_rng(seed))
            assert 0.10 <= chip.gsd <= 0.15
            # requested resize factor consistent with the target gsd
            assert chip.scale == pytest.approx(0.3 / chip.gsd)

    def test_small_image_padded_bottom_right(self):
        scene = flat_scene(width=32, height=32, value=0.7)
        policy = SamplingPolicy(chip_size=64, random_fraction=1.0, scale_range=(1.0, 1.0))
        chip = sample_chip([scene], policy, np.random.default_rng(1))
        assert chip.pixels.shape == (64, 64, 3)
        np.testing.assert_allclose(chip.pixels[:32, :32], 0.7)
        np.testing.assert_allclose(chip.pixels[32:, :], 0.0)
        np.testing.assert_allclose(chip.pixels[:, 32:], 0.0)

    def test_object_coordinates_map_back_to_source(self):
        rng = np.random.default_rng(7)
        objects = [
            GroundTruthObject(Point2D(float(x), float(y)), 0)
            for x, y in rng.uniform(20, 236, size=(12, 2))
        ]
        scene = flat_scene(width=256, height=256, objects=objects)
        policy = SamplingPolicy(chip_size=96, random_fraction=0.5, scale_range=(0.667, 1.5))
        seen = 0
        for seed in range(30):
            chip = sample_chip([scene], policy, np.random.default_rng(seed))
            for obj in chip.objects:
                src_x = obj.center.x / chip.scale + chip.origin.x
                src_y = obj.center.y / chip.scale + chip.origin.y
                match = min(
                    math.hypot(src_x - o.center.x, src_y - o.center.y)
                    for o in scene.objects
                )
                assert match < 0.5
                seen += 1
        assert seen > 10

    def test_center_inclusion_rule(self):
        # scene exactly chip-sized forces the window to the origin: a center on
        # the far (exclusive) edge is dropped, an interior one is kept
        objects = [
            GroundTruthObject(Point2D(16.0, 16.0), 0),
            GroundTruthObject(Point2D(32.0, 16.0), 1),
        ]
        scene = flat_scene(width=32, height=32, objects=objects)
        policy = SamplingPolicy(chip_size=32, random_fraction=1.0, scale_range=(1.0, 1.0))
        chip = sample_chip([scene], policy, np.random.default_rng(0))
        assert chip.origin == Point2D(0, 0)
        assert [o.class_id for o in chip.objects] == [0]

    def test_empty_scene_set_rejected(self):
        with pytest.raises(ValueError):
            sample_chip([], SamplingPolicy(), np.random.default_rng(0))


class TestAugment:
    def make_chip(self, width=100, objects=()):
        rng = np.random.default_rng(3)
        pixels = rng.uniform(0.2, 0.8, size=(width, width, 3)).astype(np.float32)
        return Chip(pixels=pixels, origin=Point2D(0, 0), scale=1.0, objects=list(objects))

    def test_identity(self):
        chip = self.make_chip()
        out = color_jitter(rotate90_chip(chip, 0), 1.0, 1.0, 1.0)
        np.testing.assert_allclose(out.pixels, chip.pixels, atol=1e-6)

    def test_rotation_marker_consistency(self):
        # paint a marker pixel at the object center, rotate, and check the
        # transformed center lands inside the marker pixel
        for k in (1, 2, 3):
            chip = self.make_chip(
                objects=[GroundTruthObject(Point2D(10.5, 20.5), 0)]
            )
            chip.pixels[20, 10] = (1.0, 0.0, 1.0)  # row 20, col 10
            out = rotate90_chip(chip, k)
            marker = np.argwhere(
                (out.pixels == np.array([1.0, 0.0, 1.0], dtype=np.float32)).all(axis=2)
            )
            assert marker.shape[0] == 1
            row, col = marker[0]
            c = out.objects[0].center
            assert col <= c.x <= col + 1
            assert row <= c.y <= row + 1

    def test_flip_mirror_arithmetic(self):
        chip = self.make_chip(objects=[GroundTruthObject(Point2D(10, 40), 2)])
        out = hflip_chip(chip)
        assert out.objects[0].center == Point2D(90, 40)
        np.testing.assert_allclose(out.pixels, chip.pixels[:, ::-1])

    def test_flip_involution(self):
        chip = self.make_chip(objects=[GroundTruthObject(Point2D(12.25, 3.5), 1)])
        out = hflip_chip(hflip_chip(chip))
        np.testing.assert_allclose(out.pixels, chip.pixels)
        assert out.objects[0].center == chip.objects[0].center

    def test_four_rotations_identity(self):
        chip = self.make_chip(objects=[GroundTruthObject(Point2D(33.5, 61.25), 1)])
        out = chip
        for _ in range(4):
            out = rotate90_chip(out, 1)
        np.testing.assert_allclose(out.pixels, chip.pixels)
        assert out.objects[0].center.x == pytest.approx(chip.objects[0].center.x)
        assert out.objects[0].center.y == pytest.approx(chip.objects[0].center.y)

    def test_augment_preserves_class_multiset(self):
        objects = [
            GroundTruthObject(Point2D(10, 10), 0),
            GroundTruthObject(Point2D(50, 60), 1),
            GroundTruthObject(Point2D(80, 20), 1),
        ]
        chip = self.make_chip(objects=objects)
        for seed in range(10):
            out = augment(chip, np.random.default_rng(seed))
            assert sorted(o.class_id for o in out.objects) == [0, 1, 1]
            assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_color_jitter_pixels_only(self):
        chip = self.make_chip(objects=[GroundTruthObject(Point2D(5, 5), 0)])
        out = color_jitter(chip, brightness=1.2, contrast=0.9, saturation=0.8)
        assert out.objects[0].center == chip.objects[0].center
        assert not np.allclose(out.pixels, chip.pixels)


class TestSynthetic:
    def test_zero_objects(self):
        spec = default_spec(n_objects=0)
        scene = generate_synthetic_scene(spec, "bg", np.random.default_rng(0))
        assert scene.objects == []
        assert scene.pixels.shape == (256, 256, 3)

    def test_object_count_and_bounds(self):
        spec = default_spec(n_objects=25)
        scene = generate_synthetic_scene(spec, "s", np.random.default_rng(1))
        assert len(scene.objects) == 25
        for obj in scene.objects:
            assert 0 <= obj.center.x <= 256
            assert 0 <= obj.center.y <= 256
            assert obj.source_box is not None

    def test_density_arithmetic(self):
        ratio = 20 / 65536
        spec = default_spec(n_objects=None, density=ratio)
        scene = generate_synthetic_scene(spec, "d", np.random.default_rng(2))
        assert len(scene.objects) == int(ratio * 65536) == 20

    def test_seed_reproducibility(self):
        spec = default_spec(n_objects=10)
        a = generate_synthetic_scene(spec, "r", np.random.default_rng(42))
        b = generate_synthetic_scene(spec, "r", np.random.default_rng(42))
        assert (a.pixels == b.pixels).all()
        assert [
            (o.center.x, o.center.y, o.class_id) for o in a.objects
        ] == [(o.center.x, o.center.y, o.class_id) for o in b.objects]

    def test_infeasible_density_raises(self):
        spec = default_spec(n_objects=500, min_separation=30.0)
        with pytest.raises(SyntheticError, match="density infeasible"):
            generate_synthetic_scene(spec, "x", np.random.default_rng(0))

    def test_marker_alignment_of_rendered_centers(self):
        # the rendered shape must actually cover its annotated center
        spec = default_spec(n_objects=8)
        scene = generate_synthetic_scene(spec, "m", np.random.default_rng(5))
        for obj in scene.objects:
            col = int(obj.center.x)
            row = int(obj.center.y)
            ref = spec.classes[obj.class_id].color
            pix = scene.pixels[row, col]
            assert np.abs(pix - ref).max() < 0.15

    def test_density_spectrum_monotone(self):
        spec = default_spec(n_objects=None, min_separation=14.0)
        scenes = generate_scenes(
            spec, 10, np.random.default_rng(0), density_spectrum=(5 / 65536, 30 / 65536)
        )
        counts = [len(s.objects) for s in scenes]
        assert counts[0] < counts[-1]
        assert counts == sorted(counts)

    def test_write_dataset_roundtrip(self, tmp_path):
        spec = default_spec(n_objects=5, width=96, height=96)
        train, test = write_synthetic_dataset(spec, tmp_path, n_train=3, n_test=2, seed=9)
        assert len(train) == 3 and len(test) == 2
        loaded = load_annotations(tmp_path / "train.jsonl")
        assert len(loaded) == 3
        from centerdet.data import scene_pixels

        arr = scene_pixels(loaded[0])
        assert arr.shape == (96, 96, 3)
        # PNG round trip is 8-bit; generated pixels survive within quantization
        np.testing.assert_allclose(arr, train[0].pixels, atol=1 / 255 + 1e-6)
        assert len(loaded[0].objects) == len(train[0].objects)
