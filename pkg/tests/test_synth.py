import itertools

import numpy as np
import pytest

from mcmt.core import InputError
from mcmt.geometry import ground_point
from mcmt.synth import (
    SceneConfig,
    export_scene,
    generate_scene,
    load_scene_config,
    make_calibration,
    parse_scene_config,
    scene_config_to_text,
)
from mcmt import io


def clean_config(**overrides) -> SceneConfig:
    cfg = SceneConfig(
        n_objects=2,
        n_cameras=2,
        duration=60,
        pixel_noise_sigma=0.0,
        embed_noise_sigma=0.0,
        miss_rate=0.0,
        fp_rate=0.0,
        seed=3,
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def scenes_equal(a, b) -> bool:
    if a.ground_truth != b.ground_truth:
        return False
    if sorted(a.calibrations) != sorted(b.calibrations):
        return False
    for cam in a.calibrations:
        if not np.array_equal(a.calibrations[cam].projection, b.calibrations[cam].projection):
            return False
    for cam in a.detections:
        da, db = a.detections[cam], b.detections[cam]
        if len(da) != len(db):
            return False
        for x, y in zip(da, db):
            if (x.camera_id, x.frame, x.bbox, x.class_id, x.confidence) != (
                y.camera_id, y.frame, y.bbox, y.class_id, y.confidence
            ):
                return False
            if not np.array_equal(x.embedding, y.embedding):
                return False
    return True


class TestGeneration:
    def test_deterministic_from_seed(self):
        cfg = SceneConfig(n_objects=3, n_cameras=2, duration=40, seed=11)
        assert scenes_equal(generate_scene(cfg), generate_scene(cfg))

    def test_noise_free_detections_recover_ground_truth(self):
        scene = generate_scene(clean_config(n_objects=1))
        gt_by_frame = {r.frame: r.centroid for r in scene.ground_truth}
        for cam_id, dets in scene.detections.items():
            frames = [d.frame for d in dets]
            assert frames == list(range(scene.config.duration))  # exactly one per frame
            cal = scene.calibrations[cam_id]
            for d in dets:
                wp = ground_point(d.bbox, cal)
                assert wp.distance(gt_by_frame[d.frame]) < 1e-6

    def test_miss_rate_binomial_bound(self):
        cfg = clean_config(n_objects=1, n_cameras=1, duration=1000, miss_rate=0.5)
        scene = generate_scene(cfg)
        observed = len(scene.detections["cam00"])
        assert 420 <= observed <= 580  # 99.9% binomial bound around 500

    def test_anchor_near_orthogonality(self):
        scene = generate_scene(SceneConfig(n_objects=5, embed_dim=64, seed=2))
        for i, j in itertools.combinations(range(5), 2):
            assert abs(float(scene.anchors[i] @ scene.anchors[j])) < 0.2

    def test_embedding_separability(self):
        scene = generate_scene(SceneConfig(n_objects=3, n_cameras=1, duration=80, seed=5))
        by_class: dict[int, list[np.ndarray]] = {}
        dets = [d for d in scene.detections["cam00"] if d.confidence >= 0.8]
        for d in dets:
            # object identity from the nearest anchor
            owner = int(np.argmax(scene.anchors @ d.embedding))
            by_class.setdefault(owner, []).append(d.embedding)
        intra, inter = [], []
        for a, b in itertools.combinations(range(3), 2):
            for x in by_class[a][:20]:
                for y in by_class[b][:20]:
                    inter.append(float(x @ y))
        for c in range(3):
            for x, y in itertools.combinations(by_class[c][:20], 2):
                intra.append(float(x @ y))
        assert np.mean(intra) - np.mean(inter) > 0.5

    def test_entry_and_exit_frames_respected(self):
        cfg = clean_config(n_objects=2, entry_frames=(0, 20), exit_frames=(40, 60))
        scene = generate_scene(cfg)
        frames_per_obj: dict[int, list[int]] = {}
        for r in scene.ground_truth:
            frames_per_obj.setdefault(r.object_id, []).append(r.frame)
        assert frames_per_obj[0] == list(range(0, 40))
        assert frames_per_obj[1] == list(range(20, 60))

    def test_noise_seed_changes_detections_not_truth(self):
        base = SceneConfig(n_objects=2, n_cameras=2, duration=40, seed=9, noise_seed=1)
        other = SceneConfig(n_objects=2, n_cameras=2, duration=40, seed=9, noise_seed=2)
        a, b = generate_scene(base), generate_scene(other)
        assert a.ground_truth == b.ground_truth
        for cam in a.calibrations:
            assert np.array_equal(a.calibrations[cam].projection, b.calibrations[cam].projection)
        boxes_a = [(d.frame, d.bbox) for d in a.detections["cam00"]]
        boxes_b = [(d.frame, d.bbox) for d in b.detections["cam00"]]
        assert boxes_a != boxes_b

    def test_zero_cameras_rejected(self):
        with pytest.raises(InputError):
            generate_scene(SceneConfig(n_cameras=0))

    def test_bad_rates_rejected(self):
        with pytest.raises(InputError):
            generate_scene(SceneConfig(miss_rate=1.5))

    def test_entry_after_duration_rejected(self):
        with pytest.raises(InputError):
            generate_scene(SceneConfig(n_objects=1, duration=10, entry_frames=(10,)))

    def test_camera_facing_away_fails_coverage(self):
        corners = np.array([[0, 0, 0], [20, 0, 0], [0, 20, 0], [20, 20, 0]], dtype=float)
        with pytest.raises(InputError):
            make_calibration(
                "bad",
                position=np.array([10.0, 10.0, 5.0]),
                target=np.array([10.0, 10.0, 50.0]),  # looking up, away from the ground
                image_size=(640, 480),
                ground_corners=corners,
            )


class TestExport:
    def test_round_trip(self, tmp_path):
        scene = generate_scene(SceneConfig(n_objects=2, n_cameras=2, duration=30, seed=4))
        export_scene(scene, tmp_path)
        dets = io.load_detections(tmp_path / "detections.txt")
        cals = io.load_calibrations(tmp_path / "calibrations.txt")
        gt = io.load_ground_truth(tmp_path / "ground_truth.txt")
        assert sorted(dets) == sorted(scene.detections)
        for cam in dets:
            assert len(dets[cam]) == len(scene.detections[cam])
            for a, b in zip(dets[cam], scene.detections[cam]):
                assert a.frame == b.frame and a.bbox == b.bbox
                assert np.array_equal(a.embedding, b.embedding)
        for cam in cals:
            assert np.array_equal(cals[cam].projection, scene.calibrations[cam].projection)
        assert gt == sorted(scene.ground_truth, key=lambda r: (r.frame, r.object_id))

    def test_fixed_seed_exports_identical_bytes(self, tmp_path):
        scene_a = generate_scene(SceneConfig(seed=42, duration=30))
        scene_b = generate_scene(SceneConfig(seed=42, duration=30))
        export_scene(scene_a, tmp_path / "a")
        export_scene(scene_b, tmp_path / "b")
        for name in ("detections.txt", "embeddings.f32", "calibrations.txt",
                     "ground_truth.txt", "scene_config.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_empty_scene_exports_valid_files(self, tmp_path):
        scene = generate_scene(SceneConfig(n_objects=0, duration=10, fp_rate=0.0))
        export_scene(scene, tmp_path)
        assert io.load_detections(tmp_path / "detections.txt") == {}
        assert io.load_ground_truth(tmp_path / "ground_truth.txt") == []
        assert len(io.load_calibrations(tmp_path / "calibrations.txt")) == 3


class TestSceneConfigFormat:
    def test_text_round_trip(self):
        cfg = SceneConfig(n_objects=4, entry_frames=(0, 0, 5, 9), duration=50, seed=8)
        parsed = parse_scene_config(scene_config_to_text(cfg))
        assert parsed == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(InputError):
            parse_scene_config("bogus_key = 3\n")

    def test_bad_value_rejected(self):
        with pytest.raises(InputError):
            parse_scene_config("n_objects = many\n")

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "scene.cfg"
        p.write_text("n_objects = 7\nduration = 25\nseed = 3\n")
        cfg = load_scene_config(p)
        assert cfg.n_objects == 7 and cfg.duration == 25
