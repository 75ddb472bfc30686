import json
import sys

import numpy as np
import pytest

from matchforge.correspondence import (
    CorrespondenceSet,
    FrameId,
    Match,
    read_interchange,
)
from matchforge.errors import AugmentationRejected, ConfigError
from matchforge.estimation import RansacConfig
from matchforge.geometry import Homography, apply_homography
from matchforge.matchers import FrameSource, MatcherKind, MatcherSpec
from matchforge.pipeline import (
    AugmentConfig,
    PipelineConfig,
    TrainingPair,
    apply_augmentation,
    emit_dataset,
    generate_base_labels,
    propagate_video,
    random_perspective,
    rerun_propagation,
    run_label_pipeline,
    sample_frames,
    schedule_base_pairs,
)
from matchforge.synthetic import (
    HomographyPairTruth,
    PlanarVideoTruth,
    RigPairTruth,
    smooth_depth_map,
    write_video_frames,
)
from matchforge.geometry import CameraIntrinsics, Pose, rotation_about_axis

from oracles import matches_as_set, propagate_video_oracle


class TestScheduling:
    def test_sample_frames(self):
        assert sample_frames(100, 20) == [0, 20, 40, 60, 80]
        assert sample_frames(20, 20) == [0]
        long = sample_frames(1000, 20)
        assert len(long) == 50 and long[-1] == 980

    def test_schedule_base_pairs_hand_enumeration(self):
        # for each sampled X and offset d: (X, X+d) iff X+d is also sampled
        frames = [0, 20, 40, 60, 80]
        expected = [
            (0, 20),
            (0, 40),
            (0, 80),
            (20, 40),
            (20, 60),
            (40, 60),
            (40, 80),
            (60, 80),
        ]
        assert sorted(schedule_base_pairs(frames, [20, 40, 80])) == expected

    def test_schedule_two_frames(self):
        assert schedule_base_pairs([0, 20], [20, 40, 80]) == [(0, 20)]

    def test_schedule_empty_offsets(self):
        assert schedule_base_pairs([0, 20, 40], []) == []


def _blank_frame(video, index, w=640, h=480):
    return FrameSource(video, index, image=np.zeros((h, w), np.uint8))


def _config(**kwargs):
    defaults = dict(
        matchers=(MatcherSpec(MatcherKind.SYNTHETIC, "oracle", {"n": 400}),),
        augmentation=AugmentConfig(enabled=False),
    )
    defaults.update(kwargs)
    return PipelineConfig(**defaults)


H_PAIR = np.array([[1.0, 0.01, 8.0], [-0.01, 1.0, -4.0], [1e-5, 0.0, 1.0]])


class TestGenerateBaseLabels:
    def test_single_clean_matcher_passes_through(self):
        config = _config()
        truth = HomographyPairTruth(H_PAIR, 640, 480, seed=1)
        fa, fb = _blank_frame("v", 0), _blank_frame("v", 20)
        labels = generate_base_labels(fa, fb, config, {"oracle": truth})
        assert len(labels.matches) == 400
        assert labels.per_method == {"oracle": 400}
        # noise-free homography data is planar by construction
        assert any(f.startswith("planar_degenerate") for f in labels.flags)

    def test_two_disjoint_matchers_concatenate(self):
        spec_a = MatcherSpec(MatcherKind.SYNTHETIC, "m1", {"n": 300})
        spec_b = MatcherSpec(MatcherKind.SYNTHETIC, "m2", {"n": 400})
        config = _config(matchers=(spec_a, spec_b))
        truths = {
            "m1": HomographyPairTruth(H_PAIR, 640, 480, seed=11),
            "m2": HomographyPairTruth(H_PAIR, 640, 480, seed=22),
        }
        fa, fb = _blank_frame("v", 0), _blank_frame("v", 20)
        labels = generate_base_labels(fa, fb, config, truths)
        assert len(labels.matches) == 700
        counts = labels.matches.source_counts()
        assert counts == {"m1": 300, "m2": 400}

    def test_outliers_are_filtered_out(self):
        k = CameraIntrinsics(300.0, 300.0, 160.0, 120.0, 320, 240)
        depth = smooth_depth_map(5, 320, 240)
        pose_b = Pose(rotation_about_axis([0.1, 1, 0], 6.0), np.array([0.8, 0.0, 0.1]))
        truth = RigPairTruth(k, Pose.identity(), depth, k, pose_b, seed=3)
        spec = MatcherSpec(
            MatcherKind.SYNTHETIC, "noisy", {"n": 400, "outlier_rate": 0.4, "seed": 3}
        )
        config = _config(matchers=(spec,))
        fa = FrameSource("v", 0, image=np.zeros((240, 320), np.uint8))
        fb = FrameSource("v", 20, image=np.zeros((240, 320), np.uint8))
        labels = generate_base_labels(fa, fb, config, {"noisy": truth})
        res = truth.constraint_residual(
            fa, fb, labels.matches.points_a(), labels.matches.points_b()
        )
        assert res.max() < 2.0  # no planted (>10 px) outlier survives
        assert len(labels.matches) >= 0.95 * 240

    def test_failing_matcher_is_skipped(self):
        bad = MatcherSpec(
            MatcherKind.EXTERNAL,
            "bad",
            {"command": f"{sys.executable} -c exit(1) {{image_a}} {{image_b}} {{out}}"},
        )
        good = MatcherSpec(MatcherKind.SYNTHETIC, "oracle", {"n": 300})
        config = _config(matchers=(bad, good))
        truth = HomographyPairTruth(H_PAIR, 640, 480, seed=2)
        fa, fb = _blank_frame("v", 0), _blank_frame("v", 20)
        fa.path = fb.path = None
        labels = generate_base_labels(fa, fb, config, {"oracle": truth})
        assert "matcher_failed:bad" in labels.flags
        assert len(labels.matches) == 300

    def test_provenance_conservation(self):
        spec_a = MatcherSpec(MatcherKind.SYNTHETIC, "m1", {"n": 250})
        spec_b = MatcherSpec(MatcherKind.SYNTHETIC, "m2", {"n": 350})
        config = _config(matchers=(spec_a, spec_b))
        truths = {
            "m1": HomographyPairTruth(H_PAIR, 640, 480, seed=31),
            "m2": HomographyPairTruth(H_PAIR, 640, 480, seed=32),
        }
        labels = generate_base_labels(_blank_frame("v", 0), _blank_frame("v", 20), config, truths)
        assert sum(labels.matches.source_counts().values()) == len(labels.matches)


def _video_base_sets(truth, frames, offsets, n_per_pair):
    """Base sets over sampled frames via the planar anchor truth."""
    sets = {}
    sampled = set(frames)
    for a in frames:
        for d in offsets:
            if a + d not in sampled:
                continue
            fa = FrameSource("v", a, image=np.zeros((truth.motion.height, truth.motion.width), np.uint8))
            fb = FrameSource("v", a + d, image=np.zeros((truth.motion.height, truth.motion.width), np.uint8))
            pa, pb = truth.correspondences(fa, fb, n_per_pair)
            matches = tuple(
                Match(tuple(p), tuple(q), 1.0, "oracle") for p, q in zip(pa, pb)
            )
            sets[(a, a + d)] = CorrespondenceSet(
                FrameId("v", a), FrameId("v", a + d), matches
            )
    return sets


class TestPropagateVideo:
    def test_matches_hand_rolled_chain_oracle(self):
        truth = PlanarVideoTruth.panning(160, 120, 200, dx=0.5, n_anchors=1600, seed=5)
        frames = list(range(0, 200, 20))
        config = _config(min_correspondences=256)
        base = _video_base_sets(truth, frames, config.base_offsets, 600)
        emitted = propagate_video(base, config)
        oracle = propagate_video_oracle(
            base,
            config.base_offsets,
            config.min_correspondences,
            config.propagation_pixel_threshold,
            config.dedup_radius,
            ["oracle"],
        )
        got = {(p.frame_a.index, p.frame_b.index): p.correspondences for p in emitted}
        assert set(got) == set(oracle)
        for key in got:
            assert matches_as_set(got[key]) == matches_as_set(oracle[key])

    def test_budget_never_met_emits_nothing(self):
        truth = PlanarVideoTruth.panning(160, 120, 100, dx=0.2, n_anchors=900, seed=6)
        frames = list(range(0, 100, 20))
        config = _config(min_correspondences=1024)
        base = _video_base_sets(truth, frames, config.base_offsets, 500)
        assert propagate_video(base, config) == []

    def test_constructed_decay_schedule(self):
        # counts shrink with the pan; the budget kills the 320 level
        truth = PlanarVideoTruth.panning(160, 120, 340, dx=0.4, n_anchors=5800, seed=7)
        frames = list(range(0, 340, 20))
        config = _config(min_correspondences=1024)
        base = _video_base_sets(truth, frames, config.base_offsets, 2000)
        emitted = {p.frame_a.index: p for p in propagate_video(base, config)}
        chain0 = emitted[0]
        assert chain0.interval == 160
        assert len(chain0.correspondences) > 1024
        assert chain0.propagation_depth == 3

    def test_emitted_counts_exceed_budget_and_intervals_cover_offsets(self):
        truth = PlanarVideoTruth.panning(160, 120, 200, dx=0.3, n_anchors=3000, seed=8)
        frames = list(range(0, 200, 20))
        config = _config(min_correspondences=512)
        base = _video_base_sets(truth, frames, config.base_offsets, 1200)
        for pair in propagate_video(base, config):
            assert len(pair.correspondences) > 512
            assert pair.interval >= 20


class TestRandomPerspective:
    def test_zero_perturbation_is_identity(self):
        cfg = AugmentConfig(enabled=True, max_corner_perturbation=0.0, seed=1)
        h = random_perspective((640, 480), cfg, np.random.default_rng(0))
        assert np.allclose(h.h, Homography.identity().h)

    def test_deterministic_under_seed(self):
        cfg = AugmentConfig(enabled=True, max_corner_perturbation=0.15, seed=1)
        h1 = random_perspective((640, 480), cfg, np.random.default_rng(42))
        h2 = random_perspective((640, 480), cfg, np.random.default_rng(42))
        assert np.array_equal(h1.h, h2.h)

    def test_corner_displacements_within_bound(self):
        cfg = AugmentConfig(enabled=True, max_corner_perturbation=0.12, seed=0)
        w, h_px = 320, 240
        bound = 0.12 * min(w, h_px)
        corners = np.array([[0.0, 0.0], [w, 0.0], [w, h_px], [0.0, h_px]])
        for seed in range(2000):
            warp = random_perspective((w, h_px), cfg, np.random.default_rng(seed))
            for c in corners:
                moved = apply_homography(warp, c)
                assert abs(moved[0] - c[0]) <= bound + 1e-6
                assert abs(moved[1] - c[1]) <= bound + 1e-6


def _training_pair(matches, a=0, b=160):
    cs = CorrespondenceSet(FrameId("v", a), FrameId("v", b), tuple(matches))
    return TrainingPair(cs, propagation_depth=3)


class TestApplyAugmentation:
    def test_identity_keeps_pair(self):
        rng = np.random.default_rng(1)
        matches = [
            Match(tuple(rng.uniform(10, 200, 2)), tuple(rng.uniform(10, 200, 2)), 1.0, "m")
            for _ in range(50)
        ]
        pair = _training_pair(matches)
        out = apply_augmentation(
            pair, Homography.identity(), Homography.identity(), (320, 240), (320, 240), 10
        )
        assert len(out.correspondences) == 50
        assert np.allclose(out.correspondences.points_a(), pair.correspondences.points_a(), atol=1e-9)

    def test_translation_shifts_a_endpoints_only(self):
        matches = [Match((50.0, 60.0), (70.0, 80.0), 1.0, "m")] * 1
        pair = _training_pair(matches)
        out = apply_augmentation(
            pair, Homography.translation(5, -3), Homography.identity(), (320, 240), (320, 240), 0
        )
        m = out.correspondences.matches[0]
        assert m.pa == pytest.approx((55.0, 57.0), abs=1e-9)
        assert m.pb == pytest.approx((70.0, 80.0), abs=1e-9)
        assert out.augment_a is not None

    def test_out_of_bounds_endpoints_dropped(self):
        matches = [Match((318.0, 10.0), (10.0, 10.0), 1.0, "m"), Match((5.0, 5.0), (6.0, 6.0), 1.0, "m")]
        pair = _training_pair(matches)
        out = apply_augmentation(
            pair, Homography.translation(5, 0), Homography.identity(), (320, 240), (320, 240), 0
        )
        assert len(out.correspondences) == 1

    def test_budget_underflow_keeps_pair_unaugmented(self):
        matches = [Match((300.0, 10.0), (10.0, 10.0), 1.0, "m") for _ in range(20)]
        pair = _training_pair(matches)
        out = apply_augmentation(
            pair, Homography.translation(100, 0), Homography.identity(), (320, 240), (320, 240), 10
        )
        assert out.augment_a is None
        assert "augment_budget_underflow" in out.flags
        assert len(out.correspondences) == 20

    def test_composed_transfer_oracle(self):
        # warped correspondences still satisfy h_b . H_ab . h_a^-1
        truth_h = H_PAIR
        rng = np.random.default_rng(2)
        pa = rng.uniform(50, 400, (200, 2))
        ph = np.column_stack([pa, np.ones(200)]) @ truth_h.T
        pb = ph[:, :2] / ph[:, 2:]
        matches = [Match(tuple(a), tuple(b), 1.0, "m") for a, b in zip(pa, pb)]
        pair = _training_pair(matches)
        cfg = AugmentConfig(enabled=True, max_corner_perturbation=0.1, seed=3)
        h_a = random_perspective((640, 480), cfg, np.random.default_rng(10))
        h_b = random_perspective((640, 480), cfg, np.random.default_rng(11))
        out = apply_augmentation(pair, h_a, h_b, (640, 480), (640, 480), 10)
        composed = h_b.h @ truth_h @ np.linalg.inv(h_a.h)
        qa = out.correspondences.points_a()
        qb = out.correspondences.points_b()
        ph = np.column_stack([qa, np.ones(len(qa))]) @ composed.T
        expected = ph[:, :2] / ph[:, 2:]
        assert np.abs(expected - qb).max() < 1e-6


class TestEmitDataset:
    def test_empty_dataset(self, tmp_path):
        config = _config()
        manifest = emit_dataset([], tmp_path, config, "vid", (320, 240))
        data = json.loads(manifest.read_text())
        assert data["pairs"] == [] and data["pair_count"] == 0

    def test_three_pairs_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        config = _config()
        pairs = []
        for i in range(3):
            matches = [
                Match(tuple(rng.uniform(0, 300, 2)), tuple(rng.uniform(0, 200, 2)), 0.5, "m")
                for _ in range(20)
            ]
            pairs.append(
                TrainingPair(
                    CorrespondenceSet(FrameId("vid", i * 20), FrameId("vid", i * 20 + 160), tuple(matches)),
                    propagation_depth=3,
                )
            )
        manifest = emit_dataset(pairs, tmp_path, config, "vid", (320, 240))
        data = json.loads(manifest.read_text())
        assert data["pair_count"] == 3
        for entry, pair in zip(data["pairs"], pairs):
            stored = read_interchange(tmp_path / entry["file"])
            # values survive at serialization precision
            assert len(stored) == len(pair.correspondences)
            assert np.allclose(
                stored.points_a(), pair.correspondences.points_a(), atol=5e-5
            )
            assert entry["provenance"]["sources"] == {"m": 20}

    def test_io_failure_leaves_partial_marker(self, tmp_path):
        config = _config()
        (tmp_path / "pairs").write_text("not a directory")
        pair = _training_pair([Match((1.0, 1.0), (2.0, 2.0), 1.0, "m")])
        with pytest.raises(OSError):
            emit_dataset([pair], tmp_path, config, "vid", (320, 240))
        marker = json.loads((tmp_path / "manifest.json").read_text())
        assert marker["partial"] is True

    def test_config_hash_tracks_semantic_fields_only(self):
        base = _config()
        assert base.config_hash() == _config().config_hash()
        assert base.config_hash() != _config(min_correspondences=2000).config_hash()
        assert base.config_hash() != _config(seed=99).config_hash()
        assert (
            base.config_hash()
            != _config(ransac=RansacConfig(threshold=3.0)).config_hash()
        )
        # execution knobs must not perturb results or their hash
        assert base.config_hash() == _config(parallelism=8).config_hash()


@pytest.fixture(scope="module")
def video(tmp_path_factory):
    root = tmp_path_factory.mktemp("video")
    return write_video_frames(root / "vid", 120, 160, 120)


class TestFullRuns:
    def _spec(self):
        return MatcherSpec(
            MatcherKind.SYNTHETIC,
            "oracle",
            {"n": 1200, "motion": {"dx": 0.3, "anchors": 3200, "seed": 5}},
        )

    def test_label_run_and_propagate_rerun(self, video, tmp_path):
        config = PipelineConfig(
            matchers=(self._spec(),),
            min_correspondences=256,
            augmentation=AugmentConfig(enabled=False),
            seed=1,
        )
        run = run_label_pipeline(video, config, output_dir=tmp_path / "out")
        assert run.manifest_path is not None and not run.partial
        assert len(run.training_pairs) > 0
        for pair in run.training_pairs:
            assert len(pair.correspondences) > 256
        rerun = rerun_propagation(tmp_path / "out" / "base", config, tmp_path / "out2")
        m1 = json.loads(run.manifest_path.read_text())
        m2 = json.loads(rerun.manifest_path.read_text())
        assert m1["pairs"] == m2["pairs"]

    def test_augmented_run_records_warps(self, video, tmp_path):
        config = PipelineConfig(
            matchers=(self._spec(),),
            min_correspondences=256,
            augmentation=AugmentConfig(enabled=True, max_corner_perturbation=0.05, seed=7),
            seed=1,
        )
        run = run_label_pipeline(video, config, output_dir=tmp_path / "out")
        data = json.loads(run.manifest_path.read_text())
        augmented = [p for p in data["pairs"] if p["augment_a"]]
        assert augmented, "expected at least one augmented pair"
        for entry in augmented:
            assert len(entry["augment_a"]) == 9 and len(entry["augment_b"]) == 9

    def test_requires_matchers(self, video, tmp_path):
        with pytest.raises(ConfigError):
            run_label_pipeline(
                video, PipelineConfig(matchers=()), output_dir=tmp_path / "x"
            )


class TestConfigValidation:
    def test_offsets_must_double_from_interval(self):
        with pytest.raises(ConfigError):
            PipelineConfig(frame_interval=20, base_offsets=(20, 50))
        with pytest.raises(ConfigError):
            PipelineConfig(frame_interval=20, base_offsets=(40, 80))

    def test_from_dict_round_trip(self):
        config = PipelineConfig.from_dict(
            {
                "frame_interval": 10,
                "base_offsets": [10, 20],
                "matchers": [{"kind": "builtin", "name": "b"}],
                "ransac": {"threshold": 1.5},
                "augmentation": {"enabled": False},
            }
        )
        assert config.frame_interval == 10
        assert config.matchers[0].kind is MatcherKind.BUILTIN
        assert config.ransac.threshold == 1.5
        assert not config.augmentation.enabled

    def test_bad_augment_fraction(self):
        with pytest.raises(ConfigError):
            AugmentConfig(max_corner_perturbation=0.5)
