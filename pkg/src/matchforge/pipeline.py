"""End-to-end self-labeling over a video.

Stages: sample frames at a fixed interval, schedule base pairs at the
configured offsets, label each base pair with every configured matcher and
robust-filter the outputs, fuse them, propagate correspondences outward by
interval doubling (merging with base labels where those exist), keep chains
alive while they hold more than the budget of matches, optionally warp each
surviving pair with a random perspective, and emit the most distant
surviving pair per starting frame plus a manifest.

Determinism: every stochastic step is seeded from the identity of its work
item (global seed, video, frame indices), never from execution order, so a
run is byte-identical at any parallelism.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .correspondence import (
    CorrespondenceSet,
    FrameId,
    Match,
    fuse,
    meets_budget,
    merge,
    propagate,
    write_interchange,
    read_interchange,
)
from .errors import AugmentationRejected, ConfigError
from .estimation import (
    FilterResult,
    ModelKind,
    RansacConfig,
    estimate_homography_dlt,
    filter_matches,
)
from .geometry import Homography, apply_homography
from .matchers import FrameSource, MatcherKind, MatcherSpec, run_matcher
from .errors import MatcherError
from .pgm import read_pgm_size
from .seeding import derive_seed
from .synthetic import PlanarMotion, PlanarVideoTruth

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
BASE_DIR_NAME = "base"
PAIRS_DIR_NAME = "pairs"


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    max_corner_perturbation: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.max_corner_perturbation < 0.5:
            raise ConfigError("max_corner_perturbation must be in [0, 0.5)")


@dataclass(frozen=True)
class PipelineConfig:
    frame_interval: int = 20
    base_offsets: tuple[int, ...] = (20, 40, 80)
    min_correspondences: int = 1024
    propagation_pixel_threshold: float = 1.0
    dedup_radius: float = 1.0
    filter_stage: str = "per_method"
    matchers: tuple[MatcherSpec, ...] = ()
    ransac: RansacConfig = field(default_factory=RansacConfig)
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    parallelism: int = 1
    output_dir: Path | None = None

    def __post_init__(self):
        if self.frame_interval <= 0:
            raise ConfigError("frame_interval must be positive")
        offsets = tuple(int(v) for v in self.base_offsets)
        object.__setattr__(self, "base_offsets", offsets)
        if not offsets:
            raise ConfigError("base_offsets must not be empty")
        if offsets[0] != self.frame_interval:
            raise ConfigError("first base offset must equal the frame interval")
        for prev, cur in zip(offsets, offsets[1:]):
            if cur != 2 * prev:
                raise ConfigError("base offsets must double: propagation halves chains")
        if self.min_correspondences < 1:
            raise ConfigError("min_correspondences must be at least 1")
        if self.propagation_pixel_threshold < 0:
            raise ConfigError("propagation threshold must be non-negative")
        if self.filter_stage not in ("per_method", "post_fusion"):
            raise ConfigError("filter_stage must be per_method or post_fusion")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        object.__setattr__(self, "matchers", tuple(self.matchers))

    def method_order(self) -> list[str]:
        return [m.name for m in self.matchers]

    def canonical_dict(self) -> dict:
        """Semantic fields only; execution knobs (parallelism, output_dir)
        do not change results and are excluded so manifests stay identical
        across parallelism degrees."""
        return {
            "frame_interval": self.frame_interval,
            "base_offsets": list(self.base_offsets),
            "min_correspondences": self.min_correspondences,
            "propagation_pixel_threshold": self.propagation_pixel_threshold,
            "dedup_radius": self.dedup_radius,
            "filter_stage": self.filter_stage,
            "matchers": [
                {"kind": m.kind.value, "name": m.name, "params": dict(sorted(m.params.items()))}
                for m in self.matchers
            ],
            "ransac": {
                "threshold": self.ransac.threshold,
                "confidence": self.ransac.confidence,
                "max_iterations": self.ransac.max_iterations,
                "seed": self.ransac.seed,
            },
            "augmentation": {
                "enabled": self.augmentation.enabled,
                "max_corner_perturbation": self.augmentation.max_corner_perturbation,
                "seed": self.augmentation.seed,
            },
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.canonical_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @staticmethod
    def from_dict(data: Mapping) -> "PipelineConfig":
        kwargs = dict(data)
        if "matchers" in kwargs:
            kwargs["matchers"] = tuple(
                m
                if isinstance(m, MatcherSpec)
                else MatcherSpec(
                    MatcherKind(m["kind"]), m.get("name", m["kind"]), m.get("params", {})
                )
                for m in kwargs["matchers"]
            )
        if "ransac" in kwargs and not isinstance(kwargs["ransac"], RansacConfig):
            kwargs["ransac"] = RansacConfig(**kwargs["ransac"])
        if "augmentation" in kwargs and not isinstance(kwargs["augmentation"], AugmentConfig):
            kwargs["augmentation"] = AugmentConfig(**kwargs["augmentation"])
        if "base_offsets" in kwargs:
            kwargs["base_offsets"] = tuple(kwargs["base_offsets"])
        if "output_dir" in kwargs and kwargs["output_dir"] is not None:
            kwargs["output_dir"] = Path(kwargs["output_dir"])
        try:
            return PipelineConfig(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class TrainingPair:
    """One emitted training item: the most distant surviving pair of a chain."""

    correspondences: CorrespondenceSet
    propagation_depth: int
    augment_a: Homography | None = None
    augment_b: Homography | None = None
    flags: tuple[str, ...] = ()

    @property
    def frame_a(self) -> FrameId:
        return self.correspondences.frame_a

    @property
    def frame_b(self) -> FrameId:
        return self.correspondences.frame_b

    @property
    def interval(self) -> int:
        return self.correspondences.interval

    def provenance(self) -> dict:
        return {
            "sources": dict(sorted(self.correspondences.source_counts().items())),
            "depth": self.propagation_depth,
        }


# --- scheduling ----------------------------------------------------------------


def sample_frames(video_length: int, interval: int) -> list[int]:
    """Every interval-th frame index, starting at 0, below video_length."""
    if video_length < 1:
        raise ValueError("video_length must be at least 1")
    if interval < 1:
        raise ValueError("interval must be at least 1")
    return list(range(0, video_length, interval))


def schedule_base_pairs(
    frames: Sequence[int], base_offsets: Sequence[int]
) -> list[tuple[int, int]]:
    """(X, X+d) for each sampled X and offset d with X+d also sampled."""
    sampled = set(frames)
    return [
        (x, x + d) for x in frames for d in base_offsets if (x + d) in sampled
    ]


# --- base labels ------------------------------------------------------------------


@dataclass(frozen=True)
class PairLabels:
    """Fused, robust-filtered base labels for one frame pair."""

    matches: CorrespondenceSet
    flags: tuple[str, ...]
    per_method: dict[str, int]
    dropped_bounds: int = 0


def _pair_ransac(config: PipelineConfig, video: str, a: int, b: int, tag: str) -> RansacConfig:
    return replace(
        config.ransac,
        seed=derive_seed(config.seed, config.ransac.seed, video, a, b, tag),
    )


def generate_base_labels(
    frame_a: FrameSource,
    frame_b: FrameSource,
    config: PipelineConfig,
    truths: Mapping[str, object] | None = None,
) -> PairLabels:
    """Run every matcher on the pair, robust-filter, and fuse.

    With filter_stage per_method each matcher's raw output is filtered
    independently (a noisy method cannot poison the consensus of another);
    post_fusion filters once after fusing raw outputs. Matcher failures are
    recorded and skipped, never fatal.
    """
    video = frame_a.video
    a, b = frame_a.index, frame_b.index
    flags: list[str] = []
    per_method: dict[str, int] = {}
    dropped = 0
    filtered_sets: list[CorrespondenceSet] = []
    raw_sets: list[CorrespondenceSet] = []
    for spec in config.matchers:
        truth = (truths or {}).get(spec.name)
        try:
            raw, oob = run_matcher(spec, frame_a, frame_b, truth=truth)
        except MatcherError as exc:
            log.warning("matcher %s failed on (%s, %s): %s", spec.name, a, b, exc)
            flags.append(f"matcher_failed:{spec.name}")
            continue
        dropped += oob
        raw_sets.append(raw)
        if config.filter_stage == "per_method":
            result = filter_matches(
                raw,
                ModelKind.FUNDAMENTAL,
                _pair_ransac(config, video, a, b, f"filter:{spec.name}"),
            )
            flags.extend(f"{flag}:{spec.name}" for flag in result.flags)
            filtered_sets.append(result.matches)
            per_method[spec.name] = len(result.matches)
        else:
            per_method[spec.name] = len(raw)
    empty = CorrespondenceSet(frame_a.frame_id(), frame_b.frame_id(), ())
    if config.filter_stage == "per_method":
        candidates = [s for s in filtered_sets if len(s)]
        fused = (
            fuse(candidates, config.dedup_radius, config.method_order())
            if candidates
            else empty
        )
    else:
        candidates = [s for s in raw_sets if len(s)]
        if candidates:
            fused_raw = fuse(candidates, config.dedup_radius, config.method_order())
            result = filter_matches(
                fused_raw,
                ModelKind.FUNDAMENTAL,
                _pair_ransac(config, video, a, b, "filter:fused"),
            )
            flags.extend(result.flags)
            fused = result.matches
        else:
            fused = empty
    if len(fused) < ModelKind.FUNDAMENTAL.minimal_sample:
        flags.append("dropped:too_few_fused")
        fused = empty
    return PairLabels(fused, tuple(flags), per_method, dropped)


# --- propagation over the video -----------------------------------------------------


def propagate_video(
    base_sets: Mapping[tuple[int, int], CorrespondenceSet],
    config: PipelineConfig,
) -> list[TrainingPair]:
    """Interval-doubling propagation with budget-gated chains.

    The first round composes each base offset level from the previous one and
    merges the propagated matches into the base labels at that offset. Beyond
    the largest base offset there is nothing to merge, so rounds keep doubling
    while the composed result still holds more than min_correspondences
    matches. Each starting frame then emits its most distant surviving pair.
    """
    offsets = config.base_offsets
    thr = config.propagation_pixel_threshold
    order = config.method_order()
    levels: dict[int, dict[int, CorrespondenceSet]] = {}
    first = offsets[0]
    levels[first] = {
        a: s for (a, b), s in base_sets.items() if b - a == first and len(s)
    }
    # round 1: build each configured offset level, merging with its base labels
    for prev, cur in zip(offsets, offsets[1:]):
        current: dict[int, CorrespondenceSet] = {}
        prev_level = levels[prev]
        for a, left in sorted(prev_level.items()):
            right = prev_level.get(a + prev)
            composed = None
            if right is not None:
                composed = propagate(left, right, thr)
            base = base_sets.get((a, a + cur))
            if base is not None and len(base) == 0:
                base = None
            if composed is not None and len(composed) == 0:
                composed = None
            if base is not None and composed is not None:
                current[a] = merge(base, composed, config.dedup_radius, order)
            elif base is not None:
                current[a] = base
            elif composed is not None:
                current[a] = composed
        # base-only anchors whose shorter chains were missing entirely
        for (a, b), s in base_sets.items():
            if b - a == cur and a not in current and len(s):
                current[a] = s
        levels[cur] = current
    # subsequent rounds: pure doubling, no base labels to merge
    interval = offsets[-1]
    while True:
        prev_level = levels[interval]
        nxt: dict[int, CorrespondenceSet] = {}
        for a, left in sorted(prev_level.items()):
            if not meets_budget(left, config.min_correspondences):
                continue
            right = prev_level.get(a + interval)
            if right is None or len(right) == 0:
                continue
            composed = propagate(left, right, thr)
            if len(composed):
                nxt[a] = composed
        if not nxt:
            break
        interval *= 2
        levels[interval] = nxt
    # emit the most distant surviving pair per starting frame
    emitted: list[TrainingPair] = []
    anchors = sorted({a for level in levels.values() for a in level})
    all_intervals = sorted(levels)
    for a in anchors:
        best = None
        for interval in all_intervals:
            s = levels[interval].get(a)
            if s is not None and meets_budget(s, config.min_correspondences):
                best = s
        if best is not None:
            depth = max(0, int(round(np.log2(best.interval / first))))
            emitted.append(TrainingPair(best, depth))
    return emitted


# --- augmentation ----------------------------------------------------------------


def random_perspective(
    image_size: tuple[int, int], config: AugmentConfig, rng: np.random.Generator
) -> Homography:
    """Random perspective warp from independently displaced image corners.

    Corners move by uniform offsets within the configured fraction of the
    short image side. Candidates are rejected (and resampled, up to 20 times)
    if a corner leaves a 2x-padded canvas or the affine part degenerates.
    """
    w, h = image_size
    m = config.max_corner_perturbation * min(w, h)
    if m == 0:
        return Homography.identity()
    corners = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    pad_x, pad_y = w / 2.0, h / 2.0
    for _ in range(20):
        displaced = corners + rng.uniform(-m, m, size=(4, 2))
        try:
            h_mat = estimate_homography_dlt(corners, displaced).h
        except Exception:
            continue
        if abs(h_mat[2, 2]) < 1e-12:
            continue
        affine = h_mat / h_mat[2, 2]
        if abs(np.linalg.det(affine[:2, :2])) < 0.1:
            continue
        mapped = np.array([apply_homography(h_mat, c) for c in corners])
        if (
            (mapped[:, 0] < -pad_x).any()
            or (mapped[:, 0] > w + pad_x).any()
            or (mapped[:, 1] < -pad_y).any()
            or (mapped[:, 1] > h + pad_y).any()
        ):
            continue
        return Homography(h_mat)
    raise AugmentationRejected("no acceptable perspective warp in 20 attempts")


def apply_augmentation(
    pair: TrainingPair,
    h_a: Homography,
    h_b: Homography,
    bounds_a: tuple[int, int],
    bounds_b: tuple[int, int],
    min_correspondences: int,
) -> TrainingPair:
    """Warp both endpoint sets; endpoints leaving their frame are dropped.

    If the surviving count no longer exceeds the budget, the pair is returned
    unaugmented with a flag instead.
    """
    wa, ha_px = bounds_a
    wb, hb_px = bounds_b
    mapped: list[Match] = []
    pa = pair.correspondences.points_a()
    pb = pair.correspondences.points_b()
    qa = h_a.apply(pa) if len(pa) else pa
    qb = h_b.apply(pb) if len(pb) else pb
    for m, (xa, ya), (xb, yb) in zip(pair.correspondences.matches, qa, qb):
        if 0 <= xa < wa and 0 <= ya < ha_px and 0 <= xb < wb and 0 <= yb < hb_px:
            mapped.append(Match((xa, ya), (xb, yb), m.confidence, m.source))
    if len(mapped) <= min_correspondences:
        return replace(pair, flags=pair.flags + ("augment_budget_underflow",))
    return replace(
        pair,
        correspondences=pair.correspondences.replace_matches(mapped),
        augment_a=h_a,
        augment_b=h_b,
    )


# --- dataset emission ---------------------------------------------------------------


def _pair_filename(video: str, a: int, b: int) -> str:
    return f"{video}_{a:08d}_{b:08d}.corrs"


def emit_dataset(
    pairs: Sequence[TrainingPair],
    output_dir: Path,
    config: PipelineConfig,
    video: str,
    frame_size: tuple[int, int],
) -> Path:
    """Write one interchange file per pair plus a JSON manifest.

    The manifest is canonical (sorted keys, sorted pairs, no timestamps) so
    identical runs produce byte-identical files. An IO failure mid-write
    leaves a manifest carrying a partial marker.
    """
    output_dir = Path(output_dir)
    pairs_dir = output_dir / PAIRS_DIR_NAME
    entries = []
    ordered = sorted(pairs, key=lambda p: (p.frame_a.index, p.frame_b.index))
    manifest_path = output_dir / MANIFEST_NAME
    try:
        pairs_dir.mkdir(parents=True, exist_ok=True)
        for pair in ordered:
            name = _pair_filename(video, pair.frame_a.index, pair.frame_b.index)
            write_interchange(pairs_dir / name, pair.correspondences)
            entries.append(
                {
                    "frame_a": pair.frame_a.index,
                    "frame_b": pair.frame_b.index,
                    "interval": pair.interval,
                    "count": len(pair.correspondences),
                    "file": f"{PAIRS_DIR_NAME}/{name}",
                    "augment_a": _h_row_major(pair.augment_a),
                    "augment_b": _h_row_major(pair.augment_b),
                    "provenance": pair.provenance(),
                    "flags": sorted(pair.flags),
                }
            )
    except OSError as exc:
        marker = {
            "format": "matchforge-dataset v1",
            "video": video,
            "partial": True,
            "error": str(exc),
        }
        manifest_path.write_text(json.dumps(marker, sort_keys=True, indent=2) + "\n")
        raise
    manifest = {
        "format": "matchforge-dataset v1",
        "video": video,
        "frame_size": list(frame_size),
        "config_hash": config.config_hash(),
        "pair_count": len(entries),
        "pairs": entries,
    }
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest_path


def _h_row_major(h: Homography | None) -> list[float] | None:
    if h is None:
        return None
    return [float(v) for v in h.h.ravel()]


# --- full runs -------------------------------------------------------------------


@dataclass
class PipelineRun:
    manifest_path: Path | None
    training_pairs: list[TrainingPair]
    pair_flags: dict[tuple[int, int], tuple[str, ...]]
    dropped_pairs: int
    video: str

    @property
    def partial(self) -> bool:
        return self.dropped_pairs > 0


def discover_frames(frames_dir: Path | str, video: str | None = None) -> list[FrameSource]:
    """Frames named %08d.pgm in one directory, as FrameSource records."""
    frames_dir = Path(frames_dir)
    video = video or frames_dir.name
    paths = sorted(frames_dir.glob("*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no .pgm frames under {frames_dir}")
    frames = []
    for p in paths:
        try:
            index = int(p.stem)
        except ValueError:
            continue
        frames.append(FrameSource(video=video, index=index, path=p))
    frames.sort(key=lambda f: f.index)
    return frames


def resolve_truths(
    config: PipelineConfig, frame_size: tuple[int, int], video_length: int
) -> dict[str, object]:
    """Build truth providers for synthetic matcher specs that describe one.

    A synthetic spec may carry a "motion" param {dx, dy, dtheta, anchors}
    describing a planar video; anything else must be supplied by the caller.
    """
    truths: dict[str, object] = {}
    for spec in config.matchers:
        if spec.kind is not MatcherKind.SYNTHETIC:
            continue
        motion = spec.params.get("motion")
        if isinstance(motion, Mapping):
            w, h = frame_size
            truth = PlanarVideoTruth.panning(
                w,
                h,
                video_length,
                float(motion.get("dx", 0.0)),
                int(motion.get("anchors", 4096)),
                seed=int(motion.get("seed", config.seed)),
            )
            if motion.get("dy") or motion.get("dtheta"):
                planar = PlanarMotion(
                    w,
                    h,
                    dx=float(motion.get("dx", 0.0)),
                    dy=float(motion.get("dy", 0.0)),
                    dtheta=float(motion.get("dtheta", 0.0)),
                )
                truth = PlanarVideoTruth(planar, truth.anchors)
            truths[spec.name] = truth
    return truths


def run_label_pipeline(
    frames_dir: Path | str,
    config: PipelineConfig,
    output_dir: Path | str | None = None,
    video: str | None = None,
    truths: Mapping[str, object] | None = None,
    cache_base: bool = True,
) -> PipelineRun:
    """Label a frame directory end to end and emit the training dataset."""
    if not config.matchers:
        raise ConfigError("at least one matcher must be configured")
    out = Path(output_dir) if output_dir is not None else config.output_dir
    if out is None:
        raise ConfigError("an output directory is required")
    frames = discover_frames(frames_dir, video)
    video_id = frames[0].video
    frame_size = frames[0].size()
    by_index = {f.index: f for f in frames}
    video_length = max(by_index) + 1
    sampled = [i for i in sample_frames(video_length, config.frame_interval) if i in by_index]
    pairs = schedule_base_pairs(sampled, config.base_offsets)
    all_truths = dict(resolve_truths(config, frame_size, video_length))
    if truths:
        all_truths.update(truths)

    def _label(pair: tuple[int, int]) -> tuple[tuple[int, int], PairLabels]:
        a, b = pair
        return pair, generate_base_labels(by_index[a], by_index[b], config, all_truths)

    results: dict[tuple[int, int], PairLabels] = {}
    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            for key, labels in pool.map(_label, pairs):
                results[key] = labels
    else:
        for pair in pairs:
            key, labels = _label(pair)
            results[key] = labels
    pair_flags = {k: v.flags for k, v in sorted(results.items())}
    dropped = sum(
        1 for v in results.values() if any(f.startswith("dropped") for f in v.flags)
    )
    base_sets = {k: v.matches for k, v in results.items() if len(v.matches)}
    if cache_base:
        _write_base_cache(out, video_id, frame_size, config, base_sets)
    training = propagate_video(base_sets, config)
    training = augment_pairs(training, config, frame_size)
    manifest = emit_dataset(training, out, config, video_id, frame_size)
    return PipelineRun(manifest, training, pair_flags, dropped, video_id)


def augment_pairs(
    training: Sequence[TrainingPair],
    config: PipelineConfig,
    frame_size: tuple[int, int],
) -> list[TrainingPair]:
    if not config.augmentation.enabled:
        return list(training)
    out = []
    for pair in training:
        key = (config.augmentation.seed, pair.frame_a.video, pair.frame_a.index, pair.frame_b.index)
        try:
            h_a = random_perspective(
                frame_size,
                config.augmentation,
                np.random.default_rng(derive_seed(*key, "augment_a")),
            )
            h_b = random_perspective(
                frame_size,
                config.augmentation,
                np.random.default_rng(derive_seed(*key, "augment_b")),
            )
        except AugmentationRejected:
            out.append(replace(pair, flags=pair.flags + ("augment_rejected",)))
            continue
        out.append(
            apply_augmentation(
                pair, h_a, h_b, frame_size, frame_size, config.min_correspondences
            )
        )
    return out


def _write_base_cache(
    out: Path,
    video: str,
    frame_size: tuple[int, int],
    config: PipelineConfig,
    base_sets: Mapping[tuple[int, int], CorrespondenceSet],
) -> None:
    base_dir = out / BASE_DIR_NAME
    base_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for (a, b), s in sorted(base_sets.items()):
        name = _pair_filename(video, a, b)
        write_interchange(base_dir / name, s)
        files.append({"frame_a": a, "frame_b": b, "count": len(s), "file": name})
    meta = {
        "format": "matchforge-base v1",
        "video": video,
        "frame_size": list(frame_size),
        "config_hash": config.config_hash(),
        "files": files,
    }
    (base_dir / MANIFEST_NAME).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_base_cache(base_dir: Path | str):
    """Read back a cached base-label directory written by run_label_pipeline."""
    base_dir = Path(base_dir)
    meta = json.loads((base_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
    sets = {}
    for entry in meta["files"]:
        s = read_interchange(base_dir / entry["file"])
        sets[(entry["frame_a"], entry["frame_b"])] = s
    return meta, sets


def rerun_propagation(
    base_dir: Path | str,
    config: PipelineConfig,
    output_dir: Path | str,
) -> PipelineRun:
    """Re-run propagation, augmentation, and emission from cached base labels."""
    meta, base_sets = load_base_cache(base_dir)
    frame_size = tuple(meta["frame_size"])
    training = propagate_video(base_sets, config)
    training = augment_pairs(training, config, frame_size)
    manifest = emit_dataset(training, Path(output_dir), config, meta["video"], frame_size)
    return PipelineRun(manifest, training, {}, 0, meta["video"])
