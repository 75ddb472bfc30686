"""Zero-shot evaluation harness.

Builds evaluation pairs binned by image overlap ratio (computed from ground
truth poses and depth maps), scores matchers by the AUC of the relative pose
error within 5 degrees (essential matrix + RANSAC + cheirality), aggregates
mean rank across datasets, and scores homography estimation by the mean
corner reprojection error under pixel-threshold AUCs.

Failure pairs score the 180-degree worst case instead of being excluded, so
a method cannot gain by refusing hard pairs.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .correspondence import CorrespondenceSet
from .errors import (
    ConfigError,
    CorrespondenceParseError,
    EmptyErrors,
    IncompleteGrid,
    InsufficientMatches,
    MatcherError,
    NoModelFound,
    NoValidCandidate,
    NoValidDepth,
    PointAtInfinity,
    RankDeficient,
)
from .estimation import ModelKind, RansacConfig, ransac
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    Homography,
    Pose,
    apply_homography,
    cheirality_select,
    decompose_essential,
    pose_error,
    relative_pose,
    rotation_to_quaternion,
)
from .matchers import FrameSource, MatcherKind, MatcherSpec, run_matcher
from .seeding import derive_seed
from .synthetic import RigPairTruth, smooth_depth_map
from .geometry import rotation_about_axis

log = logging.getLogger(__name__)

OVERLAP_MIN = 0.1
OVERLAP_MAX = 0.5
N_BINS = 5
BIN_WIDTH = (OVERLAP_MAX - OVERLAP_MIN) / N_BINS

DEPTH_MAGIC = b"ZEBD"
_DEPTH_HEADER = struct.Struct("<4sII4x")  # magic, width, height, 4 reserved bytes


# --- depth file format ----------------------------------------------------------


def write_depth(path: Path | str, depth: DepthMap) -> None:
    """Raw little-endian float32 grid behind a 16-byte header."""
    header = _DEPTH_HEADER.pack(DEPTH_MAGIC, depth.width, depth.height)
    data = depth.values.astype("<f4").tobytes()
    Path(path).write_bytes(header + data)


def read_depth(path: Path | str) -> DepthMap:
    raw = Path(path).read_bytes()
    if len(raw) < _DEPTH_HEADER.size:
        raise ValueError("truncated depth file")
    magic, width, height = _DEPTH_HEADER.unpack_from(raw)
    if magic != DEPTH_MAGIC:
        raise ValueError(f"bad depth magic {magic!r}")
    expected = _DEPTH_HEADER.size + 4 * width * height
    if len(raw) != expected:
        raise ValueError(f"depth payload {len(raw)} != expected {expected}")
    values = np.frombuffer(raw, dtype="<f4", offset=_DEPTH_HEADER.size)
    return DepthMap(values.reshape(height, width).astype(float))


# --- evaluation pairs -------------------------------------------------------------


@dataclass(frozen=True)
class EvalFrame:
    frame_id: str
    intrinsics: CameraIntrinsics
    pose: Pose
    image_path: Path | None = None
    depth_path: Path | None = None
    depth: DepthMap | None = None

    def load_depth(self) -> DepthMap | None:
        if self.depth is not None:
            return self.depth
        if self.depth_path is None:
            return None
        return read_depth(self.depth_path)


@dataclass(frozen=True)
class EvalPair:
    dataset: str
    pair_id: str
    frame_a: EvalFrame
    frame_b: EvalFrame
    overlap: float | None = None

    @property
    def bin_index(self) -> int | None:
        if self.overlap is None:
            return None
        return overlap_bin(self.overlap)

    def relative_pose(self) -> Pose:
        return relative_pose(self.frame_a.pose, self.frame_b.pose)


def overlap_bin(ratio: float) -> int | None:
    """5 equal-width bins over [0.1, 0.5]; the last bin is closed above."""
    if not OVERLAP_MIN <= ratio <= OVERLAP_MAX:
        return None
    # epsilon keeps exact decimal edges (0.18, 0.26, ...) in their upper bin
    k = int((ratio - OVERLAP_MIN) / BIN_WIDTH + 1e-9)
    return min(k, N_BINS - 1)


def _directional_overlap(
    k_a: CameraIntrinsics,
    pose_a: Pose,
    depth_a: DepthMap,
    k_b: CameraIntrinsics,
    pose_b: Pose,
    depth_b: DepthMap,
    depth_tolerance: float,
) -> float:
    valid = depth_a.valid_mask()
    total = int(valid.sum())
    if total == 0:
        raise NoValidDepth("frame has no valid depth pixels")
    ys, xs = np.nonzero(valid)
    d = depth_a.values[ys, xs]
    rays = np.column_stack([k_a.normalize(np.column_stack([xs, ys])), np.ones(total)])
    cam_a = rays * d[:, None]
    world = pose_a.inverse().transform(cam_a)
    cam_b = pose_b.transform(world)
    z = cam_b[:, 2]
    ok = z > 1e-9
    px = np.full((total, 2), -1.0)
    px[ok] = k_b.denormalize(cam_b[ok, :2] / z[ok, None])
    ok &= (
        (px[:, 0] >= 0)
        & (px[:, 0] <= k_b.width - 1)
        & (px[:, 1] >= 0)
        & (px[:, 1] <= k_b.height - 1)
    )
    if not ok.any():
        return 0.0
    lookup, lookup_ok = depth_b.bilinear(px[ok])
    consistent = lookup_ok & (
        np.abs(z[ok] - lookup) / np.where(lookup_ok, lookup, 1.0) < depth_tolerance
    )
    return float(consistent.sum()) / total


def overlap_ratio(
    frame_a: tuple[CameraIntrinsics, Pose, DepthMap],
    frame_b: tuple[CameraIntrinsics, Pose, DepthMap],
    depth_tolerance: float = 0.05,
) -> float:
    """Symmetric image overlap: min of the two directional visibility ratios.

    A pixel of A counts as visible in B when its depth-unprojected point
    lands inside B with bilinear depth agreement within the relative
    tolerance.
    """
    r_ab = _directional_overlap(*frame_a, *frame_b, depth_tolerance)
    r_ba = _directional_overlap(*frame_b, *frame_a, depth_tolerance)
    return min(r_ab, r_ba)


def sample_eval_pairs(
    pool: Sequence[EvalPair], per_bin: int = 760, seed: int = 0
) -> list[EvalPair]:
    """Uniformly sample per_bin pairs from each of the 5 overlap bins.

    Pairs outside [0.1, 0.5] are discarded; a short bin contributes all its
    pairs with a logged shortage warning. Deterministic under the seed.
    """
    bins: list[list[int]] = [[] for _ in range(N_BINS)]
    for i, pair in enumerate(pool):
        if pair.overlap is None:
            continue
        b = overlap_bin(pair.overlap)
        if b is not None:
            bins[b].append(i)
    rng = np.random.default_rng(derive_seed(seed, "eval-pair-sampling"))
    chosen: list[int] = []
    for b, members in enumerate(bins):
        if len(members) <= per_bin:
            if len(members) < per_bin:
                log.warning(
                    "bin %d short: %d of %d requested pairs", b, len(members), per_bin
                )
            chosen.extend(members)
        else:
            picks = rng.choice(len(members), size=per_bin, replace=False)
            chosen.extend(members[i] for i in sorted(picks))
    return [pool[i] for i in chosen]


# --- pose scoring ---------------------------------------------------------------


@dataclass(frozen=True)
class PairScore:
    error_deg: float
    failure: str | None = None


def evaluate_pair(
    corrs: CorrespondenceSet, pair: EvalPair, ransac_cfg: RansacConfig
) -> PairScore:
    """Relative pose error of one pair; failures score 180 degrees."""
    gt = pair.relative_pose()
    if float(np.linalg.norm(gt.translation)) < 1e-12:
        # pure-rotation ground truth: direction undefined, worst-case score
        return PairScore(180.0, "degenerate_translation")
    k_a = pair.frame_a.intrinsics
    k_b = pair.frame_b.intrinsics
    if len(corrs) < ModelKind.ESSENTIAL.minimal_sample:
        return PairScore(180.0, "insufficient_matches")
    pa = corrs.points_a()
    pb = corrs.points_b()
    try:
        model = ransac(ModelKind.ESSENTIAL, pa, pb, ransac_cfg, k_a, k_b)
        candidates = decompose_essential(model.matrix)
        inl = model.inlier_mask
        est = cheirality_select(candidates, k_a.normalize(pa[inl]), k_b.normalize(pb[inl]))
    except (NoModelFound, InsufficientMatches, RankDeficient, NoValidCandidate) as exc:
        return PairScore(180.0, type(exc).__name__)
    return PairScore(pose_error(est, gt))


def auc(errors: Sequence[float], threshold: float) -> float:
    """Exact area under the cumulative recall curve up to the threshold.

    Equals the mean over errors of clip(1 - e/threshold, 0, 1): each error e
    contributes the rectangle between e and the threshold.
    """
    arr = np.asarray(errors, dtype=float)
    if arr.size == 0:
        raise EmptyErrors("auc of an empty error list")
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ValueError("errors must be non-negative numbers")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return float(np.mean(np.clip(1.0 - arr / threshold, 0.0, 1.0)))


def mean_rank(auc_grid: np.ndarray) -> np.ndarray:
    """Average per-dataset rank of each method (rank 1 = best, ties averaged).

    ``auc_grid`` is methods x datasets and must be fully populated.
    """
    grid = np.asarray(auc_grid, dtype=float)
    if grid.ndim != 2 or grid.size == 0:
        raise IncompleteGrid("grid must be 2-D and non-empty")
    if not np.all(np.isfinite(grid)):
        raise IncompleteGrid("grid contains missing values")
    n_methods, _ = grid.shape
    greater = (grid[None, :, :] > grid[:, None, :]).sum(axis=1)
    equal = (grid[None, :, :] == grid[:, None, :]).sum(axis=1)
    ranks = greater + (equal + 1) / 2.0
    assert ranks.shape == grid.shape
    return ranks.mean(axis=1)


# --- homography scoring ------------------------------------------------------------


def homography_corner_error(
    h_est: Homography, h_gt: Homography, image_size: tuple[int, int]
) -> float:
    """Mean displacement of the 4 image corners between the two warps (px)."""
    w, h = image_size
    corners = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)]
    try:
        dists = [
            float(np.hypot(*(np.subtract(apply_homography(h_est, c), apply_homography(h_gt, c)))))
            for c in corners
        ]
    except PointAtInfinity:
        return float("inf")
    return float(np.mean(dists))


def homography_corner_auc(
    pairs: Sequence[tuple[Homography, Homography]],
    image_size: tuple[int, int],
    thresholds: Sequence[float] = (3.0, 5.0, 10.0),
) -> list[float]:
    """Per-threshold AUC of the corner error over estimated/true pairs."""
    errors = [homography_corner_error(est, gt, image_size) for est, gt in pairs]
    return [auc(errors, t) for t in thresholds]


# --- score table -------------------------------------------------------------------


@dataclass
class ScoreTable:
    methods: list[str]
    datasets: list[str]
    auc5: np.ndarray
    auc10: np.ndarray
    auc20: np.ndarray
    n_pairs: np.ndarray
    n_failures: np.ndarray

    def mean_auc(self) -> np.ndarray:
        return self.auc5.mean(axis=1)

    def mean_ranks(self) -> np.ndarray:
        return mean_rank(self.auc5)

    def low_coverage(self, minimum: float = 0.9) -> np.ndarray:
        """Cells whose non-failure coverage is below the minimum fraction."""
        with np.errstate(invalid="ignore"):
            covered = 1.0 - self.n_failures / np.maximum(self.n_pairs, 1)
        return covered < minimum

    def to_report_rows(self) -> list[dict]:
        rows = []
        for i, method in enumerate(self.methods):
            for j, dataset in enumerate(self.datasets):
                rows.append(
                    {
                        "method": method,
                        "dataset": dataset,
                        "auc5": float(self.auc5[i, j]),
                        "auc10": float(self.auc10[i, j]),
                        "auc20": float(self.auc20[i, j]),
                        "n_pairs": int(self.n_pairs[i, j]),
                        "n_failures": int(self.n_failures[i, j]),
                    }
                )
        return rows

    def render_text(self) -> str:
        ranks = self.mean_ranks()
        mean5 = self.mean_auc()
        flags = self.low_coverage()
        name_w = max(8, max(len(m) for m in self.methods))
        header = (
            f"{'Method':<{name_w}}  {'MeanRank':>8}  {'AUC@5':>7}  "
            + "  ".join(f"{d:>8}" for d in self.datasets)
        )
        lines = [header, "-" * len(header)]
        for i, method in enumerate(self.methods):
            cells = []
            for j in range(len(self.datasets)):
                mark = "*" if flags[i, j] else ""
                cells.append(f"{100 * self.auc5[i, j]:>7.1f}{mark or ' '}")
            lines.append(
                f"{method:<{name_w}}  {ranks[i]:>8.1f}  {100 * mean5[i]:>6.1f}%  "
                + "  ".join(cells)
            )
        lines.append("(* = coverage below 90% of pairs; AUC values in percent)")
        return "\n".join(lines)


@dataclass(frozen=True)
class BenchmarkConfig:
    ransac: RansacConfig = RansacConfig()
    seed: int = 0
    match_points: int = 500
    thresholds: tuple[float, float, float] = (5.0, 10.0, 20.0)


def _matcher_frames(pair: EvalPair) -> tuple[FrameSource, FrameSource]:
    fa = FrameSource(
        video=pair.pair_id,
        index=0,
        path=pair.frame_a.image_path,
        intrinsics=pair.frame_a.intrinsics,
    )
    fb = FrameSource(
        video=pair.pair_id,
        index=1,
        path=pair.frame_b.image_path,
        intrinsics=pair.frame_b.intrinsics,
    )
    return fa, fb


def _match_eval_pair(
    method: MatcherSpec, pair: EvalPair, cfg: BenchmarkConfig
) -> CorrespondenceSet:
    fa, fb = _matcher_frames(pair)
    truth = None
    if method.kind is MatcherKind.SYNTHETIC:
        depth_a = pair.frame_a.load_depth()
        if depth_a is None:
            raise MatcherError(f"pair {pair.pair_id} lacks depth for synthetic matching")
        truth = RigPairTruth(
            pair.frame_a.intrinsics,
            pair.frame_a.pose,
            depth_a,
            pair.frame_b.intrinsics,
            pair.frame_b.pose,
            depth_b=pair.frame_b.load_depth(),
            seed=derive_seed(cfg.seed, method.name, pair.dataset, pair.pair_id),
        )
        method = replace(
            method,
            params={
                "n": cfg.match_points,
                **dict(method.params),
                "seed": derive_seed(cfg.seed, method.name, pair.dataset, pair.pair_id, "corruption"),
            },
        )
    corrs, _ = run_matcher(method, fa, fb, truth=truth)
    return corrs


def run_benchmark(
    datasets: Mapping[str, Sequence[EvalPair]],
    methods: Sequence[MatcherSpec],
    cfg: BenchmarkConfig = BenchmarkConfig(),
) -> ScoreTable:
    """Score every method on every dataset; deterministic under cfg.seed."""
    if not methods:
        raise ConfigError("at least one method is required")
    if not datasets:
        raise ConfigError("at least one dataset is required")
    names = [m.name for m in methods]
    ds_names = list(datasets.keys())
    shape = (len(methods), len(ds_names))
    auc5 = np.zeros(shape)
    auc10 = np.zeros(shape)
    auc20 = np.zeros(shape)
    n_pairs = np.zeros(shape, dtype=int)
    n_failures = np.zeros(shape, dtype=int)
    for i, method in enumerate(methods):
        for j, ds in enumerate(ds_names):
            errors = []
            failures = 0
            for pair in datasets[ds]:
                pair_cfg = replace(
                    cfg.ransac,
                    seed=derive_seed(cfg.seed, method.name, ds, pair.pair_id, "ransac"),
                )
                try:
                    corrs = _match_eval_pair(method, pair, cfg)
                except (MatcherError, CorrespondenceParseError) as exc:
                    log.warning("%s failed on %s/%s: %s", method.name, ds, pair.pair_id, exc)
                    errors.append(180.0)
                    failures += 1
                    continue
                score = evaluate_pair(corrs, pair, pair_cfg)
                errors.append(score.error_deg)
                if score.failure is not None:
                    failures += 1
            t5, t10, t20 = cfg.thresholds
            auc5[i, j] = auc(errors, t5)
            auc10[i, j] = auc(errors, t10)
            auc20[i, j] = auc(errors, t20)
            n_pairs[i, j] = len(errors)
            n_failures[i, j] = failures
    return ScoreTable(names, ds_names, auc5, auc10, auc20, n_pairs, n_failures)


# --- dataset on-disk layout -----------------------------------------------------------
#
# One directory per dataset: pairs.json plus depth files. pairs.json schema:
# {"dataset": id,
#  "frames": {fid: {"intrinsics": {fx,fy,cx,cy,width,height},
#                    "pose": {"q": [w,x,y,z], "t": [x,y,z]},
#                    "image": relpath|null, "depth": relpath|null}},
#  "pairs": [{"id": str, "frame_a": fid, "frame_b": fid, "overlap": float|null}]}


def load_dataset(directory: Path | str) -> tuple[str, list[EvalPair]]:
    """Load a normalized dataset directory; computes missing overlaps if
    both depths are present."""
    directory = Path(directory)
    spec = json.loads((directory / "pairs.json").read_text(encoding="utf-8"))
    dataset_id = spec["dataset"]
    frames: dict[str, EvalFrame] = {}
    for fid, raw in spec["frames"].items():
        k = raw["intrinsics"]
        intr = CameraIntrinsics(
            k["fx"], k["fy"], k["cx"], k["cy"], int(k["width"]), int(k["height"])
        )
        pose = Pose.from_quaternion(raw["pose"]["q"], np.asarray(raw["pose"]["t"], dtype=float))
        frames[fid] = EvalFrame(
            frame_id=fid,
            intrinsics=intr,
            pose=pose,
            image_path=directory / raw["image"] if raw.get("image") else None,
            depth_path=directory / raw["depth"] if raw.get("depth") else None,
        )
    pairs = []
    for entry in spec["pairs"]:
        pair = EvalPair(
            dataset=dataset_id,
            pair_id=str(entry["id"]),
            frame_a=frames[entry["frame_a"]],
            frame_b=frames[entry["frame_b"]],
            overlap=entry.get("overlap"),
        )
        if pair.overlap is None:
            da = pair.frame_a.load_depth()
            db = pair.frame_b.load_depth()
            if da is not None and db is not None:
                pair = replace(
                    pair,
                    overlap=overlap_ratio(
                        (pair.frame_a.intrinsics, pair.frame_a.pose, da),
                        (pair.frame_b.intrinsics, pair.frame_b.pose, db),
                    ),
                )
        pairs.append(pair)
    return dataset_id, pairs


def make_rig_dataset(
    directory: Path | str,
    dataset_id: str,
    n_pairs: int,
    seed: int = 0,
    width: int = 160,
    height: int = 120,
    focal: float = 150.0,
) -> Path:
    """Write a synthetic rigid-scene dataset in the normalized layout.

    Each pair gets a smooth non-planar depth surface for frame A, a mild
    random relative pose, and a declared overlap value spread over the five
    evaluation bins.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames = {}
    pair_entries = []
    for i in range(n_pairs):
        rng = np.random.default_rng(derive_seed(seed, dataset_id, i))
        depth_a = smooth_depth_map(derive_seed(seed, dataset_id, i, "da"), width, height)
        mean_depth = float(depth_a.values.mean())
        axis = rng.normal(size=3)
        angle = rng.uniform(2.0, 10.0)
        r = rotation_about_axis(axis, angle)
        offset = rng.uniform(-0.05, 0.05, size=2) * mean_depth
        target = np.array([offset[0], offset[1], mean_depth])
        center = np.array([0.0, 0.0, mean_depth])
        t = target - r @ center
        baseline = rng.uniform(0.1, 0.25) * mean_depth
        t = t + np.array([baseline, 0.0, 0.0])
        pose_b = Pose(r, t)
        depth_name = f"depth_{i:04d}_a.zebd"
        write_depth(directory / depth_name, depth_a)
        fa_id = f"pair{i:04d}_a"
        fb_id = f"pair{i:04d}_b"
        intr = {
            "fx": focal,
            "fy": focal,
            "cx": width / 2.0,
            "cy": height / 2.0,
            "width": width,
            "height": height,
        }
        frames[fa_id] = {
            "intrinsics": intr,
            "pose": {"q": [1.0, 0.0, 0.0, 0.0], "t": [0.0, 0.0, 0.0]},
            "image": None,
            "depth": depth_name,
        }
        frames[fb_id] = {
            "intrinsics": intr,
            "pose": {
                "q": [float(v) for v in rotation_to_quaternion(pose_b.rotation)],
                "t": [float(v) for v in pose_b.translation],
            },
            "image": None,
            "depth": None,
        }
        overlap = OVERLAP_MIN + (i + 0.5) / n_pairs * (OVERLAP_MAX - OVERLAP_MIN)
        pair_entries.append(
            {"id": f"pair{i:04d}", "frame_a": fa_id, "frame_b": fb_id, "overlap": overlap}
        )
    spec = {"dataset": dataset_id, "frames": frames, "pairs": pair_entries}
    (directory / "pairs.json").write_text(
        json.dumps(spec, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return directory
