"""Pluggable matchers behind one interface.

Three kinds: a built-in classical corner+patch matcher for desk-scale runs,
a synthetic oracle matcher driven by ground-truth transfer (for tests and
benchmark construction), and a file-based subprocess protocol for external
learned matchers. The interface layer re-validates output bounds and drops
violations with a counted warning.

External matcher protocol: the command template must contain the
placeholders {image_a} {image_b} {out}; the process must write {out} in the
correspondence interchange format and exit 0. Frame tokens in the output
header are advisory; the core re-labels matches with its own frame ids and
normalizes source tags to the configured matcher name.
"""
from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from .correspondence import (
    CorrespondenceSet,
    CorrespondenceParseError,
    FrameId,
    Match,
    drop_out_of_bounds,
    read_interchange,
)
from .errors import EmptyImage, MatcherProcessError, MatcherTimeout
from .geometry import CameraIntrinsics
from .pgm import read_pgm, read_pgm_size
from .seeding import derive_seed

log = logging.getLogger(__name__)

EXTERNAL_PLACEHOLDERS = ("{image_a}", "{image_b}", "{out}")


class MatcherKind(str, Enum):
    BUILTIN = "builtin"
    SYNTHETIC = "synthetic"
    EXTERNAL = "external"


@dataclass(frozen=True)
class MatcherSpec:
    """Configuration of one matcher; ``name`` doubles as the source tag."""

    kind: MatcherKind
    name: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        if self.kind is MatcherKind.EXTERNAL:
            command = str(self.params.get("command", ""))
            missing = [p for p in EXTERNAL_PLACEHOLDERS if p not in command]
            if missing:
                raise ValueError(f"external command template lacks {missing}")
            if float(self.params.get("timeout", 60.0)) <= 0:
                raise ValueError("external matcher timeout must be positive")


@dataclass
class FrameSource:
    """A video frame available on disk or in memory."""

    video: str
    index: int
    path: Path | None = None
    image: np.ndarray | None = None
    intrinsics: CameraIntrinsics | None = None

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("frame index must be non-negative")
        if self.image is not None and self.intrinsics is not None:
            h, w = self.image.shape
            if (w, h) != (self.intrinsics.width, self.intrinsics.height):
                raise ValueError("image dimensions inconsistent with intrinsics")

    def frame_id(self) -> FrameId:
        return FrameId(self.video, self.index)

    def load_image(self) -> np.ndarray:
        if self.image is not None:
            return self.image
        if self.path is None:
            raise EmptyImage(f"frame {self.video}:{self.index} has no pixel data")
        self.image = read_pgm(self.path)
        return self.image

    def size(self) -> tuple[int, int]:
        """(width, height), from whichever source is cheapest."""
        if self.image is not None:
            h, w = self.image.shape
            return w, h
        if self.intrinsics is not None:
            return self.intrinsics.width, self.intrinsics.height
        if self.path is not None:
            return read_pgm_size(self.path)
        raise EmptyImage(f"frame {self.video}:{self.index} has unknown size")


# --- built-in classical matcher --------------------------------------------------


def _separable_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = len(kernel) // 2
    padded = np.pad(img, r, mode="reflect")
    tmp = np.zeros_like(padded)
    for i, kv in enumerate(kernel):
        tmp += kv * np.roll(padded, i - r, axis=0)
    out = np.zeros_like(padded)
    for i, kv in enumerate(kernel):
        out += kv * np.roll(tmp, i - r, axis=1)
    return out[r:-r, r:-r]


_GAUSS5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def harris_response(img: np.ndarray, k: float = 0.04) -> np.ndarray:
    f = np.asarray(img, dtype=float) / 255.0
    iy, ix = np.gradient(f)
    ixx = _separable_filter(ix * ix, _GAUSS5)
    iyy = _separable_filter(iy * iy, _GAUSS5)
    ixy = _separable_filter(ix * iy, _GAUSS5)
    trace = ixx + iyy
    return ixx * iyy - ixy * ixy - k * trace * trace


def _local_maxima(resp: np.ndarray, radius: int) -> np.ndarray:
    """Mask of pixels equal to the max of their (2r+1)^2 neighborhood."""
    padded = np.pad(resp, radius, mode="constant", constant_values=-np.inf)
    best = np.full_like(resp, -np.inf)
    for dy in range(-radius, radius + 1):
        rows = padded[radius + dy : radius + dy + resp.shape[0]]
        for dx in range(-radius, radius + 1):
            best = np.maximum(best, rows[:, radius + dx : radius + dx + resp.shape[1]])
    return resp >= best


def detect_corners(
    img: np.ndarray,
    k: float = 0.04,
    nms_radius: int = 4,
    max_keypoints: int = 512,
    rel_threshold: float = 0.01,
    border: int = 6,
) -> np.ndarray:
    """Harris-style corners as (n, 2) x,y coordinates, strongest first."""
    resp = harris_response(img, k)
    peak = float(resp.max(initial=0.0))
    if peak <= 0:
        return np.empty((0, 2))
    candidates = (resp >= rel_threshold * peak) & _local_maxima(resp, nms_radius)
    candidates[:border, :] = False
    candidates[-border:, :] = False
    candidates[:, :border] = False
    candidates[:, -border:] = False
    ys, xs = np.nonzero(candidates)
    if len(ys) == 0:
        return np.empty((0, 2))
    order = np.lexsort((xs, ys, -resp[ys, xs]))[:max_keypoints]
    return np.column_stack([xs[order], ys[order]]).astype(float)


def patch_descriptors(
    img: np.ndarray, keypoints: np.ndarray, patch_size: int = 11
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean unit-norm intensity patches; drops flat keypoints."""
    f = np.asarray(img, dtype=float)
    r = patch_size // 2
    kept = []
    descs = []
    for x, y in keypoints:
        xi, yi = int(round(x)), int(round(y))
        patch = f[yi - r : yi + r + 1, xi - r : xi + r + 1]
        if patch.shape != (patch_size, patch_size):
            continue
        vec = patch.ravel() - patch.mean()
        norm = np.linalg.norm(vec)
        if norm < 1e-9:
            continue
        kept.append((float(x), float(y)))
        descs.append(vec / norm)
    if not kept:
        return np.empty((0, 2)), np.empty((0, patch_size * patch_size))
    return np.array(kept), np.array(descs)


def mutual_ratio_matches(
    desc_a: np.ndarray, desc_b: np.ndarray, ratio: float = 0.9
) -> list[tuple[int, int, float]]:
    """Mutual nearest neighbors passing the ratio test; yields (ia, ib, ratio)."""
    if len(desc_a) == 0 or len(desc_b) == 0:
        return []
    # unit-norm descriptors: squared distance = 2 - 2 * dot
    d2 = np.maximum(2.0 - 2.0 * (desc_a @ desc_b.T), 0.0)
    d = np.sqrt(d2)
    nn_ab = np.argmin(d, axis=1)
    nn_ba = np.argmin(d, axis=0)
    out = []
    for ia, ib in enumerate(nn_ab):
        if nn_ba[ib] != ia:
            continue
        d1 = d[ia, ib]
        if d.shape[1] < 2:
            r = 0.0
        else:
            two = np.partition(d[ia], 1)[:2]
            d2nd = float(two[1])
            r = 1.0 if d2nd < 1e-12 else float(d1) / d2nd
        if r < ratio:
            out.append((int(ia), int(ib), r))
    return out


def match_builtin(
    frame_a: FrameSource, frame_b: FrameSource, params: Mapping[str, object] | None = None
) -> CorrespondenceSet:
    """Harris corners + normalized patch descriptors + mutual NN with ratio test.

    Deterministic (no RNG). Confidence is 1 - ratio. Returns an empty set
    when either frame yields no keypoints.
    """
    p = dict(params or {})
    source = str(p.get("source", "builtin"))
    img_a = frame_a.load_image()
    img_b = frame_b.load_image()
    if img_a.size == 0 or img_b.size == 0:
        raise EmptyImage("cannot match empty images")
    patch = int(p.get("patch_size", 11))
    detector = dict(
        k=float(p.get("k", 0.04)),
        nms_radius=int(p.get("nms_radius", 4)),
        max_keypoints=int(p.get("max_keypoints", 512)),
        rel_threshold=float(p.get("rel_threshold", 0.01)),
        border=patch // 2 + 1,
    )
    kp_a, desc_a = patch_descriptors(img_a, detect_corners(img_a, **detector), patch)
    kp_b, desc_b = patch_descriptors(img_b, detect_corners(img_b, **detector), patch)
    matches = []
    if len(kp_a) == 0 or len(kp_b) == 0:
        log.warning(
            "no keypoints on %s or %s", frame_a.frame_id(), frame_b.frame_id()
        )
    else:
        for ia, ib, r in mutual_ratio_matches(desc_a, desc_b, float(p.get("ratio", 0.9))):
            matches.append(
                Match(tuple(kp_a[ia]), tuple(kp_b[ib]), 1.0 - r, source)
            )
    return CorrespondenceSet(frame_a.frame_id(), frame_b.frame_id(), tuple(matches))


# --- synthetic oracle matcher ------------------------------------------------------


class SyntheticTruth(Protocol):
    """Ground-truth transfer backing the synthetic matcher."""

    def correspondences(
        self, frame_a: FrameSource, frame_b: FrameSource, n: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """Exact (pa, pb) arrays of points visible in both frames."""
        ...

    def constraint_residual(
        self, frame_a: FrameSource, frame_b: FrameSource, pa: np.ndarray, pb: np.ndarray
    ) -> np.ndarray:
        """Pixel deviation of candidate matches from the true geometry."""
        ...


def match_synthetic(
    frame_a: FrameSource,
    frame_b: FrameSource,
    truth: SyntheticTruth,
    params: Mapping[str, object] | None = None,
) -> CorrespondenceSet:
    """Oracle matcher: exact ground-truth transfer plus controlled corruption.

    params: n (500), noise_sigma px (0), outlier_rate (0), seed (0),
    source ("synthetic"), min_outlier_offset px (10). The outlier count is
    exactly round(count * outlier_rate); planted outliers are resampled until
    they violate the true geometry by more than min_outlier_offset. Noise is
    added to the B endpoints and clipped to the frame. Deterministic for a
    fixed seed: corruption seeds derive from (seed, video, frame indices).
    """
    p = dict(params or {})
    n = int(p.get("n", 500))
    sigma = float(p.get("noise_sigma", 0.0))
    outlier_rate = float(p.get("outlier_rate", 0.0))
    seed = int(p.get("seed", 0))
    source = str(p.get("source", "synthetic"))
    min_offset = float(p.get("min_outlier_offset", 10.0))
    pa, pb = truth.correspondences(frame_a, frame_b, n)
    pa = np.asarray(pa, dtype=float).reshape(-1, 2)
    pb = np.asarray(pb, dtype=float).reshape(-1, 2)
    count = len(pa)
    wb, hb = frame_b.size()
    pair_key = (frame_a.video, frame_a.index, frame_b.index)
    if sigma > 0 and count:
        rng = np.random.default_rng(derive_seed(seed, "noise", *pair_key))
        noise = rng.normal(0.0, sigma, size=pb.shape)
        # uncorrupted matches must stay within 3 sigma of the true transfer
        norms = np.linalg.norm(noise, axis=1)
        over = norms > 3.0 * sigma
        noise[over] *= (3.0 * sigma / norms[over])[:, None]
        pb = pb + noise
        pb[:, 0] = np.clip(pb[:, 0], 0.0, np.nextafter(float(wb), 0.0))
        pb[:, 1] = np.clip(pb[:, 1], 0.0, np.nextafter(float(hb), 0.0))
    n_outliers = int(round(count * outlier_rate))
    if n_outliers:
        rng = np.random.default_rng(derive_seed(seed, "outliers", *pair_key))
        chosen = rng.choice(count, size=n_outliers, replace=False)
        for idx in chosen:
            for _ in range(100):
                cand = rng.uniform((0.0, 0.0), (wb, hb))
                residual = truth.constraint_residual(
                    frame_a, frame_b, pa[idx : idx + 1], cand.reshape(1, 2)
                )
                if residual[0] > min_offset:
                    pb[idx] = cand
                    break
            else:
                pb[idx] = cand  # best effort; astronomically unlikely
    matches = tuple(
        Match((pa[i, 0], pa[i, 1]), (pb[i, 0], pb[i, 1]), 1.0, source)
        for i in range(count)
    )
    return CorrespondenceSet(frame_a.frame_id(), frame_b.frame_id(), matches)


# --- external subprocess matcher ----------------------------------------------------


def match_external(
    frame_a: FrameSource, frame_b: FrameSource, spec: MatcherSpec
) -> CorrespondenceSet:
    """Run an external matcher process on two on-disk images.

    Raises MatcherProcessError / MatcherTimeout / CorrespondenceParseError;
    batch drivers record these per pair and keep going.
    """
    if frame_a.path is None or frame_b.path is None:
        raise MatcherProcessError("external matchers need on-disk images")
    template = str(spec.params["command"])
    timeout = float(spec.params.get("timeout", 60.0))
    workdir = spec.params.get("workdir")
    with tempfile.TemporaryDirectory(prefix="matchforge-ext-") as tmp:
        out_path = Path(tmp) / "matches.corrs"
        argv = [
            token.replace("{image_a}", str(frame_a.path))
            .replace("{image_b}", str(frame_b.path))
            .replace("{out}", str(out_path))
            for token in shlex.split(template)
        ]
        try:
            proc = subprocess.run(
                argv,
                cwd=str(workdir) if workdir else None,
                timeout=timeout,
                capture_output=True,
                text=True,
            )
        except subprocess.TimeoutExpired as exc:
            raise MatcherTimeout(f"{spec.name} exceeded {timeout}s") from exc
        except OSError as exc:
            raise MatcherProcessError(f"{spec.name} failed to start: {exc}") from exc
        if proc.returncode != 0:
            tail = (proc.stderr or "").strip().splitlines()[-3:]
            raise MatcherProcessError(
                f"{spec.name} exited {proc.returncode}: {' | '.join(tail)}"
            )
        if not out_path.exists():
            raise MatcherProcessError(f"{spec.name} wrote no output file")
        parsed = read_interchange(out_path)
    relabeled = tuple(
        Match(m.pa, m.pb, m.confidence, spec.name) for m in parsed.matches
    )
    return CorrespondenceSet(frame_a.frame_id(), frame_b.frame_id(), relabeled)


def run_matcher(
    spec: MatcherSpec,
    frame_a: FrameSource,
    frame_b: FrameSource,
    truth: SyntheticTruth | None = None,
) -> tuple[CorrespondenceSet, int]:
    """Dispatch on the configured matcher kind and re-validate output bounds.

    Returns the cleaned set and the number of dropped out-of-bounds matches.
    """
    if spec.kind is MatcherKind.BUILTIN:
        params = dict(spec.params)
        params.setdefault("source", spec.name)
        raw = match_builtin(frame_a, frame_b, params)
    elif spec.kind is MatcherKind.SYNTHETIC:
        if truth is None:
            raise ValueError(f"synthetic matcher {spec.name} needs a truth provider")
        params = dict(spec.params)
        params.setdefault("source", spec.name)
        raw = match_synthetic(frame_a, frame_b, truth, params)
    else:
        raw = match_external(frame_a, frame_b, spec)
    cleaned, dropped = drop_out_of_bounds(raw, frame_a.size(), frame_b.size())
    if dropped:
        log.warning(
            "%s emitted %d out-of-bounds matches on (%s, %s)",
            spec.name,
            dropped,
            frame_a.frame_id(),
            frame_b.frame_id(),
        )
    return cleaned, dropped
