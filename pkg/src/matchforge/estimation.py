"""Robust two-view model fitting.

Normalized DLT for homographies, the normalized eight-point solve for
fundamental/essential matrices, and a seeded deterministic RANSAC loop with
least-squares refit. The RANSAC threshold is always expressed in pixels:
symmetric transfer error for homographies, the square root of the Sampson
distance for epipolar models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .correspondence import CorrespondenceSet
from .errors import (
    DegenerateConfiguration,
    InsufficientMatches,
    NoModelFound,
    RankDeficient,
)
from .geometry import (
    CameraIntrinsics,
    EssentialMatrix,
    Homography,
    canonicalize_matrix,
    sampson_distances,
)


class ModelKind(str, Enum):
    HOMOGRAPHY = "homography"
    FUNDAMENTAL = "fundamental"
    ESSENTIAL = "essential"

    @property
    def minimal_sample(self) -> int:
        return 4 if self is ModelKind.HOMOGRAPHY else 8


@dataclass(frozen=True)
class RansacConfig:
    """Knobs of the consensus loop; the seed makes runs bit-reproducible."""

    threshold: float = 2.0
    confidence: float = 0.99999
    max_iterations: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class TwoViewModel:
    """A fitted model with its inlier mask over the input matches."""

    kind: ModelKind
    matrix: np.ndarray
    inlier_mask: np.ndarray
    iterations_run: int
    threshold: float

    @property
    def inlier_count(self) -> int:
        return int(np.sum(self.inlier_mask))


@dataclass(frozen=True)
class FilterResult:
    """Outcome of robust-filtering a raw correspondence set."""

    matches: CorrespondenceSet
    model: TwoViewModel | None
    flags: tuple[str, ...] = ()


def _as_points(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return p.reshape(-1, 2)


def hartley_normalize(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Translate the centroid to the origin and scale mean distance to √2."""
    p = _as_points(points)
    centroid = p.mean(axis=0)
    shifted = p - centroid
    mean_dist = float(np.mean(np.linalg.norm(shifted, axis=1)))
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    t = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return shifted * s, t


def _padded_spectrum(singular_values: np.ndarray) -> np.ndarray:
    """Descending singular values of the design matrix, zero-padded to 9."""
    sig = np.zeros(9)
    sig[: len(singular_values)] = singular_values
    return sig


def _solve_nullvector(design: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # full right singular basis is only missing when the design has < 9 rows
    _, s, vt = np.linalg.svd(design, full_matrices=design.shape[0] < 9)
    return vt[-1], _padded_spectrum(s)


def estimate_homography_dlt(points_a, points_b) -> Homography:
    """Normalized DLT from >= 4 correspondences.

    Raises DegenerateConfiguration when the solution is not unique (e.g.
    collinear minimal samples).
    """
    pa = _as_points(points_a)
    pb = _as_points(points_b)
    if len(pa) != len(pb):
        raise ValueError("point arrays must have equal length")
    if len(pa) < 4:
        raise InsufficientMatches(f"homography needs >= 4 matches, got {len(pa)}")
    pan, ta = hartley_normalize(pa)
    pbn, tb = hartley_normalize(pb)
    n = len(pan)
    x, y = pan[:, 0], pan[:, 1]
    u, v = pbn[:, 0], pbn[:, 1]
    zeros = np.zeros(n)
    ones = np.ones(n)
    design = np.empty((2 * n, 9))
    design[0::2] = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u])
    design[1::2] = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v])
    vec, sig = _solve_nullvector(design)
    # non-unique solution: second-smallest singular value of the 9-spectrum ~ 0
    if sig[7] < 1e-8 * sig[0]:
        raise DegenerateConfiguration("design matrix is rank deficient")
    h = np.linalg.inv(tb) @ vec.reshape(3, 3) @ ta
    return Homography(h)


def _distinct_rows(points: np.ndarray) -> int:
    return int(np.unique(points, axis=0).shape[0])


def _eight_point_design(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    xa, ya = pa[:, 0], pa[:, 1]
    xb, yb = pb[:, 0], pb[:, 1]
    ones = np.ones(len(pa))
    return np.column_stack(
        [xb * xa, xb * ya, xb, yb * xa, yb * ya, yb, xa, ya, ones]
    )


def _eight_point_solve(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Hartley-normalized linear epipolar solve; returns the raw 3x3.

    Planar or pure-rotation data leaves a solution family; any member
    satisfies the constraints exactly, so only deeper deficiencies (rank < 6)
    or repeated points are rejected.
    """
    if len(pa) != len(pb):
        raise ValueError("point arrays must have equal length")
    if len(pa) < 8:
        raise InsufficientMatches(f"epipolar solve needs >= 8 matches, got {len(pa)}")
    if _distinct_rows(pa) < 8 or _distinct_rows(pb) < 8:
        raise DegenerateConfiguration("fewer than 8 distinct points")
    pan, ta = hartley_normalize(pa)
    pbn, tb = hartley_normalize(pb)
    vec, sig = _solve_nullvector(_eight_point_design(pan, pbn))
    if sig[5] < 1e-8 * sig[0]:
        raise DegenerateConfiguration("design matrix rank below 6")
    f = tb.T @ vec.reshape(3, 3) @ ta
    return f


def estimate_fundamental_8pt(points_a, points_b) -> np.ndarray:
    """Normalized eight-point fundamental matrix, rank-2, ||F||_F = 1.

    Convention: pb^T F pa == 0 for an exact correspondence.
    """
    f = _eight_point_solve(_as_points(points_a), _as_points(points_b))
    u, s, vt = np.linalg.svd(f)
    f2 = u @ np.diag([s[0], s[1], 0.0]) @ vt
    return canonicalize_matrix(f2, 1.0)


def estimate_essential(
    points_a, points_b, k_a: CameraIntrinsics, k_b: CameraIntrinsics
) -> EssentialMatrix:
    """Eight-point essential matrix from pixel coordinates.

    Pixels are mapped through K^-1, solved linearly, then projected onto the
    essential manifold (equal leading singular values, zero third).
    """
    na = k_a.normalize(_as_points(points_a))
    nb = k_b.normalize(_as_points(points_b))
    e = _eight_point_solve(na, nb)
    u, s, vt = np.linalg.svd(e)
    if s[0] < 1e-15:
        raise DegenerateConfiguration("zero essential solution")
    e = u @ np.diag([1.0, 1.0, 0.0]) @ vt
    return EssentialMatrix(canonicalize_matrix(e, math.sqrt(2.0)))


def essential_pixel_f(e, k_a: CameraIntrinsics, k_b: CameraIntrinsics) -> np.ndarray:
    """Pixel-space fundamental matrix of an essential matrix."""
    m = e.e if isinstance(e, EssentialMatrix) else np.asarray(e, dtype=float)
    return np.linalg.inv(k_b.matrix()).T @ m @ np.linalg.inv(k_a.matrix())


def symmetric_transfer_error(h, points_a, points_b) -> np.ndarray:
    """sqrt(|H pa - pb|^2 + |H^-1 pb - pa|^2) per correspondence, in pixels."""
    m = h.h if isinstance(h, Homography) else np.asarray(h, dtype=float)
    pa = _as_points(points_a)
    pb = _as_points(points_b)
    m_inv = np.linalg.inv(m)

    def _transfer_sq(mat, src, dst):
        q = np.column_stack([src, np.ones(len(src))]) @ mat.T
        w = q[:, 2]
        out = np.full(len(src), np.inf)
        ok = np.abs(w) > 1e-12
        diff = q[ok, :2] / w[ok, None] - dst[ok]
        out[ok] = np.einsum("ij,ij->i", diff, diff)
        return out

    return np.sqrt(_transfer_sq(m, pa, pb) + _transfer_sq(m_inv, pb, pa))


def model_residuals(
    kind: ModelKind,
    matrix: np.ndarray,
    points_a: np.ndarray,
    points_b: np.ndarray,
    k_a: CameraIntrinsics | None = None,
    k_b: CameraIntrinsics | None = None,
) -> np.ndarray:
    """Pixel-scale residuals used for inlier decisions."""
    if kind is ModelKind.HOMOGRAPHY:
        return symmetric_transfer_error(matrix, points_a, points_b)
    if kind is ModelKind.ESSENTIAL:
        matrix = essential_pixel_f(matrix, k_a, k_b)
    return np.sqrt(sampson_distances(matrix, points_a, points_b))


def _fit(kind: ModelKind, pa, pb, k_a, k_b) -> np.ndarray:
    if kind is ModelKind.HOMOGRAPHY:
        return estimate_homography_dlt(pa, pb).h
    if kind is ModelKind.FUNDAMENTAL:
        return estimate_fundamental_8pt(pa, pb)
    return estimate_essential(pa, pb, k_a, k_b).e


def ransac(
    kind: ModelKind,
    points_a,
    points_b,
    config: RansacConfig,
    k_a: CameraIntrinsics | None = None,
    k_b: CameraIntrinsics | None = None,
) -> TwoViewModel:
    """Seeded deterministic consensus loop.

    Uniform minimal samples without replacement; the best model maximizes
    the inlier count with ties broken by lower total inlier residual, then
    by earlier iteration. Terminates adaptively at the usual
    log(1-confidence)/log(1-w^s) bound capped by max_iterations, then refits
    on the best inlier set by least squares and recomputes the mask. For a
    fixed seed and inputs the result is bit-identical across runs and thread
    counts.
    """
    pa = _as_points(points_a)
    pb = _as_points(points_b)
    n = len(pa)
    sample_size = kind.minimal_sample
    if n < sample_size:
        raise InsufficientMatches(f"{kind.value} needs >= {sample_size} matches, got {n}")
    if kind is ModelKind.ESSENTIAL and (k_a is None or k_b is None):
        raise ValueError("essential estimation requires intrinsics")
    rng = np.random.default_rng(config.seed)
    best_matrix: np.ndarray | None = None
    best_mask: np.ndarray | None = None
    best_count = 0
    best_total = math.inf
    needed = float(config.max_iterations)
    it = 0
    while it < config.max_iterations and it < needed:
        sample = rng.choice(n, size=sample_size, replace=False)
        it += 1
        try:
            matrix = _fit(kind, pa[sample], pb[sample], k_a, k_b)
        except (DegenerateConfiguration, RankDeficient):
            continue
        residuals = model_residuals(kind, matrix, pa, pb, k_a, k_b)
        mask = residuals < config.threshold
        count = int(mask.sum())
        if count < sample_size:
            continue
        total = float(residuals[mask].sum())
        if count > best_count or (count == best_count and total < best_total):
            best_matrix, best_mask = matrix, mask
            best_count, best_total = count, total
            ratio = count / n
            w_s = ratio**sample_size
            if w_s >= 1.0:
                needed = 0.0
            elif w_s > 0.0:
                needed = math.log(1.0 - config.confidence) / math.log(1.0 - w_s)
    if best_matrix is None:
        raise NoModelFound(f"no {kind.value} sample reached minimal inlier support")
    final_matrix, final_mask = best_matrix, best_mask
    try:
        refit = _fit(kind, pa[best_mask], pb[best_mask], k_a, k_b)
        refit_mask = model_residuals(kind, refit, pa, pb, k_a, k_b) < config.threshold
        if int(refit_mask.sum()) >= sample_size:
            final_matrix, final_mask = refit, refit_mask
    except (DegenerateConfiguration, RankDeficient, InsufficientMatches):
        pass
    return TwoViewModel(kind, final_matrix, final_mask, it, config.threshold)


def planarity_score(points_a, points_b, threshold: float = 3.0) -> float:
    """Fraction of matches explained by a single homography fit.

    Scores near 1 signal planar or pure-rotation geometry, where epipolar
    models are ambiguous.
    """
    pa = _as_points(points_a)
    pb = _as_points(points_b)
    if len(pa) < 4:
        return 0.0
    try:
        h = estimate_homography_dlt(pa, pb)
    except (DegenerateConfiguration, InsufficientMatches):
        return 0.0
    return float(np.mean(symmetric_transfer_error(h, pa, pb) < threshold))


PLANAR_FLAG = "planar_degenerate"


def filter_matches(
    raw: CorrespondenceSet,
    kind: ModelKind,
    config: RansacConfig,
    k_a: CameraIntrinsics | None = None,
    k_b: CameraIntrinsics | None = None,
    planar_flag_threshold: float = 0.95,
) -> FilterResult:
    """Keep only matches consistent with a robustly fitted model.

    Degenerate inputs never raise: they yield an empty set plus a flag so a
    batch over many pairs keeps going.
    """
    if len(raw) < kind.minimal_sample:
        return FilterResult(raw.replace_matches(()), None, ("insufficient_matches",))
    pa = raw.points_a()
    pb = raw.points_b()
    try:
        model = ransac(kind, pa, pb, config, k_a, k_b)
    except NoModelFound:
        return FilterResult(raw.replace_matches(()), None, ("no_model",))
    kept = tuple(m for m, keep in zip(raw.matches, model.inlier_mask) if keep)
    flags: tuple[str, ...] = ()
    if kind is not ModelKind.HOMOGRAPHY and len(kept) >= 4:
        inl = model.inlier_mask
        if planarity_score(pa[inl], pb[inl]) > planar_flag_threshold:
            flags = (PLANAR_FLAG,)
    return FilterResult(raw.replace_matches(kept), model, flags)
