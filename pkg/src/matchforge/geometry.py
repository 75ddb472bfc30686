"""Pinhole cameras, rigid poses, and two-view epipolar algebra.

Conventions: poses are world-to-camera (x_cam = R @ x_world + t), angles are
reported in degrees, matrices are float64 numpy arrays. All functions are
pure and all value types are immutable after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTranslation,
    InvalidDepth,
    NoValidCandidate,
    PointAtInfinity,
    RankDeficient,
)

_W_EPS = 1e-12
_ORTHO_TOL = 1e-9

_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _frozen_array(values, shape=None) -> np.ndarray:
    out = np.array(values, dtype=float)
    if shape is not None:
        out = out.reshape(shape)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole calibration in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def normalize(self, pixels: np.ndarray) -> np.ndarray:
        """Map (n, 2) pixel coordinates onto the unit focal plane (K^-1)."""
        p = np.asarray(pixels, dtype=float).reshape(-1, 2)
        return (p - (self.cx, self.cy)) / (self.fx, self.fy)

    def denormalize(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return p * (self.fx, self.fy) + (self.cx, self.cy)


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _frozen_array(self.rotation, (3, 3))
        t = _frozen_array(self.translation, (3,))
        if np.max(np.abs(r.T @ r - np.eye(3))) >= _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(float(np.linalg.det(r)) - 1.0) >= _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_quaternion(q, t) -> "Pose":
        """Build from a (w, x, y, z) quaternion; normalizes first."""
        q = np.asarray(q, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if n < _W_EPS:
            raise ValueError("zero quaternion")
        w, x, y, z = q / n
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return Pose(r, t)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply to (n, 3) or (3,) world points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


def canonicalize_matrix(m: np.ndarray, norm: float = 1.0) -> np.ndarray:
    """Scale to a fixed Frobenius norm and fix the overall sign.

    Sign rule: bottom-right entry made non-negative when significantly
    nonzero, otherwise the first significant entry (row-major) made positive.
    """
    a = np.asarray(m, dtype=float).reshape(3, 3)
    f = float(np.linalg.norm(a))
    if f < 1e-15:
        raise ValueError("cannot canonicalize a zero matrix")
    a = a * (norm / f)
    if abs(a[2, 2]) > _W_EPS:
        sign = 1.0 if a[2, 2] > 0 else -1.0
    else:
        flat = a.ravel()
        significant = flat[np.abs(flat) > _W_EPS]
        sign = 1.0 if significant.size == 0 or significant[0] > 0 else -1.0
    return a * sign


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map, stored at canonical scale and sign."""

    h: np.ndarray

    def __post_init__(self):
        h = canonicalize_matrix(self.h)
        s = np.linalg.svd(h, compute_uv=False)
        if s[2] / s[0] < 1e-12:
            raise ValueError("homography must have full rank")
        object.__setattr__(self, "h", _frozen_array(h))

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))

    @staticmethod
    def translation(tx: float, ty: float) -> "Homography":
        return Homography([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def compose(self, other: "Homography") -> "Homography":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return Homography(self.h @ other.h)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transfer (n, 2) points; raises PointAtInfinity if any w vanishes."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        q = p @ self.h[:, :2].T + self.h[:, 2]
        w = q[:, 2]
        if np.any(np.abs(w) <= _W_EPS):
            raise PointAtInfinity("projective depth vanished")
        return q[:, :2] / w[:, None]


def apply_homography(h, point) -> tuple[float, float]:
    """Transfer a single (x, y) point through a homography or 3x3 matrix."""
    m = h.h if isinstance(h, Homography) else np.asarray(h, dtype=float)
    x, y = float(point[0]), float(point[1])
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) <= _W_EPS:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity")
    return (
        (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w,
        (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w,
    )


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == v x u."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def project_to_essential(m: np.ndarray) -> np.ndarray:
    """Project onto the essential manifold: singular values (1, 1, 0), norm √2."""
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float).reshape(3, 3))
    if s[0] < 1e-15 or s[1] / s[0] < 1e-6:
        raise RankDeficient("matrix is too rank deficient to be essential")
    e = u @ np.diag([1.0, 1.0, 0.0]) @ vt
    return canonicalize_matrix(e, math.sqrt(2.0))


@dataclass(frozen=True, eq=False)
class EssentialMatrix:
    """Calibrated two-view constraint with singular values (1, 1, 0)."""

    e: np.ndarray

    def __post_init__(self):
        e = canonicalize_matrix(self.e, math.sqrt(2.0))
        s = np.linalg.svd(e, compute_uv=False)
        if s[2] / s[0] > 1e-8 or abs(s[0] - s[1]) / s[0] > 1e-8:
            raise ValueError("matrix is off the essential manifold")
        object.__setattr__(self, "e", _frozen_array(e))

    @staticmethod
    def from_pose(pose: Pose) -> "EssentialMatrix":
        """E = [t]x R for the relative pose mapping A-frame to B-frame points."""
        return EssentialMatrix(project_to_essential(skew(pose.translation) @ pose.rotation))


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel scene depth; zero marks invalid pixels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("depths must be finite and non-negative")
        object.__setattr__(self, "values", _frozen_array(v, v.shape))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        return self.values > 0

    def bilinear(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated depths at (n, 2) sub-pixel positions.

        A lookup is valid only when the point lies in [0, w-1] x [0, h-1]
        and all four surrounding pixels hold valid depth.
        """
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        inside = (x >= 0) & (x <= self.width - 1) & (y >= 0) & (y <= self.height - 1)
        x0 = np.clip(np.floor(x).astype(int), 0, max(self.width - 2, 0))
        y0 = np.clip(np.floor(y).astype(int), 0, max(self.height - 2, 0))
        x1 = np.minimum(x0 + 1, self.width - 1)
        y1 = np.minimum(y0 + 1, self.height - 1)
        fx = x - x0
        fy = y - y0
        v00 = self.values[y0, x0]
        v01 = self.values[y0, x1]
        v10 = self.values[y1, x0]
        v11 = self.values[y1, x1]
        corners_valid = (v00 > 0) & (v01 > 0) & (v10 > 0) & (v11 > 0)
        depth = (
            v00 * (1 - fx) * (1 - fy)
            + v01 * fx * (1 - fy)
            + v10 * (1 - fx) * fy
            + v11 * fx * fy
        )
        return depth, inside & corners_valid


# --- relative pose and angular metrics ----------------------------------------


def relative_pose(pose_a: Pose, pose_b: Pose) -> Pose:
    """Transform mapping A-camera coordinates to B-camera coordinates."""
    r = pose_b.rotation @ pose_a.rotation.T
    t = pose_b.translation - r @ pose_a.translation
    return Pose(r, t)


def rotation_angular_error(r_est, r_gt) -> float:
    """Geodesic angle between two rotations, in degrees (range [0, 180]).

    Evaluated as atan2(sin, cos) of the relative rotation: identical to
    arccos(clamp((trace - 1)/2, -1, 1)) but well conditioned at 0 and 180,
    so equal inputs score exactly zero.
    """
    r1 = np.asarray(r_est, dtype=float)
    r2 = np.asarray(r_gt, dtype=float)
    rel = r2.T @ r1
    cos_t = (float(np.trace(rel)) - 1.0) / 2.0
    sin_t = 0.5 * math.sqrt(
        (rel[2, 1] - rel[1, 2]) ** 2
        + (rel[0, 2] - rel[2, 0]) ** 2
        + (rel[1, 0] - rel[0, 1]) ** 2
    )
    return math.degrees(math.atan2(sin_t, min(1.0, max(-1.0, cos_t))))


def translation_angular_error(t_est, t_gt) -> float:
    """Angle between translation directions, sign ambiguity collapsed.

    Range [0, 90] degrees; raises DegenerateTranslation when either vector
    is too short to define a direction.
    """
    a = np.asarray(t_est, dtype=float).reshape(3)
    b = np.asarray(t_gt, dtype=float).reshape(3)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < _W_EPS or nb < _W_EPS:
        raise DegenerateTranslation("translation norm below 1e-12")
    # atan2(|cross|, |dot|): same angle as arccos(clamp(|dot|/(na nb), 0, 1))
    # but exact at 0, so parallel vectors score exactly zero
    cross = float(np.linalg.norm(np.cross(a, b)))
    dot = abs(float(a @ b))
    return math.degrees(math.atan2(cross, dot))


def pose_error(est: Pose, gt: Pose) -> float:
    """max(rotation error, translation direction error) in degrees.

    Degenerate translations score the 180-degree worst case instead of
    raising, so harness runs never crash on pure-rotation pairs.
    """
    r_err = rotation_angular_error(est.rotation, gt.rotation)
    try:
        t_err = translation_angular_error(est.translation, gt.translation)
    except DegenerateTranslation:
        return 180.0
    return max(r_err, t_err)


# --- projection ----------------------------------------------------------------


def backproject(intrinsics: CameraIntrinsics, pixel, depth: float) -> np.ndarray:
    """Lift a pixel to camera coordinates at the given depth: depth * K^-1 (x, y, 1)."""
    if depth <= 0:
        raise InvalidDepth(f"depth must be positive, got {depth}")
    x = (float(pixel[0]) - intrinsics.cx) / intrinsics.fx
    y = (float(pixel[1]) - intrinsics.cy) / intrinsics.fy
    return np.array([x * depth, y * depth, depth])


def project(intrinsics: CameraIntrinsics, point) -> tuple[float, float]:
    """Pinhole projection of a camera-frame 3-vector to pixel coordinates."""
    p = np.asarray(point, dtype=float).reshape(3)
    if p[2] <= 0:
        raise InvalidDepth("point is behind the camera")
    return (
        intrinsics.fx * p[0] / p[2] + intrinsics.cx,
        intrinsics.fy * p[1] / p[2] + intrinsics.cy,
    )


# --- epipolar algebra ------------------------------------------------------------


def sampson_distance(f, pa, pb) -> float:
    """First-order squared epipolar deviation of one correspondence (px^2).

    Convention: pb^T F pa == 0 for an exact pair. A vanishing denominator
    marks the pair an outlier (returns +inf) rather than raising.
    """
    m = np.asarray(f, dtype=float)
    p = np.array([float(pa[0]), float(pa[1]), 1.0])
    q = np.array([float(pb[0]), float(pb[1]), 1.0])
    fp = m @ p
    ftq = m.T @ q
    num = float(q @ fp) ** 2
    den = fp[0] ** 2 + fp[1] ** 2 + ftq[0] ** 2 + ftq[1] ** 2
    if den < 1e-18:
        return math.inf
    return num / den


def sampson_distances(f, points_a: np.ndarray, points_b: np.ndarray) -> np.ndarray:
    """Vectorized sampson_distance over (n, 2) pixel arrays."""
    m = np.asarray(f, dtype=float)
    pa = np.asarray(points_a, dtype=float).reshape(-1, 2)
    pb = np.asarray(points_b, dtype=float).reshape(-1, 2)
    pah = np.column_stack([pa, np.ones(len(pa))])
    pbh = np.column_stack([pb, np.ones(len(pb))])
    fp = pah @ m.T  # rows: F @ p
    ftq = pbh @ m  # rows: F^T @ q
    num = np.einsum("ij,ij->i", pbh, fp) ** 2
    den = fp[:, 0] ** 2 + fp[:, 1] ** 2 + ftq[:, 0] ** 2 + ftq[:, 1] ** 2
    out = np.full(len(pa), np.inf)
    ok = den >= 1e-18
    out[ok] = num[ok] / den[ok]
    return out


def decompose_essential(e) -> list[Pose]:
    """The four (R, t) candidates of an essential matrix, ||t|| = 1.

    Rotations are det-corrected via the SVD; candidates are ordered
    (R1, t), (R1, -t), (R2, t), (R2, -t).
    """
    m = e.e if isinstance(e, EssentialMatrix) else np.asarray(e, dtype=float)
    u, s, vt = np.linalg.svd(m)
    if s[0] < 1e-15 or s[1] / s[0] < 1e-6:
        raise RankDeficient("essential matrix is rank deficient")
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    r1 = u @ _W @ vt
    r2 = u @ _W.T @ vt
    t = u[:, 2].copy()
    return [Pose(r1, t), Pose(r1, -t), Pose(r2, t), Pose(r2, -t)]


def midpoint_depths(pose: Pose, norm_a: np.ndarray, norm_b: np.ndarray):
    """Midpoint-triangulated depths of normalized matches in both views.

    Returns (depth_a, depth_b, valid); invalid entries correspond to
    near-parallel rays.
    """
    na = np.asarray(norm_a, dtype=float).reshape(-1, 2)
    nb = np.asarray(norm_b, dtype=float).reshape(-1, 2)
    da = np.column_stack([na, np.ones(len(na))])
    # B-frame rays expressed in the A frame: R^T d_b
    db = np.column_stack([nb, np.ones(len(nb))]) @ pose.rotation
    c = pose.camera_center()
    a11 = np.einsum("ij,ij->i", da, da)
    a12 = np.einsum("ij,ij->i", da, db)
    a22 = np.einsum("ij,ij->i", db, db)
    b1 = da @ c
    b2 = db @ c
    det = a11 * a22 - a12 * a12
    valid = np.abs(det) > 1e-12 * np.maximum(a11 * a22, 1e-30)
    safe = np.where(valid, det, 1.0)
    s = (a22 * b1 - a12 * b2) / safe
    u = (a12 * b1 - a11 * b2) / safe
    mid = 0.5 * (s[:, None] * da + c + u[:, None] * db)
    depth_a = mid[:, 2]
    depth_b = mid @ pose.rotation[2] + pose.translation[2]
    return depth_a, depth_b, valid


def cheirality_select(candidates, norm_a: np.ndarray, norm_b: np.ndarray) -> Pose:
    """Pick the candidate with the most points in front of both cameras.

    Ties break toward the earlier candidate; if no candidate triangulates
    any point with positive depth in both views, raises NoValidCandidate.
    """
    na = np.asarray(norm_a, dtype=float).reshape(-1, 2)
    if len(na) == 0:
        raise NoValidCandidate("cheirality needs at least one match")
    best_pose = None
    best_count = 0
    for pose in candidates:
        za, zb, valid = midpoint_depths(pose, na, norm_b)
        count = int(np.sum(valid & (za > 0) & (zb > 0)))
        if count > best_count:
            best_pose = pose
            best_count = count
    if best_pose is None:
        raise NoValidCandidate("all candidates place every point behind a camera")
    return best_pose


def rotation_to_quaternion(r) -> np.ndarray:
    """(w, x, y, z) unit quaternion of a rotation matrix, w >= 0."""
    m = np.asarray(r, dtype=float).reshape(3, 3)
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q


def rotation_about_axis(axis, degrees: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=float).reshape(3)
    n = np.linalg.norm(a)
    if n < _W_EPS:
        raise ValueError("axis must be nonzero")
    k = skew(a / n)
    th = math.radians(degrees)
    return np.eye(3) + math.sin(th) * k + (1.0 - math.cos(th)) * (k @ k)
