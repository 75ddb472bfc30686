"""Synthetic scenes and ground-truth oracles.

These back the synthetic matcher, give tests exact transfer oracles, and
generate desk-scale videos/datasets so the whole pipeline runs without any
trained network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    CameraIntrinsics,
    DepthMap,
    EssentialMatrix,
    Pose,
    relative_pose,
    rotation_about_axis,
    sampson_distances,
)
from .pgm import write_pgm
from .seeding import derive_seed


def _apply_h(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    q = p @ h[:, :2].T + h[:, 2]
    return q[:, :2] / q[:, 2:3]


def _in_frame(points: np.ndarray, width: int, height: int) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)


@dataclass(frozen=True)
class PlanarMotion:
    """Parametric reference-plane -> frame-pixel homographies for a camera pan.

    Frame t sees the reference plane shifted by (-dx*t, -dy*t) after a
    rotation of dtheta*t degrees about the frame center.
    """

    width: int
    height: int
    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    def frame_homography(self, index: int) -> np.ndarray:
        cx = (self.width - 1) / 2.0
        cy = (self.height - 1) / 2.0
        th = math.radians(self.dtheta * index)
        c, s = math.cos(th), math.sin(th)
        rot = np.array(
            [
                [c, -s, cx - c * cx + s * cy],
                [s, c, cy - s * cx - c * cy],
                [0.0, 0.0, 1.0],
            ]
        )
        shift = np.array(
            [[1.0, 0.0, -self.dx * index], [0.0, 1.0, -self.dy * index], [0.0, 0.0, 1.0]]
        )
        return shift @ rot

    def pair_homography(self, index_a: int, index_b: int) -> np.ndarray:
        return self.frame_homography(index_b) @ np.linalg.inv(
            self.frame_homography(index_a)
        )


class PlanarVideoTruth:
    """Anchor tracks on a moving plane; correspondences chain exactly.

    Anchors are sampled once from the seed over a fixed reference domain, so
    the same scene point projects to identical coordinates in every pair that
    sees it -- which is what makes middle-frame composition exact.
    """

    def __init__(self, motion: PlanarMotion, anchors: np.ndarray):
        self.motion = motion
        self.anchors = np.asarray(anchors, dtype=float).reshape(-1, 2)

    @staticmethod
    def panning(
        width: int,
        height: int,
        length: int,
        dx: float,
        n_anchors: int,
        seed: int = 0,
    ) -> "PlanarVideoTruth":
        """Pure x-pan video with anchors covering the union footprint."""
        rng = np.random.default_rng(derive_seed(seed, "anchors"))
        x_max = (width - 1) + dx * (length - 1)
        anchors = rng.uniform((0.0, 0.0), (x_max, height - 1), size=(n_anchors, 2))
        return PlanarVideoTruth(PlanarMotion(width, height, dx=dx), anchors)

    def projections(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        h = self.motion.frame_homography(index)
        proj = _apply_h(h, self.anchors)
        return proj, _in_frame(proj, self.motion.width, self.motion.height)

    def correspondences(self, frame_a, frame_b, n: int):
        proj_a, vis_a = self.projections(frame_a.index)
        proj_b, vis_b = self.projections(frame_b.index)
        idx = np.nonzero(vis_a & vis_b)[0][:n]
        return proj_a[idx], proj_b[idx]

    def constraint_residual(self, frame_a, frame_b, pa, pb):
        h_ab = self.motion.pair_homography(frame_a.index, frame_b.index)
        return np.linalg.norm(_apply_h(h_ab, pa) - np.asarray(pb, dtype=float), axis=1)


class HomographyPairTruth:
    """Single-pair ground truth: pb = H pa, points sampled in frame A."""

    def __init__(self, h_ab: np.ndarray, width: int, height: int, seed: int = 0):
        self.h_ab = np.asarray(h_ab, dtype=float).reshape(3, 3)
        self.width = width
        self.height = height
        self.seed = seed

    def correspondences(self, frame_a, frame_b, n: int):
        rng = np.random.default_rng(derive_seed(self.seed, "points"))
        wb, hb = frame_b.size() if frame_b is not None else (self.width, self.height)
        pa_out = []
        pb_out = []
        for _ in range(50):
            if len(pa_out) >= n:
                break
            pa = rng.uniform((0.0, 0.0), (self.width - 1, self.height - 1), size=(n, 2))
            pb = _apply_h(self.h_ab, pa)
            keep = _in_frame(pb, int(wb), int(hb))
            pa_out.extend(pa[keep])
            pb_out.extend(pb[keep])
        pa_arr = np.array(pa_out[:n]).reshape(-1, 2)
        pb_arr = np.array(pb_out[:n]).reshape(-1, 2)
        return pa_arr, pb_arr

    def constraint_residual(self, frame_a, frame_b, pa, pb):
        return np.linalg.norm(_apply_h(self.h_ab, pa) - np.asarray(pb, dtype=float), axis=1)


class RigPairTruth:
    """Depth-and-pose ground truth for one calibrated pair.

    The scene is the bilinear surface of frame A's depth map; transfer is
    exact unproject -> rigid move -> project. The epipolar residual metric is
    the square root of the Sampson distance under the true essential matrix.
    """

    def __init__(
        self,
        k_a: CameraIntrinsics,
        pose_a: Pose,
        depth_a: DepthMap,
        k_b: CameraIntrinsics,
        pose_b: Pose,
        depth_b: DepthMap | None = None,
        seed: int = 0,
        depth_tolerance: float = 0.05,
    ):
        self.k_a = k_a
        self.pose_a = pose_a
        self.depth_a = depth_a
        self.k_b = k_b
        self.pose_b = pose_b
        self.depth_b = depth_b
        self.seed = seed
        self.depth_tolerance = depth_tolerance
        self._rel = relative_pose(pose_a, pose_b)
        self._f_pixel: np.ndarray | None = None

    def _pixel_f(self) -> np.ndarray:
        if self._f_pixel is None:
            e = EssentialMatrix.from_pose(self._rel)
            ka_inv = np.linalg.inv(self.k_a.matrix())
            kb_inv = np.linalg.inv(self.k_b.matrix())
            self._f_pixel = kb_inv.T @ e.e @ ka_inv
        return self._f_pixel

    def transfer(self, pa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact transfer of (n, 2) A-pixels; returns (pb, valid)."""
        pa = np.asarray(pa, dtype=float).reshape(-1, 2)
        depth, ok = self.depth_a.bilinear(pa)
        rays = np.column_stack([self.k_a.normalize(pa), np.ones(len(pa))])
        cam_a = rays * np.where(ok, depth, 1.0)[:, None]
        cam_b = self._rel.transform(cam_a)
        z = cam_b[:, 2]
        ok = ok & (z > 1e-9)
        safe_z = np.where(ok, z, 1.0)
        pb = self.k_b.denormalize(cam_b[:, :2] / safe_z[:, None])
        ok = ok & _in_frame(pb, self.k_b.width, self.k_b.height)
        if self.depth_b is not None:
            db, db_ok = self.depth_b.bilinear(pb)
            consistent = db_ok & (np.abs(z - db) / np.where(db_ok, db, 1.0) < self.depth_tolerance)
            ok = ok & consistent
        return pb, ok

    def correspondences(self, frame_a, frame_b, n: int):
        rng = np.random.default_rng(derive_seed(self.seed, "points"))
        pa_out: list[np.ndarray] = []
        pb_out: list[np.ndarray] = []
        for _ in range(50):
            if len(pa_out) >= n:
                break
            pa = rng.uniform(
                (0.0, 0.0), (self.k_a.width - 1, self.k_a.height - 1), size=(n, 2)
            )
            pb, ok = self.transfer(pa)
            pa_out.extend(pa[ok])
            pb_out.extend(pb[ok])
        return (
            np.array(pa_out[:n]).reshape(-1, 2),
            np.array(pb_out[:n]).reshape(-1, 2),
        )

    def constraint_residual(self, frame_a, frame_b, pa, pb):
        return np.sqrt(sampson_distances(self._pixel_f(), pa, pb))


# --- random rigid scenes ---------------------------------------------------------


@dataclass(frozen=True)
class TwoViewScene:
    """A calibrated pair with exact pixel correspondences on a 3-D cloud."""

    k_a: CameraIntrinsics
    k_b: CameraIntrinsics
    pose_a: Pose
    pose_b: Pose
    points_world: np.ndarray
    pixels_a: np.ndarray
    pixels_b: np.ndarray

    @property
    def relative(self) -> Pose:
        return relative_pose(self.pose_a, self.pose_b)


def random_two_view_scene(
    seed: int,
    n_points: int = 500,
    width: int = 640,
    height: int = 480,
    focal: float = 600.0,
    max_rotation_deg: float = 60.0,
    depth_range: tuple[float, float] = (4.0, 10.0),
) -> TwoViewScene:
    """Generic (non-planar) two-view scene with all points visible in both frames."""
    rng = np.random.default_rng(derive_seed(seed, "scene"))
    k = CameraIntrinsics(focal, focal, width / 2.0, height / 2.0, width, height)
    border = 8.0
    for _ in range(200):
        m = 4 * n_points
        px = rng.uniform((border, border), (width - 1 - border, height - 1 - border), (m, 2))
        z = rng.uniform(depth_range[0], depth_range[1], m)
        world = np.column_stack([k.normalize(px) * z[:, None], z])
        centroid = world.mean(axis=0)
        mean_depth = float(centroid[2])
        theta = rng.uniform(0.0, max_rotation_deg)
        axis = rng.normal(size=3)
        r = rotation_about_axis(axis, theta)
        lateral = rng.uniform(-0.2, 0.2, size=2) * mean_depth
        target = np.array([lateral[0], lateral[1], mean_depth])
        t = target - r @ centroid
        pose_b = Pose(r, t)
        baseline = float(np.linalg.norm(pose_b.camera_center()))
        if baseline < 0.05 * mean_depth:
            continue
        cam_b = pose_b.transform(world)
        zb = cam_b[:, 2]
        ok = zb > 0.1
        pb = np.full((m, 2), -1.0)
        pb[ok] = k.denormalize(cam_b[ok, :2] / zb[ok, None])
        ok &= _in_frame(pb, width, height)
        if int(ok.sum()) >= n_points:
            sel = np.nonzero(ok)[0][:n_points]
            return TwoViewScene(
                k, k, Pose.identity(), pose_b, world[sel], px[sel], pb[sel]
            )
    raise RuntimeError("could not realize a visible two-view scene")


def smooth_depth_map(
    seed: int, width: int, height: int, base: float = 5.0, amplitude: float = 2.2
) -> DepthMap:
    """Smooth positive depth surface with strong relief.

    Several harmonics plus a random tilt keep the surface far from planar,
    so epipolar geometry fitted on it is well conditioned.
    """
    rng = np.random.default_rng(derive_seed(seed, "depth"))
    xs = np.linspace(0.0, 1.0, width)
    ys = np.linspace(0.0, 1.0, height)
    gx, gy = np.meshgrid(xs, ys)
    values = np.full((height, width), base)
    for fx, fy in ((1, 1), (2, 3), (3, 2)):
        phase_x, phase_y = rng.uniform(0.0, 2 * math.pi, size=2)
        values = values + (amplitude / 2.0) * np.sin(
            2 * math.pi * fx * gx + phase_x
        ) * np.cos(2 * math.pi * fy * gy + phase_y)
    tilt = rng.uniform(-0.8, 0.8, size=2)
    values = values + tilt[0] * (gx - 0.5) * base + tilt[1] * (gy - 0.5) * base
    return DepthMap(np.maximum(values, base / 5.0))


def fronto_parallel_rig(
    width: int, height: int, focal: float, depth: float, shift_px: float
):
    """Two cameras seeing a constant-depth plane, B shifted by shift_px pixels.

    Returns ((k, pose, depth_map), (k, pose, depth_map)) suitable for overlap
    computations; the analytic directional overlap is (w - shift_px) / w.
    """
    k = CameraIntrinsics(focal, focal, width / 2.0, height / 2.0, width, height)
    baseline = shift_px * depth / focal
    pose_a = Pose.identity()
    pose_b = Pose(np.eye(3), np.array([-baseline, 0.0, 0.0]))
    d = DepthMap(np.full((height, width), depth))
    return (k, pose_a, d), (k, pose_b, d)


# --- image and video helpers -------------------------------------------------------


def make_texture(seed: int, width: int, height: int) -> np.ndarray:
    """Blurred noise texture with dense corner structure, as uint8."""
    rng = np.random.default_rng(derive_seed(seed, "texture"))
    img = rng.uniform(0.0, 255.0, (height, width))
    for axis in (0, 1):
        img = (
            0.25 * np.roll(img, -1, axis=axis)
            + 0.5 * img
            + 0.25 * np.roll(img, 1, axis=axis)
        )
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_video_frames(
    directory: Path | str,
    count: int,
    width: int,
    height: int,
    seed: int | None = None,
) -> Path:
    """Write frames 00000000.pgm .. as flat gray or seeded texture."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if seed is None:
        frame = np.full((height, width), 128, dtype=np.uint8)
        for i in range(count):
            write_pgm(directory / f"{i:08d}.pgm", frame)
    else:
        for i in range(count):
            write_pgm(directory / f"{i:08d}.pgm", make_texture(seed + i, width, height))
    return directory
