"""2D-to-3D grounding: lift a detection box into a metric anchor and volume.

The depth path samples nine pixels per box (center, four inset corners, four
diagonal midpoints), reads nearest-pixel depth at each, rejects outliers with
a MAD test, and aggregates the surviving back-projected hits. The planar path
replaces the depth map with a RANSAC-fitted support plane and is the
degraded-accuracy fallback used by the no-depth ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, InsufficientDepth, NoPlaneFound
from .geometry import (
    Box2,
    Box3,
    CameraIntrinsics,
    DepthFrame,
    Plane,
    PoseSE3,
    Vec3,
    backproject,
    pixel_to_ray,
    ray_plane_intersect,
    sample_depth,
)

_UP = Vec3(0.0, 1.0, 0.0)


@dataclass(frozen=True)
class Detection2D:
    """A detector hit: free-text label, 2D box, confidence in [0,1]."""

    label: str
    box: Box2
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise InputError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class LiftConfig:
    inset_fraction: float = 0.1
    min_valid_samples: int = 3
    mad_k: float = 2.5
    min_half_extent: float = 0.02  # meters

    def __post_init__(self):
        if not (0.0 <= self.inset_fraction < 0.5):
            raise InputError("inset_fraction must be in [0, 0.5)")
        if self.min_valid_samples < 1:
            raise InputError("min_valid_samples must be >= 1")
        if self.mad_k <= 0 or self.min_half_extent <= 0:
            raise InputError("mad_k and min_half_extent must be positive")


@dataclass(frozen=True)
class LiftResult:
    """Grounded detection: surface anchor, hit-spread volume, fit diagnostics.

    The anchor is the centroid of accepted surface hits, so it sits on the
    visible surface rather than at the object's volumetric center; metrics
    account for that offset.
    """

    anchor: Vec3
    volume: Box3
    sample_count: int
    depth_spread: float  # MAD of accepted depths, meters


def sample_pixels(box: Box2, inset_fraction: float) -> list[tuple[float, float]]:
    """Nine sample pixels: center, inset corners, and diagonal midpoints.

    Corners move toward the center by inset_fraction of the box size; the
    diagonal midpoints bisect center-to-inset-corner. All nine lie inside the
    box for any inset_fraction in [0, 0.5).
    """
    cx, cy = box.center
    dx = inset_fraction * box.width
    dy = inset_fraction * box.height
    corners = [
        (box.x_min + dx, box.y_min + dy),
        (box.x_max - dx, box.y_min + dy),
        (box.x_min + dx, box.y_max - dy),
        (box.x_max - dx, box.y_max - dy),
    ]
    midpoints = [((cx + x) / 2.0, (cy + y) / 2.0) for x, y in corners]
    return [(cx, cy), *corners, *midpoints]


def _mad(values: np.ndarray) -> float:
    return float(np.median(np.abs(values - np.median(values))))


def _aggregate_hits(
    hits: list[Vec3], depths: np.ndarray, cfg: LiftConfig
) -> LiftResult:
    pts = np.array([h.to_array() for h in hits])
    anchor = Vec3.from_array(pts.mean(axis=0))
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    center = Vec3.from_array((lo + hi) / 2.0)
    half = np.maximum((hi - lo) / 2.0, cfg.min_half_extent)
    return LiftResult(
        anchor=anchor,
        volume=Box3(center, Vec3.from_array(half)),
        sample_count=len(hits),
        depth_spread=_mad(depths),
    )


def _check_box_in_frame(box: Box2, width: int, height: int) -> None:
    if box.x_min < 0 or box.y_min < 0 or box.x_max > width - 1 or box.y_max > height - 1:
        raise InputError(
            f"detection box ({box.x_min},{box.y_min})-({box.x_max},{box.y_max}) "
            f"exceeds {width}x{height} frame"
        )


def lift_detection(
    det: Detection2D,
    frame: DepthFrame,
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
    cfg: LiftConfig = LiftConfig(),
) -> LiftResult:
    """Depth-raycast lifting with MAD outlier rejection.

    Raises InsufficientDepth when fewer than cfg.min_valid_samples samples
    survive; the caller decides whether to fall back or re-capture.
    """
    _check_box_in_frame(det.box, frame.width, frame.height)
    pixels = sample_pixels(det.box, cfg.inset_fraction)
    sampled: list[tuple[tuple[float, float], float]] = []
    for u in pixels:
        d = sample_depth(frame, u)
        if d is not None:
            sampled.append((u, d))
    if len(sampled) < cfg.min_valid_samples:
        raise InsufficientDepth(
            f"{len(sampled)} of {len(pixels)} samples valid for '{det.label}'"
        )
    depths = np.array([d for _, d in sampled])
    m = float(np.median(depths))
    band = cfg.mad_k * max(_mad(depths), 0.01)  # 1 cm MAD floor, see module notes
    keep = np.abs(depths - m) <= band
    if int(keep.sum()) < cfg.min_valid_samples:
        raise InsufficientDepth(
            f"only {int(keep.sum())} samples inside MAD band for '{det.label}'"
        )
    hits = [
        backproject(u, d, intrinsics, pose)
        for (u, d), k in zip(sampled, keep)
        if k
    ]
    return _aggregate_hits(hits, depths[keep], cfg)


def lift_detection_planar(
    det: Detection2D,
    plane: Plane,
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
    cfg: LiftConfig = LiftConfig(),
) -> LiftResult:
    """No-depth fallback: intersect the nine sample rays with a support plane.

    Rays parallel to the plane or hitting behind the origin are dropped; if
    every ray drops the detection cannot be grounded.
    """
    _check_box_in_frame(det.box, intrinsics.width, intrinsics.height)
    hits: list[Vec3] = []
    depths: list[float] = []
    for u in sample_pixels(det.box, cfg.inset_fraction):
        ray = pixel_to_ray(u, intrinsics, pose)
        t = ray_plane_intersect(ray, plane)
        if t is None:
            continue
        hit = ray.point_at(t)
        hits.append(hit)
        depths.append(pose.to_camera(hit).z)
    if not hits:
        raise InsufficientDepth(f"no plane intersections for '{det.label}'")
    return _aggregate_hits(hits, np.array(depths), cfg)


def fit_support_plane(
    frame: DepthFrame,
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
    seed: int,
) -> Plane:
    """RANSAC fit of the dominant near-horizontal plane in a depth frame.

    Back-projects valid pixels (subsampled to <= 2000, seeded), runs 200
    three-point hypotheses with a 2 cm inlier band, accepts only candidates
    with |normal . up| >= 0.9, and refines the winner by least squares.
    """
    mask = frame.valid_mask()
    n_valid = int(mask.sum())
    if n_valid < 50:
        raise InputError(f"need >= 50 valid depth pixels, frame has {n_valid}")

    ys, xs = np.nonzero(mask)
    depths = frame.depth[ys, xs].astype(np.float64)
    rng = np.random.default_rng(seed)
    if len(xs) > 2000:
        idx = rng.choice(len(xs), size=2000, replace=False)
        xs, ys, depths = xs[idx], ys[idx], depths[idx]

    # vectorized backprojection of the subsample
    cam = np.stack(
        [
            (xs - intrinsics.cx) / intrinsics.fx * depths,
            -(ys - intrinsics.cy) / intrinsics.fy * depths,
            depths,
        ],
        axis=1,
    )
    pts = cam @ np.asarray(pose.rotation).T + pose.translation.to_array()
    n_pts = len(pts)
    up = _UP.to_array()

    best_inliers: np.ndarray | None = None
    best_count = 0
    for _ in range(200):
        i, j, k = rng.choice(n_pts, size=3, replace=False)
        normal = np.cross(pts[j] - pts[i], pts[k] - pts[i])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        if abs(normal @ up) < 0.9:
            continue
        dist = np.abs((pts - pts[i]) @ normal)
        inliers = dist <= 0.02
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers

    if best_inliers is None or best_count < 0.10 * n_pts:
        raise NoPlaneFound(
            f"best horizontal candidate has {best_count}/{n_pts} inliers"
        )

    # least-squares refinement: smallest principal axis of the inlier cloud
    inlier_pts = pts[best_inliers]
    centroid = inlier_pts.mean(axis=0)
    _, _, vt = np.linalg.svd(inlier_pts - centroid, full_matrices=False)
    normal = vt[-1]
    if normal @ up < 0:
        normal = -normal
    return Plane(Vec3.from_array(centroid), Vec3.from_array(normal))
