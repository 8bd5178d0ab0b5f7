"""Camera model, 3D math, and analytic ray-primitive intersection.

Frame conventions, fixed once and used by every downstream module:

  world frame    right-handed, +y up
  camera frame   +x right, +y up, +z forward (right-handed)
  pose           camera-to-world: p_world = R @ p_cam + t
  pixels         u = (x, y); x grows right, y grows DOWN, so backprojection
                 negates the y offset: cam = ((x-cx)/fx*d, -(y-cy)/fy*d, d)
  depth          forward depth, i.e. the camera-frame z coordinate of the
                 surface point (not the length of the ray to it)

Under the identity pose the camera sits at the origin looking along world +z
with world +y up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

_EPS_PARALLEL = 1e-9


# ── Value types ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Vec3:
    """Point or direction in the right-handed, +y-up world frame (meters)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise InputError(f"Vec3 components must be finite, got {(self.x, self.y, self.z)}")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise InputError("cannot normalize a zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def distance_to(self, other: "Vec3") -> float:
        return (self - other).norm()

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True, eq=False)
class PoseSE3:
    """Camera-to-world rigid transform: p_world = rotation @ p_cam + translation."""

    rotation: np.ndarray  # 3x3, orthonormal, det +1
    translation: Vec3

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise InputError(f"rotation must be 3x3, got {r.shape}")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9:
            raise InputError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise InputError("rotation must have determinant +1")
        r = np.ascontiguousarray(r)
        r.setflags(write=False)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), Vec3(0.0, 0.0, 0.0))

    def to_world(self, p_cam: Vec3) -> Vec3:
        w = self.rotation @ p_cam.to_array()
        return Vec3(float(w[0]), float(w[1]), float(w[2])) + self.translation

    def to_camera(self, p_world: Vec3) -> Vec3:
        c = self.rotation.T @ (p_world - self.translation).to_array()
        return Vec3.from_array(c)

    @property
    def forward(self) -> Vec3:
        """World-frame direction of the camera's +z (optical) axis."""
        return Vec3.from_array(self.rotation[:, 2])

    @property
    def position(self) -> Vec3:
        return self.translation


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError("principal point must lie inside the frame")
        if self.width <= 0 or self.height <= 0:
            raise InputError("frame dimensions must be positive")

    def contains_pixel(self, u: tuple[float, float]) -> bool:
        return 0 <= u[0] < self.width and 0 <= u[1] < self.height


@dataclass(frozen=True, eq=False)
class DepthFrame:
    """Per-pixel forward depth in meters.

    depth has shape (height, width), row-major. Non-positive or non-finite
    entries are the invalid sentinel (missing depth).
    """

    width: int
    height: int
    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float32)
        if d.shape != (self.height, self.width):
            raise InputError(
                f"depth shape {d.shape} does not match frame {self.height}x{self.width}"
            )
        d = np.ascontiguousarray(d)
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0)

    def valid_count(self) -> int:
        return int(self.valid_mask().sum())


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3  # unit length

    def __post_init__(self):
        if abs(self.direction.norm() - 1.0) > 1e-9:
            raise InputError("ray direction must be unit length within 1e-9")

    def point_at(self, t: float) -> Vec3:
        return self.origin + self.direction * t


@dataclass(frozen=True)
class Box3:
    """World-axis-aligned box: center plus strictly positive half extents."""

    center: Vec3
    half_extents: Vec3

    def __post_init__(self):
        h = self.half_extents
        if not (h.x > 0 and h.y > 0 and h.z > 0):
            raise InputError(f"half extents must be positive, got {h}")

    @property
    def min_corner(self) -> Vec3:
        return self.center - self.half_extents

    @property
    def max_corner(self) -> Vec3:
        return self.center + self.half_extents

    def contains(self, p: Vec3, tol: float = 1e-9) -> bool:
        lo, hi = self.min_corner, self.max_corner
        return (
            lo.x - tol <= p.x <= hi.x + tol
            and lo.y - tol <= p.y <= hi.y + tol
            and lo.z - tol <= p.z <= hi.z + tol
        )

    def corners(self) -> list[Vec3]:
        lo, hi = self.min_corner, self.max_corner
        return [
            Vec3(x, y, z)
            for x in (lo.x, hi.x)
            for y in (lo.y, hi.y)
            for z in (lo.z, hi.z)
        ]

    def inflated(self, margin: float) -> "Box3":
        """Grow (or shrink, margin < 0) every half extent, floored at 1 mm."""
        h = self.half_extents
        f = max(1e-3, h.x + margin), max(1e-3, h.y + margin), max(1e-3, h.z + margin)
        return Box3(self.center, Vec3(*f))

    def support_radius(self, direction: Vec3) -> float:
        """Half extent of the box projected onto a unit direction."""
        h = self.half_extents
        return abs(h.x * direction.x) + abs(h.y * direction.y) + abs(h.z * direction.z)


@dataclass(frozen=True)
class Box2:
    """Axis-aligned 2D box in continuous pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InputError(
                f"degenerate Box2 ({self.x_min},{self.y_min})-({self.x_max},{self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def intersection_area(self, other: "Box2") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        return w * h if (w > 0 and h > 0) else 0.0


@dataclass(frozen=True)
class Plane:
    """Infinite plane through `point` with (not necessarily unit) `normal`."""

    point: Vec3
    normal: Vec3

    def __post_init__(self):
        if self.normal.norm() == 0.0:
            raise InputError("plane normal must be nonzero")

    def unit_normal(self) -> Vec3:
        return self.normal.normalized()

    def signed_distance(self, p: Vec3) -> float:
        return (p - self.point).dot(self.unit_normal())


# ── Camera operations ────────────────────────────────────────────────────────


def pixel_to_ray(u: tuple[float, float], intrinsics: CameraIntrinsics, pose: PoseSE3) -> Ray:
    """World-frame viewing ray through pixel u.

    Pixel y grows downward while world +y is up, hence the sign flip on the
    y offset.
    """
    if not intrinsics.contains_pixel(u):
        raise InputError(f"pixel {u} outside {intrinsics.width}x{intrinsics.height} frame")
    cam = Vec3(
        (u[0] - intrinsics.cx) / intrinsics.fx,
        -(u[1] - intrinsics.cy) / intrinsics.fy,
        1.0,
    ).normalized()
    world_dir = Vec3.from_array(pose.rotation @ cam.to_array())
    return Ray(pose.translation, world_dir)


def sample_depth(frame: DepthFrame, u: tuple[float, float]) -> float | None:
    """Depth at the nearest integer pixel; None when the sentinel marks it invalid.

    Nearest-pixel on purpose: interpolating across a depth discontinuity would
    invent a surface between foreground and background.
    """
    if not (0 <= u[0] < frame.width and 0 <= u[1] < frame.height):
        raise InputError(f"pixel {u} outside {frame.width}x{frame.height} frame")
    ix = min(int(round(u[0])), frame.width - 1)
    iy = min(int(round(u[1])), frame.height - 1)
    d = float(frame.depth[iy, ix])
    if not math.isfinite(d) or d <= 0.0:
        return None
    return d


def backproject(
    u: tuple[float, float], depth: float, intrinsics: CameraIntrinsics, pose: PoseSE3
) -> Vec3:
    """World point at forward depth `depth` along the ray through pixel u."""
    if depth <= 0:
        raise InputError(f"depth must be positive, got {depth}")
    cam = Vec3(
        (u[0] - intrinsics.cx) / intrinsics.fx * depth,
        -(u[1] - intrinsics.cy) / intrinsics.fy * depth,
        depth,
    )
    return pose.to_world(cam)


def project_point(
    p: Vec3, intrinsics: CameraIntrinsics, pose: PoseSE3
) -> tuple[float, float] | None:
    """Pinhole projection; None when p is at or behind the camera plane."""
    cam = pose.to_camera(p)
    if cam.z <= 0.0:
        return None
    return (
        intrinsics.cx + intrinsics.fx * cam.x / cam.z,
        intrinsics.cy - intrinsics.fy * cam.y / cam.z,
    )


# ── Ray-primitive intersection ───────────────────────────────────────────────


def ray_box_intersect(ray: Ray, box: Box3) -> float | None:
    """Slab-method ray/AABB test.

    Returns the smallest non-negative hit distance; when the origin is inside
    the box, that is the exit distance. None on a miss or a box entirely
    behind the origin.
    """
    t_near = -math.inf
    t_far = math.inf
    o = (ray.origin.x, ray.origin.y, ray.origin.z)
    d = (ray.direction.x, ray.direction.y, ray.direction.z)
    lo = box.min_corner
    hi = box.max_corner
    bounds = ((lo.x, hi.x), (lo.y, hi.y), (lo.z, hi.z))
    for axis in range(3):
        b_lo, b_hi = bounds[axis]
        if abs(d[axis]) < _EPS_PARALLEL:
            if not (b_lo <= o[axis] <= b_hi):
                return None
            continue
        t0 = (b_lo - o[axis]) / d[axis]
        t1 = (b_hi - o[axis]) / d[axis]
        if t0 > t1:
            t0, t1 = t1, t0
        t_near = max(t_near, t0)
        t_far = min(t_far, t1)
        if t_near > t_far:
            return None
    if t_far < 0.0:
        return None
    return t_near if t_near >= 0.0 else t_far


def ray_plane_intersect(ray: Ray, plane: Plane) -> float | None:
    """Hit distance along the ray, or None when parallel or behind the origin."""
    n = plane.unit_normal()
    denom = ray.direction.dot(n)
    if abs(denom) < _EPS_PARALLEL:
        return None
    t = (plane.point - ray.origin).dot(n) / denom
    return t if t >= 0.0 else None


def project_box_hull(
    box: Box3, intrinsics: CameraIntrinsics, pose: PoseSE3
) -> Box2 | None:
    """Axis-aligned 2D hull of the box's projected corners, clipped to the frame.

    None when every corner is behind the camera or the clipped hull is empty.
    """
    xs: list[float] = []
    ys: list[float] = []
    for corner in box.corners():
        uv = project_point(corner, intrinsics, pose)
        if uv is not None:
            xs.append(uv[0])
            ys.append(uv[1])
    if not xs:
        return None
    x_min = max(0.0, min(xs))
    y_min = max(0.0, min(ys))
    x_max = min(float(intrinsics.width - 1), max(xs))
    y_max = min(float(intrinsics.height - 1), max(ys))
    if x_min >= x_max or y_min >= y_max:
        return None
    return Box2(x_min, y_min, x_max, y_max)


def look_at_pose(eye: Vec3, target: Vec3, world_up: Vec3 = Vec3(0.0, 1.0, 0.0)) -> PoseSE3:
    """Camera-to-world pose with the optical axis pointing from eye to target."""
    fwd = (target - eye).normalized()
    right = world_up.cross(fwd)
    if right.norm() < 1e-9:
        raise InputError("look direction parallel to world up")
    right = right.normalized()
    up = fwd.cross(right)
    r = np.column_stack([right.to_array(), up.to_array(), fwd.to_array()])
    return PoseSE3(r, eye)
