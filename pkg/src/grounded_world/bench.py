"""Deterministic synthetic-scene generator and benchmark file format.

Every scene is a desk-scale arrangement: one support surface (desk, table,
or workbench) on a floor plane, items standing on it, a few objects on the
floor, and in cluttered scenes a tall riser carrying an elevated object plus
partial camera occlusion. Ground truth carries exact 3D boxes, the relation
edges the engine's own predicates produce on that exact geometry, and
queries whose expected answers are computed from ground truth.

Placement is rejection-sampled: a candidate layout must keep every pairwise
quantity away from the predicate thresholds (so centimeter-scale lifting
error cannot flip an edge), and the full engine must reproduce the ground
truth from a noiseless render before the layout is accepted. All randomness
flows from spec.seed through a single generator, so a seed maps to exactly
one scene, byte for byte.
"""

from __future__ import annotations

import base64
import json
import math
from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np

from .errors import GenerationFailed, InputError, InsufficientDepth, SceneFormatError
from .geometry import (
    Box2,
    Box3,
    CameraIntrinsics,
    DepthFrame,
    PoseSE3,
    Vec3,
    backproject,
    look_at_pose,
    pixel_to_ray,
    project_box_hull,
    ray_box_intersect,
)
from .graph import ObjectNode, RelationEdge, RelationType, SceneGraph
from .lifting import LiftConfig, lift_detection, sample_pixels
from .queries import PerceptionInputs, QuerySession
from .relations import RelationParams, _segment_hits_box, infer_relations
from .semantics import (
    DetectorRequest,
    GroundTruthDetector,
    GroundTruthLabelProposer,
    ProposerRequest,
    RelationRule,
    RuleBasedRelationProposer,
)

SCENE_CONTEXTS = ("Industrial", "Assistive", "Desk")
SCENE_DIFFICULTIES = ("Tidy", "Cluttered")

_DIFFICULTY_RANGE = {"Tidy": (3, 6), "Cluttered": (8, 16)}

_SUPPORT_LABEL = {"Desk": "desk", "Industrial": "workbench", "Assistive": "table"}

# Modeled as a thin floating slab: a box with tall sides would present its
# front face to the camera and drag the lifted anchor off the worktop.
_SUPPORT_HALF = {
    "Desk": Vec3(0.45, 0.025, 0.30),
    "Industrial": Vec3(0.55, 0.03, 0.34),
    "Assistive": Vec3(0.48, 0.025, 0.32),
}
_SUPPORT_TOP_HEIGHT = {"Desk": 0.30, "Industrial": 0.34, "Assistive": 0.32}

_LABEL_POOL = {
    "Desk": (
        "book", "tray", "mug", "keyboard", "mouse", "notebook", "stapler",
        "phone", "tablet", "pen holder", "charger", "speaker", "folder",
        "ruler", "tape dispenser", "coaster",
    ),
    "Industrial": (
        "toolbox", "wrench", "drill", "clamp", "paint can", "crate", "helmet",
        "battery pack", "multimeter", "goggles", "solder spool", "gearbox",
        "bearing", "gauge", "funnel", "brush",
    ),
    "Assistive": (
        "pill bottle", "water cup", "remote", "plate", "glasses case",
        "napkin box", "spoon", "bowl", "thermos", "magazine", "tissue pack",
        "card deck", "bell", "photo frame", "snack bar", "basket",
    ),
}

# Floor-sized things each context may duplicate for Closest queries.
_FLOOR_LABEL = {"Desk": "bin", "Industrial": "pallet box", "Assistive": "caddy"}
_RISER_LABEL = {"Desk": "monitor stand", "Industrial": "jack stand", "Assistive": "shelf riser"}

_CONTEXT_RULES = {
    "Desk": (
        RelationRule("mouse", "keyboard", RelationType.FUNCTIONAL, 0.9),
        RelationRule("charger", "phone", RelationType.DEPENDENCE, 0.9),
        RelationRule("speaker", "tablet", RelationType.INTERACTION, 0.9),
    ),
    "Industrial": (
        RelationRule("wrench", "toolbox", RelationType.FUNCTIONAL, 0.9),
        RelationRule("gearbox", "bearing", RelationType.STRUCTURAL, 0.9),
        RelationRule("battery pack", "drill", RelationType.DEPENDENCE, 0.9),
    ),
    "Assistive": (
        RelationRule("pill bottle", "water cup", RelationType.SEQUENTIAL, 0.9),
        RelationRule("spoon", "bowl", RelationType.FUNCTIONAL, 0.9),
        RelationRule("remote", "magazine", RelationType.SEMANTIC, 0.9),
    ),
}

DEFAULT_INTRINSICS = CameraIntrinsics(90.0, 90.0, 59.5, 44.5, 120, 90)

_MAX_ATTEMPTS = 10_000

# Authored expected distances must hold with slack against the 5 cm success
# tolerance; the noiseless engine is required to land this close.
_MEASURE_VERIFY_TOL = 0.04
_FILTER_MIN_GAP = 0.12
_CLOSEST_MIN_MARGIN = 0.12


@dataclass(frozen=True)
class NoiseSpec:
    depth_sigma: float = 0.0
    box_jitter_sigma: float = 0.0
    dropout_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.depth_sigma < 0.0 or self.box_jitter_sigma < 0.0:
            raise InputError("noise sigmas must be non-negative")
        if not 0.0 <= self.dropout_fraction <= 1.0:
            raise InputError("dropout_fraction outside [0, 1]")


@dataclass(frozen=True)
class SceneSpec:
    context: str
    difficulty: str
    seed: int
    object_count: tuple[int, int] | None = None
    camera: PoseSE3 | None = None
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    noise: NoiseSpec = NoiseSpec()

    def __post_init__(self) -> None:
        if self.context not in SCENE_CONTEXTS:
            raise InputError(f"unknown context {self.context!r}")
        if self.difficulty not in SCENE_DIFFICULTIES:
            raise InputError(f"unknown difficulty {self.difficulty!r}")
        if self.object_count is not None:
            lo, hi = self.object_count
            span = _DIFFICULTY_RANGE[self.difficulty]
            if not (1 <= lo <= hi):
                raise InputError("object_count range must satisfy 1 <= lo <= hi")
            if lo < span[0] or hi > span[1]:
                raise InputError(
                    f"{self.difficulty} scenes hold {span[0]}-{span[1]} objects"
                )
            object.__setattr__(self, "object_count", (int(lo), int(hi)))

    def count_range(self) -> tuple[int, int]:
        return self.object_count or _DIFFICULTY_RANGE[self.difficulty]


@dataclass(frozen=True)
class ScenePrimitive:
    label: str
    box: Box3
    support_of: int | None = None  # id of the object this one stands on

    def __post_init__(self) -> None:
        if self.box.min_corner.y < -1e-9:
            raise InputError("scene primitives must sit above the floor plane")


@dataclass(frozen=True)
class SceneObject:
    id: int
    label: str
    center: Vec3
    half_extents: Vec3
    box2: Box2

    @property
    def box(self) -> Box3:
        return Box3(self.center, self.half_extents)


@dataclass(frozen=True)
class SceneQuery:
    text: str
    expected_ids: frozenset[int] | None = None
    expected_meters: float | None = None

    def __post_init__(self) -> None:
        if (self.expected_ids is None) == (self.expected_meters is None):
            raise InputError("exactly one of expected_ids/expected_meters is set")


@dataclass(frozen=True, eq=False)
class BenchmarkScene:
    spec: SceneSpec
    intrinsics: CameraIntrinsics
    pose: PoseSE3
    frame: DepthFrame
    user_position: Vec3
    objects: tuple[SceneObject, ...]
    edges: tuple[RelationEdge, ...]
    rules: tuple[RelationRule, ...]
    queries: tuple[SceneQuery, ...]

    def object_by_id(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise InputError(f"no scene object with id {object_id}")


# ---------------------------------------------------------------- rendering

def render_depth(
    boxes,
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
    depth_sigma: float = 0.0,
    dropout_fraction: float = 0.0,
    rng: np.random.Generator | None = None,
    floor_y: float | None = 0.0,
) -> DepthFrame:
    """Vectorized analytic renderer: nearest ray-box or ray-floor hit per
    pixel, as forward depth. Pixels that hit nothing are invalid (0)."""
    h, w = intrinsics.height, intrinsics.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dirs_cam = np.stack(
        [
            (us - intrinsics.cx) / intrinsics.fx,
            -(vs - intrinsics.cy) / intrinsics.fy,
            np.ones_like(us),
        ],
        axis=-1,
    )
    dirs_cam /= np.linalg.norm(dirs_cam, axis=-1, keepdims=True)
    dirs = dirs_cam @ pose.rotation.T
    origin = pose.position.to_array()

    t_best = np.full((h, w), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for box in boxes:
            mn = box.min_corner.to_array()
            mx = box.max_corner.to_array()
            t1 = (mn - origin) / dirs
            t2 = (mx - origin) / dirs
            t_enter = np.minimum(t1, t2).max(axis=-1)
            t_exit = np.maximum(t1, t2).min(axis=-1)
            hit = (t_enter <= t_exit) & (t_exit > 0) & (t_enter > 0)
            t_best = np.where(hit & (t_enter < t_best), t_enter, t_best)
        if floor_y is not None:
            t_floor = (floor_y - origin[1]) / dirs[..., 1]
            hit = np.isfinite(t_floor) & (t_floor > 0)
            t_best = np.where(hit & (t_floor < t_best), t_floor, t_best)

    forward = pose.forward.to_array()
    depth = np.where(np.isfinite(t_best), t_best * (dirs @ forward), 0.0)

    if depth_sigma > 0.0:
        if rng is None:
            raise InputError("depth noise requires an rng")
        valid = depth > 0
        depth = depth + np.where(valid, rng.normal(0.0, depth_sigma, (h, w)), 0.0)
    if dropout_fraction > 0.0:
        if rng is None:
            raise InputError("dropout requires an rng")
        count = int(round(dropout_fraction * h * w))
        dropped = rng.choice(h * w, size=count, replace=False)
        flat = depth.reshape(-1).copy()
        flat[dropped] = 0.0
        depth = flat.reshape(h, w)

    return DepthFrame(w, h, depth.astype(np.float32))


def project_gt_box(
    box: Box3, intrinsics: CameraIntrinsics, pose: PoseSE3
) -> Box2 | None:
    """Axis-aligned hull of the projected corners, clipped to the frame."""
    return project_box_hull(box, intrinsics, pose)


# ---------------------------------------------------------------- placement

def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi))


def _footprint_gap(a: Box3, b: Box3) -> float:
    """Horizontal clearance between two footprints (negative when overlapping)."""
    dx = abs(a.center.x - b.center.x) - (a.half_extents.x + b.half_extents.x)
    dz = abs(a.center.z - b.center.z) - (a.half_extents.z + b.half_extents.z)
    return max(dx, dz)


def _inflate(box: Box3, margin: float) -> Box3:
    h = box.half_extents
    return Box3(box.center, Vec3(h.x + margin, h.y + margin, h.z + margin))


def _visible_hull(
    box: Box3, intrinsics: CameraIntrinsics, pose: PoseSE3
) -> Box2 | None:
    """Projected hull when the box sits fully inside the frame and is big
    enough for the nine-sample lifting pattern; None otherwise."""
    hull = project_gt_box(box, intrinsics, pose)
    if hull is None:
        return None
    if hull.x_min < 2.0 or hull.y_min < 2.0:
        return None
    if hull.x_max > intrinsics.width - 3.0 or hull.y_max > intrinsics.height - 3.0:
        return None
    if hull.width < 3.0 or hull.height < 3.0:
        return None
    return hull


@dataclass
class _Placement:
    """Incremental layout with lifting-aware acceptance.

    Each placed object contributes nine guard rays, the exact depth samples
    the engine will read for it. Later placements may not cut in front of a
    guard ray: doing so would silently change an earlier object's lifted
    anchor. Only the elevated object is allowed to contaminate its direct
    base (it must stand on the base's sampled surface); it is kept thin so
    the damage stays within the face-contact tolerance.

    Every candidate is also checked for threshold agreement: each pairwise
    distance and depth-order indicator must come out the same whether it is
    computed from ground-truth centers or from the anchors lifting will
    actually produce, with margin to survive sensor noise.
    """

    rng: np.random.Generator
    intrinsics: CameraIntrinsics
    pose: PoseSE3
    params: RelationParams

    def __post_init__(self) -> None:
        self.primitives: list[ScenePrimitive] = []
        self.hulls: list[Box2] = []
        self.anchors: list[Vec3] = []  # emulated noiseless lift anchors
        self.volumes: list[Box3] = []  # emulated noiseless lift volumes
        self._guards: list[tuple] = []  # (ray, protected t, owner id)

    def _boxes(self) -> list[Box3]:
        return [p.box for p in self.primitives]

    def _ancestors(self, base_id: int) -> frozenset[int]:
        chain = set()
        walk: int | None = base_id
        while walk is not None:
            chain.add(walk)
            walk = self.primitives[walk - 1].support_of
        return frozenset(chain)

    def _blocks_guard(self, box: Box3, exempt: frozenset[int]) -> bool:
        for ray, t_protect, owner in self._guards:
            if owner in exempt:
                continue
            t = ray_box_intersect(ray, box)
            if t is not None and t < t_protect - 1e-6:
                return True
        return False

    def _own_samples_clean(self, box: Box3, hull: Box2, required: int) -> bool:
        boxes = self._boxes() + [box]
        own = len(boxes) - 1
        clean = 0
        for ray in _sample_rays(hull, self.intrinsics, self.pose):
            if _first_hit(ray, boxes)[1] == own:
                clean += 1
        return clean >= required

    def _indicators_agree(
        self, box: Box3, lifted: tuple[Vec3, Box3], exempt: frozenset[int]
    ) -> bool:
        p = self.params
        user, forward = self.pose.position, self.pose.forward
        c_gt = box.center
        c_exp, vol = lifted

        def same_side(a: float, b: float, threshold: float, margin: float) -> bool:
            if (a <= threshold) != (b <= threshold):
                return False
            return abs(a - threshold) >= 0.01 and abs(b - threshold) >= margin

        if not same_side(
            c_gt.distance_to(user), c_exp.distance_to(user), p.reach_radius, 0.03
        ):
            return False
        fd_gt = (c_gt - user).dot(forward)
        fd_exp = (c_exp - user).dot(forward)
        for i, prim in enumerate(self.primitives):
            if (i + 1) in exempt:
                continue
            d_gt = c_gt.distance_to(prim.box.center)
            d_exp = c_exp.distance_to(self.anchors[i])
            # asymmetric slack: drifting into the proximity band is the
            # common failure, drifting out of it needs less head room
            m_dist = 0.06 if d_exp <= p.eps_h else 0.08
            if not same_side(d_gt, d_exp, p.eps_h, m_dist):
                return False
            g_gt = fd_gt - (prim.box.center - user).dot(forward)
            g_exp = fd_exp - (self.anchors[i] - user).dot(forward)
            # depth order has three stable states: in front, behind, level
            zone_gt = 0 if abs(g_gt) <= p.eps_depth else (1 if g_gt > 0 else -1)
            zone_exp = 0 if abs(g_exp) <= p.eps_depth else (1 if g_exp > 0 else -1)
            if zone_gt != zone_exp:
                return False
            if abs(abs(g_gt) - p.eps_depth) < 0.01:
                return False
            if zone_exp == 0:
                if p.eps_depth - abs(g_exp) < 0.06:
                    return False
            elif abs(g_exp) - p.eps_depth < 0.08:
                return False
            # line-of-sight occlusion must stay clear in both spaces, in both
            # roles, or sensor noise flips it
            if _segment_hits_box(user, self.anchors[i], _inflate(vol, 0.04)):
                return False
            if _segment_hits_box(user, prim.box.center, _inflate(box, 0.01)):
                return False
            if _segment_hits_box(user, c_exp, _inflate(self.volumes[i], 0.04)):
                return False
            if _segment_hits_box(user, c_gt, _inflate(prim.box, 0.01)):
                return False
        return True

    def admissible(
        self,
        box: Box3,
        guard_exempt: frozenset[int] = frozenset(),
        contact_exempt: frozenset[int] = frozenset(),
    ) -> tuple[Vec3, Box3] | None:
        """Expected lift result when the box can join the layout, else None.

        guard_exempt names placed objects whose depth samples this box may
        occlude; contact_exempt names objects whose pairwise thresholds are
        moot because a support relation will dominate the pair.
        """
        if self._blocks_guard(box, guard_exempt):
            return None
        hull = _visible_hull(box, self.intrinsics, self.pose)
        if hull is None:
            return None
        if not self._own_samples_clean(box, hull, required=5):
            return None
        lifted = _emulated_lift(hull, self._boxes() + [box], self.intrinsics, self.pose)
        if lifted is None:
            return None
        if not self._indicators_agree(box, lifted, contact_exempt):
            return None
        return lifted

    def add(self, label: str, box: Box3, support_of: int | None) -> bool:
        hull = _visible_hull(box, self.intrinsics, self.pose)
        if hull is None:
            return False
        boxes = self._boxes() + [box]
        lifted = _emulated_lift(hull, boxes, self.intrinsics, self.pose)
        if lifted is None:
            return False
        self.primitives.append(ScenePrimitive(label, box, support_of))
        self.hulls.append(hull)
        self.anchors.append(lifted[0])
        self.volumes.append(lifted[1])
        owner = len(self.primitives)
        for ray in _sample_rays(hull, self.intrinsics, self.pose):
            self._guards.append((ray, _first_hit(ray, boxes)[0], owner))
        return True

    def refresh_lift(self, obj_id: int) -> None:
        """Re-emulate after an exempted placement altered this object's view."""
        boxes = self._boxes()
        lifted = _emulated_lift(
            self.hulls[obj_id - 1], boxes, self.intrinsics, self.pose
        )
        if lifted is not None:
            self.anchors[obj_id - 1] = lifted[0]
            self.volumes[obj_id - 1] = lifted[1]
        # guard distances shrink to the occluder; anything nearer still blocks
        self._guards = [
            (ray, _first_hit(ray, boxes)[0] if owner == obj_id else t, owner)
            for ray, t, owner in self._guards
        ]

    def remove_last(self) -> None:
        owner = len(self.primitives)
        self.primitives.pop()
        self.hulls.pop()
        self.anchors.pop()
        self.volumes.pop()
        self._guards = [g for g in self._guards if g[2] != owner]

    def _contact_robust(
        self, cand: tuple[Vec3, Box3], base: tuple[Vec3, Box3]
    ) -> bool:
        """The support relation should survive noise: face gap, anchor offset,
        and footprint support all need slack beyond the bare predicate
        thresholds in emulated-lift space."""
        (cand_a, cand_v), (base_a, base_v) = cand, base
        bottom = cand_v.center.y - cand_v.half_extents.y
        top = base_v.center.y + base_v.half_extents.y
        if abs(bottom - top) > self.params.eps_z - 0.005:
            return False
        if math.hypot(cand_a.x - base_a.x, cand_a.z - base_a.z) > self.params.eps_h - 0.08:
            return False
        m = self.params.eps_support
        cx0 = cand_v.center.x - cand_v.half_extents.x
        cz0 = cand_v.center.z - cand_v.half_extents.z
        cx1 = cand_v.center.x + cand_v.half_extents.x
        cz1 = cand_v.center.z + cand_v.half_extents.z
        bx0 = base_v.center.x - base_v.half_extents.x - m
        bz0 = base_v.center.z - base_v.half_extents.z - m
        bx1 = base_v.center.x + base_v.half_extents.x + m
        bz1 = base_v.center.z + base_v.half_extents.z + m
        w = min(cx1, bx1) - max(cx0, bx0)
        d = min(cz1, bz1) - max(cz0, bz0)
        overlap = max(0.0, w) * max(0.0, d)
        return overlap >= 0.55 * (cx1 - cx0) * (cz1 - cz0)

    def contact_is_robust(self, cand_id: int, base_id: int) -> bool:
        return self._contact_robust(
            (self.anchors[cand_id - 1], self.volumes[cand_id - 1]),
            (self.anchors[base_id - 1], self.volumes[base_id - 1]),
        )

    def on_surface(
        self,
        base_id: int,
        half: Vec3,
        min_gap: float,
        max_center_offset: float,
        tries: int = 40,
        exempt: frozenset[int] = frozenset(),
        z_max: float | None = None,
        accept: Callable[[Box3, tuple[Vec3, Box3]], bool] | None = None,
    ) -> Box3 | None:
        """Stand a box of the given half extents on a placed box's top face."""
        base = self.primitives[base_id - 1].box
        top = base.center.y + base.half_extents.y
        limit_x = min(max_center_offset, base.half_extents.x - half.x - 0.03)
        limit_z = min(max_center_offset, base.half_extents.z - half.z - 0.03)
        hi_z = limit_z if z_max is None else min(limit_z, z_max)
        if limit_x <= 0 or hi_z <= -limit_z:
            return None
        base_lift = (self.anchors[base_id - 1], self.volumes[base_id - 1])
        ancestors = self._ancestors(base_id)
        for _ in range(tries):
            center = Vec3(
                base.center.x + _uniform(self.rng, -limit_x, limit_x),
                top + half.y,
                base.center.z + _uniform(self.rng, -limit_z, hi_z),
            )
            box = Box3(center, half)
            others = [
                p for i, p in enumerate(self.primitives) if (i + 1) not in ancestors
            ]
            if any(_footprint_gap(box, p.box) < min_gap for p in others):
                continue
            lifted = self.admissible(box, exempt, contact_exempt=frozenset({base_id}))
            if lifted is None:
                continue
            if not self._contact_robust(lifted, base_lift):
                continue
            if accept is not None and not accept(box, lifted):
                continue
            return box
        return None

    def on_floor(
        self, half: Vec3, tries: int = 140, near: Box3 | None = None
    ) -> Box3 | None:
        support = self.primitives[0].box
        for _ in range(tries):
            if near is None:
                center = Vec3(
                    support.center.x + _uniform(self.rng, -1.35, 1.35),
                    half.y,
                    support.center.z + _uniform(self.rng, -0.55, 0.95),
                )
            else:
                # beside the partner, close enough that the pair reads as
                # adjacent but with the mandatory footprint gap kept
                gap_lo = near.half_extents.x + half.x + 0.105
                dx = _uniform(self.rng, gap_lo, max(gap_lo + 0.005, 0.235))
                if self.rng.integers(0, 2):
                    dx = -dx
                center = Vec3(
                    near.center.x + dx,
                    half.y,
                    near.center.z + _uniform(self.rng, -0.015, 0.015),
                )
            box = Box3(center, half)
            if _footprint_gap(box, support) < 0.10:
                continue
            if any(_footprint_gap(box, p.box) < 0.10 for p in self.primitives):
                continue
            if self.admissible(box) is None:
                continue
            return box
        return None


def _sample_rays(hull: Box2, intrinsics: CameraIntrinsics, pose: PoseSE3):
    """The nine camera rays depth lifting will read for this detection,
    quantized to pixel centers the same way the lifter quantizes."""
    rays = []
    for px in sample_pixels(hull, LiftConfig().inset_fraction):
        u = min(int(round(px[0])), intrinsics.width - 1)
        v = min(int(round(px[1])), intrinsics.height - 1)
        rays.append(pixel_to_ray((float(u), float(v)), intrinsics, pose))
    return rays


def _emulated_lift(
    hull: Box2,
    boxes,
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
    cfg: LiftConfig = LiftConfig(),
) -> tuple[Vec3, Box3] | None:
    """What depth lifting will produce on a clean render of these boxes:
    same nine samples, same outlier rejection, analytic depths. Returns
    (anchor, volume) or None where the lifter would raise."""
    forward = pose.forward
    pixels = sample_pixels(hull, cfg.inset_fraction)
    sampled = []
    for px, ray in zip(pixels, _sample_rays(hull, intrinsics, pose)):
        t, _ = _first_hit(ray, boxes)
        if not math.isfinite(t):
            continue
        sampled.append((px, t * ray.direction.dot(forward)))
    if len(sampled) < cfg.min_valid_samples:
        return None
    depths = np.array([d for _, d in sampled])
    m = float(np.median(depths))
    band = cfg.mad_k * max(float(np.median(np.abs(depths - m))), 0.01)
    hits = [
        backproject(px, d, intrinsics, pose)
        for px, d in sampled
        if abs(d - m) <= band
    ]
    if len(hits) < cfg.min_valid_samples:
        return None
    pts = np.array([h.to_array() for h in hits])
    anchor = Vec3.from_array(pts.mean(axis=0))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    half = np.maximum((hi - lo) / 2.0, cfg.min_half_extent)
    return anchor, Box3(Vec3.from_array((lo + hi) / 2.0), Vec3.from_array(half))


def _first_hit(ray, boxes) -> tuple[float, int | None]:
    """Nearest box hit along the ray; falls through to the floor plane."""
    best_t, best_i = math.inf, None
    for j, box in enumerate(boxes):
        t = ray_box_intersect(ray, box)
        if t is not None and t < best_t:
            best_t, best_i = t, j
    if ray.direction.y < 0.0:
        t_floor = -ray.origin.y / ray.direction.y
        if 0.0 < t_floor < best_t:
            best_t, best_i = t_floor, None
    return best_t, best_i


def _sample_clean_counts(
    primitives: list[ScenePrimitive],
    hulls: list[Box2],
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
) -> list[int]:
    """For each object, how many of its nine lifting samples see the object
    itself rather than an occluder, the floor, or empty space."""
    boxes = [p.box for p in primitives]
    counts = []
    for index, hull in enumerate(hulls):
        clean = 0
        for ray in _sample_rays(hull, intrinsics, pose):
            if _first_hit(ray, boxes)[1] == index:
                clean += 1
        counts.append(clean)
    return counts


def _has_occlusion(
    primitives: list[ScenePrimitive],
    hulls: list[Box2],
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
) -> bool:
    """True when some object is partly hidden behind another from the
    camera, probed on a grid over each projected hull."""
    boxes = [p.box for p in primitives]
    for index, hull in enumerate(hulls):
        for fu in (0.2, 0.4, 0.6, 0.8):
            for fv in (0.2, 0.4, 0.6, 0.8):
                u = round(hull.x_min + fu * hull.width)
                v = round(hull.y_min + fv * hull.height)
                ray = pixel_to_ray((u, v), intrinsics, pose)
                t_self = ray_box_intersect(ray, boxes[index])
                if t_self is None:
                    continue
                t_first, i_first = _first_hit(ray, boxes)
                if i_first is not None and i_first != index and t_first < t_self - 1e-6:
                    return True
    return False


def _quote(label: str) -> str:
    return f'"{label}"' if " " in label else label


# ---------------------------------------------------------------- grounding

def ground_scene(
    scene: BenchmarkScene,
    frame: DepthFrame | None = None,
    params: RelationParams = RelationParams(),
    lift_config: LiftConfig = LiftConfig(),
):
    """Run the perception stack (ground-truth detector, depth lifting,
    relation inference) over a benchmark scene.

    Returns (graph, skipped) where skipped counts detections dropped for
    insufficient depth. Node ids equal GT object ids because detections
    arrive in GT order and the graph allocates sequentially from 1.
    """
    frame = frame if frame is not None else scene.frame
    detector = GroundTruthDetector(
        [(obj.label, obj.box) for obj in scene.objects],
        scene.intrinsics,
        scene.pose,
        box_jitter_sigma=scene.spec.noise.box_jitter_sigma,
        seed=scene.spec.seed,
    )
    proposer = GroundTruthLabelProposer([obj.label for obj in scene.objects])
    labels = proposer.propose_labels(ProposerRequest("", "bench")).labels
    detections = detector.detect(DetectorRequest(tuple(labels), "bench", 0.0))

    graph = SceneGraph(user_position=scene.user_position)
    skipped = 0
    for detection in detections:
        try:
            lifted = lift_detection(
                detection, frame, scene.intrinsics, scene.pose, lift_config
            )
        except InsufficientDepth:
            skipped += 1
            continue
        node_id = graph.allocate_id()
        graph.upsert_node(
            ObjectNode(
                node_id,
                detection.label,
                lifted.anchor,
                lifted.volume,
                detection.confidence,
                0.0,
            )
        )
    proposals = RuleBasedRelationProposer(scene.rules).propose_relations(graph, "")
    graph.set_edges(infer_relations(graph, proposals, params, scene.pose.forward))
    return graph, skipped


def _answer_queries(graph: SceneGraph, queries):
    """Evaluate authored queries against a grounded graph (no perception)."""
    session = QuerySession(
        graph,
        PerceptionInputs(
            DepthFrame(2, 2, np.zeros((2, 2), dtype=np.float32)),
            CameraIntrinsics(1.0, 1.0, 0.5, 0.5, 2, 2),
            PoseSE3.identity(),
        ),
        GroundTruthLabelProposer([]),
        GroundTruthDetector([], DEFAULT_INTRINSICS, PoseSE3.identity()),
        RuleBasedRelationProposer([]),
        clock=lambda: 0.0,
        broad_refresh_at=0.0,
    )
    return [session.run(q.text)[0] for q in queries]


# ---------------------------------------------------------------- authoring

def _author_queries(
    rng: np.random.Generator,
    objects: list[SceneObject],
    edges: tuple[RelationEdge, ...],
    surrogate: dict[int, Vec3],
) -> list[SceneQuery] | None:
    """Build at least one query per category; None when the layout cannot
    support some category with the required answer margins."""
    by_id = {obj.id: obj for obj in objects}
    label_ids: dict[str, list[int]] = {}
    for obj in objects:
        label_ids.setdefault(obj.label, []).append(obj.id)
    unique = [label for label, ids in label_ids.items() if len(ids) == 1]
    queries: list[SceneQuery] = []

    # Locate: up to two unique labels.
    if not unique:
        return None
    for label in list(rng.permutation(unique))[:2]:
        queries.append(
            SceneQuery(
                f"LOCATE {_quote(label)}",
                expected_ids=frozenset({label_ids[label][0]}),
            )
        )

    # Relate: group edges by (relation, dst with unique label).
    groups: dict[tuple[RelationType, int], set[int]] = {}
    for edge in edges:
        if by_id[edge.dst].label in unique:
            groups.setdefault((edge.relation, edge.dst), set()).add(edge.src)
    if not groups:
        return None
    keys = sorted(groups, key=lambda k: (k[0].value, k[1]))
    for rel, dst in [keys[int(i)] for i in rng.choice(len(keys), size=min(2, len(keys)), replace=False)]:
        queries.append(
            SceneQuery(
                f"RELATE {rel.value} {_quote(by_id[dst].label)}",
                expected_ids=frozenset(groups[(rel, dst)]),
            )
        )

    # Measure: two unique labels, expected distance between surrogate anchors.
    if len(unique) < 2:
        return None
    pair = [unique[int(i)] for i in rng.choice(len(unique), size=2, replace=False)]
    a, b = (label_ids[label][0] for label in pair)
    queries.append(
        SceneQuery(
            f"MEASURE DIST {_quote(pair[0])} {_quote(pair[1])}",
            expected_meters=surrogate[a].distance_to(surrogate[b]),
        )
    )

    # FilterWithin: anchor with a wide distance gap to cut through.
    filter_query = None
    for label in rng.permutation(unique):
        anchor_id = label_ids[label][0]
        dists = sorted(
            (surrogate[i].distance_to(surrogate[anchor_id]), i)
            for i in by_id
            if i != anchor_id
        )
        if len(dists) < 2:
            continue
        gaps = [
            (dists[k + 1][0] - dists[k][0], k) for k in range(len(dists) - 1)
        ]
        gap, k = max(gaps)
        if gap < _FILTER_MIN_GAP:
            continue
        radius_cm = int(round((dists[k][0] + dists[k + 1][0]) / 2.0 * 100.0))
        inside = frozenset(i for d, i in dists if d <= radius_cm / 100.0)
        if not inside:
            continue
        filter_query = SceneQuery(
            f"FILTER WITHIN {radius_cm}cm OF {_quote(label)}",
            expected_ids=inside,
        )
        break
    if filter_query is None:
        return None
    queries.append(filter_query)

    # Closest: prefer a duplicated label; demand a clear winner margin.
    closest_query = None
    multi = [label for label, ids in label_ids.items() if len(ids) > 1]
    for target_label in list(rng.permutation(multi)) + list(rng.permutation(unique)):
        for anchor_label in rng.permutation(unique):
            if anchor_label == target_label:
                continue
            anchor_id = label_ids[anchor_label][0]
            candidates = [i for i in label_ids[target_label] if i != anchor_id]
            if not candidates:
                continue
            ranked = sorted(
                (surrogate[i].distance_to(surrogate[anchor_id]), i)
                for i in candidates
            )
            if len(ranked) > 1 and ranked[1][0] - ranked[0][0] < _CLOSEST_MIN_MARGIN:
                continue
            closest_query = SceneQuery(
                f"CLOSEST {_quote(target_label)} TO {_quote(anchor_label)}",
                expected_ids=frozenset({ranked[0][1]}),
            )
            break
        if closest_query is not None:
            break
    if closest_query is None:
        return None
    queries.append(closest_query)
    return queries


# ---------------------------------------------------------------- generator

def generate_scene(spec: SceneSpec) -> BenchmarkScene:
    rng = np.random.default_rng(spec.seed)
    for _ in range(_MAX_ATTEMPTS):
        scene = _attempt_scene(spec, rng)
        if scene is not None:
            return scene
    raise GenerationFailed(
        f"no feasible {spec.difficulty} {spec.context} layout after "
        f"{_MAX_ATTEMPTS} attempts (seed {spec.seed})"
    )


def _attempt_scene(spec: SceneSpec, rng: np.random.Generator) -> BenchmarkScene | None:
    params = RelationParams()
    intr = spec.intrinsics
    lo, hi = spec.count_range()
    cluttered = spec.difficulty == "Cluttered"
    if cluttered and spec.object_count is None:
        # Big crowds are legal but expensive to lay out; bias the default
        # draw low and keep the full range reachable.
        total = lo + int(min(rng.integers(0, hi - lo + 1), rng.integers(0, hi - lo + 1)))
    else:
        total = int(rng.integers(lo, hi + 1))

    base_half = _SUPPORT_HALF[spec.context]
    scale = _uniform(rng, 0.9, 1.1)
    support_half = Vec3(base_half.x * scale, base_half.y * scale, base_half.z * scale)
    support_top = _SUPPORT_TOP_HEIGHT[spec.context] * _uniform(rng, 0.95, 1.05)
    support_center = Vec3(
        _uniform(rng, -0.1, 0.1), support_top - support_half.y, _uniform(rng, 0.35, 0.55)
    )
    support_box = Box3(support_center, support_half)

    if spec.camera is not None:
        pose = spec.camera
    else:
        eye = Vec3(
            support_center.x + _uniform(rng, -0.25, 0.25),
            _uniform(rng, 1.35, 1.65),
            support_center.z - _uniform(rng, 1.3, 1.6),
        )
        target = Vec3(
            support_center.x + _uniform(rng, -0.1, 0.1),
            support_center.y + support_half.y,
            support_center.z + _uniform(rng, -0.1, 0.1),
        )
        pose = look_at_pose(eye, target)
    user = pose.position
    forward = pose.forward

    ctx = _Placement(rng, intr, pose, params)
    if not ctx.add(_SUPPORT_LABEL[spec.context], support_box, None):
        return None

    # Budget: the support hosts the stack when cluttered (riser + elevated
    # object crowd out anything else within the pairwise-threshold dead
    # zones); when tidy the support hosts the small items instead.
    riser_count = 2 if cluttered else 0
    on_support = 0 if cluttered else 1
    floor_count = total - 1 - riser_count - on_support

    pool = [str(lbl) for lbl in rng.permutation(_LABEL_POOL[spec.context])]

    if cluttered:
        # Riser and elevated object stand or fall together: most riser spots
        # leave no workable position for the object on top, so retry the pair.
        top_label = pool.pop()
        for _ in range(6):
            riser_half = Vec3(
                _uniform(rng, 0.08, 0.11),
                _uniform(rng, 0.15, 0.18),
                _uniform(rng, 0.08, 0.11),
            )
            # Kept on the camera side of the support's centre: the elevated
            # object's depth-order indicator against the support needs the
            # clearance, and the support's own lifted anchor already sits
            # toward the camera. A tall box there shades some of the support's
            # depth samples, so the support is the second sanctioned
            # contamination; each candidate is vetted against the shaded
            # support lift before it is committed.
            def riser_ok(box: Box3, lifted: tuple[Vec3, Box3]) -> bool:
                shaded = _emulated_lift(ctx.hulls[0], ctx._boxes() + [box], intr, pose)
                return shaded is not None and ctx._contact_robust(lifted, shaded)

            riser_box = ctx.on_surface(
                1, riser_half, min_gap=0.02, max_center_offset=0.25,
                exempt=frozenset({1}), z_max=0.0, accept=riser_ok,
            )
            if riser_box is None or not ctx.add(_RISER_LABEL[spec.context], riser_box, 1):
                continue
            riser_id = len(ctx.primitives)
            ctx.refresh_lift(1)

            def unwind(count: int) -> None:
                for _ in range(count):
                    ctx.remove_last()
                ctx.refresh_lift(1)  # restore the support's unshaded lift
            # The elevated object is the one placement allowed to shade its
            # base's depth samples; it is kept thin so the contamination stays
            # inside the face-contact tolerance.
            top_half = Vec3(
                _uniform(rng, 0.035, riser_half.x - 0.04),
                _uniform(rng, 0.015, 0.02),
                _uniform(rng, 0.035, riser_half.z - 0.04),
            )
            top_box = ctx.on_surface(
                riser_id, top_half, min_gap=0.02, max_center_offset=0.05, tries=12,
                exempt=frozenset({riser_id}),
            )
            if top_box is None:
                unwind(1)
                continue
            if not ctx.add(top_label, top_box, riser_id):
                unwind(1)
                continue
            ctx.refresh_lift(riser_id)
            # contamination moved the riser's predicted lift; both support
            # contacts must still hold with slack
            top_id = len(ctx.primitives)
            if not (
                ctx.contact_is_robust(top_id, riser_id)
                and ctx.contact_is_robust(riser_id, 1)
            ):
                unwind(2)
                continue
            break
        else:
            return None

    for _ in range(on_support):
        half = Vec3(
            _uniform(rng, 0.03, 0.08),
            _uniform(rng, 0.015, 0.04),
            _uniform(rng, 0.03, 0.08),
        )
        box = ctx.on_surface(
            1, half,
            min_gap=0.05 if not cluttered else 0.02,
            max_center_offset=0.25,
            tries=60 if cluttered else 40,
        )
        if box is None or not ctx.add(pool.pop(), box, 1):
            return None

    floor_labels = [pool.pop() for _ in range(floor_count)]
    paired = floor_count >= 2
    if paired:
        # A duplicated label placed as an adjacent pair: Closest gets a real
        # choice to make and the pair stands side by side.
        floor_labels[0] = floor_labels[1] = _FLOOR_LABEL[spec.context]
    partner: Box3 | None = None
    for k, label in enumerate(floor_labels):
        if paired and k < 2:
            half = Vec3(
                _uniform(rng, 0.045, 0.055),
                _uniform(rng, 0.06, 0.08),
                _uniform(rng, 0.045, 0.055),
            )
        else:
            half = Vec3(
                _uniform(rng, 0.05, 0.11),
                _uniform(rng, 0.06, 0.12),
                _uniform(rng, 0.05, 0.11),
            )
        box = ctx.on_floor(half, near=partner if (paired and k == 1) else None)
        if box is None or not ctx.add(label, box, None):
            return None
        if paired and k == 0:
            partner = box

    primitives, hulls = ctx.primitives, ctx.hulls
    clean = _sample_clean_counts(primitives, hulls, intr, pose)
    # The support may lose samples to the things standing on it; small
    # objects need a solid majority of unobstructed samples to lift well.
    if clean[0] < 3 or any(c < 5 for c in clean[1:]):
        return None
    if cluttered and not _has_occlusion(primitives, hulls, intr, pose):
        return None  # cluttered scenes must actually exhibit occlusion

    objects = [
        SceneObject(i + 1, prim.label, prim.box.center, prim.box.half_extents, hulls[i])
        for i, prim in enumerate(primitives)
    ]
    # Re-emulate every lift against the final layout. Guard rays keep earlier
    # anchors stable, but the one sanctioned contamination (the elevated
    # object over its base) means a final pass is the honest prediction.
    boxes = [o.box for o in objects]
    emulated: dict[int, tuple[Vec3, Box3]] = {}
    for obj, hull in zip(objects, hulls):
        lifted = _emulated_lift(hull, boxes, intr, pose)
        if lifted is None:
            return None
        emulated[obj.id] = lifted
    surrogate = {i: anchor for i, (anchor, _) in emulated.items()}

    # Nearest-neighbor winners must agree between ground-truth centers and
    # predicted anchors, and the predicted winner needs a lead wide enough to
    # survive sensor noise.
    ids = [obj.id for obj in objects]
    centers = {obj.id: obj.center for obj in objects}
    for j in ids:
        gt_win = min((centers[i].distance_to(centers[j]), i) for i in ids if i != j)
        sur = sorted((surrogate[i].distance_to(surrogate[j]), i) for i in ids if i != j)
        if gt_win[1] != sur[0][1]:
            return None
        if len(sur) > 1 and sur[1][0] - sur[0][0] < 0.10:
            return None

    # Ground-truth edges: the production inference on exact geometry.
    rules = _CONTEXT_RULES[spec.context]
    gt_graph = SceneGraph(user_position=user)
    for obj in objects:
        gt_graph.upsert_node(
            ObjectNode(obj.id, obj.label, obj.center, obj.box, 1.0, 0.0)
        )
    proposals = RuleBasedRelationProposer(rules).propose_relations(gt_graph, "")
    gt_edges = tuple(infer_relations(gt_graph, proposals, params, forward))

    # Cheap rehearsal of the expensive check below: inference on the predicted
    # lift results must reproduce the ground-truth edges before we bother
    # rendering depth and running the real pipeline.
    emu_graph = SceneGraph(user_position=user)
    for obj in objects:
        anchor, volume = emulated[obj.id]
        emu_graph.upsert_node(ObjectNode(obj.id, obj.label, anchor, volume, 1.0, 0.0))
    emu_edges = infer_relations(emu_graph, proposals, params, forward)
    if set(emu_edges) != set(gt_edges):
        return None

    queries = _author_queries(rng, objects, gt_edges, surrogate)
    if queries is None:
        return None

    # Verify against a noise-free twin: the engine must reproduce ground
    # truth exactly from a clean render and clean detections. Sensor noise is
    # attached afterwards; the stored answers stay the clean ones.
    scene = BenchmarkScene(
        spec=replace(spec, camera=pose, object_count=None, noise=NoiseSpec()),
        intrinsics=intr,
        pose=pose,
        frame=render_depth([o.box for o in objects], intr, pose),
        user_position=user,
        objects=tuple(objects),
        edges=gt_edges,
        rules=rules,
        queries=tuple(queries),
    )
    graph, skipped = ground_scene(scene)
    if skipped or sorted(graph.nodes) != [o.id for o in objects]:
        return None
    if set(graph.edges) != set(gt_edges):
        return None
    answers = _answer_queries(graph, queries)
    for query, answer in zip(queries, answers):
        if query.expected_ids is not None:
            if getattr(answer, "ids", None) != query.expected_ids:
                return None
        else:
            meters = getattr(answer, "meters", None)
            if meters is None or abs(meters - query.expected_meters) > _MEASURE_VERIFY_TOL:
                return None

    noise = spec.noise
    if noise != NoiseSpec():
        frame = scene.frame
        if noise.depth_sigma > 0 or noise.dropout_fraction > 0:
            frame = render_depth(
                [o.box for o in objects],
                intr,
                pose,
                depth_sigma=noise.depth_sigma,
                dropout_fraction=noise.dropout_fraction,
                rng=rng,
            )
        scene = replace(
            scene, spec=replace(scene.spec, noise=noise), frame=frame
        )
    return scene


# ---------------------------------------------------------------- file I/O

def _vec(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def _require_keys(obj: dict, where: str, required: tuple, optional: tuple = ()):
    if not isinstance(obj, dict):
        raise SceneFormatError(f"{where} must be an object")
    missing = [k for k in required if k not in obj]
    unknown = [k for k in obj if k not in required and k not in optional]
    if missing:
        raise SceneFormatError(f"{where} missing keys: {', '.join(missing)}")
    if unknown:
        raise SceneFormatError(f"{where} has unknown keys: {', '.join(unknown)}")


def scene_to_json(scene: BenchmarkScene) -> str:
    spec = scene.spec
    queries = []
    for q in scene.queries:
        if q.expected_ids is not None:
            expected = {"kind": "objects", "ids": sorted(q.expected_ids)}
        else:
            expected = {"kind": "distance", "meters": q.expected_meters}
        queries.append({"text": q.text, "expected": expected})
    payload = {
        "version": 1,
        "spec": {
            "context": spec.context,
            "difficulty": spec.difficulty,
            "seed": spec.seed,
            "noise": {
                "depth_sigma": spec.noise.depth_sigma,
                "box_jitter_sigma": spec.noise.box_jitter_sigma,
                "dropout_fraction": spec.noise.dropout_fraction,
            },
        },
        "intrinsics": {
            "fx": scene.intrinsics.fx,
            "fy": scene.intrinsics.fy,
            "cx": scene.intrinsics.cx,
            "cy": scene.intrinsics.cy,
            "width": scene.intrinsics.width,
            "height": scene.intrinsics.height,
        },
        "pose": {
            "rotation": [float(x) for x in scene.pose.rotation.reshape(-1)],
            "translation": _vec(scene.pose.translation),
        },
        "depth": {
            "width": scene.frame.width,
            "height": scene.frame.height,
            "encoding": "base64-le-f32",
            "data": base64.b64encode(
                np.ascontiguousarray(scene.frame.depth, dtype="<f4").tobytes()
            ).decode("ascii"),
        },
        "user_position": _vec(scene.user_position),
        "objects": [
            {
                "id": o.id,
                "label": o.label,
                "center": _vec(o.center),
                "half_extents": _vec(o.half_extents),
                "box2": [o.box2.x_min, o.box2.y_min, o.box2.x_max, o.box2.y_max],
            }
            for o in scene.objects
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "rel": e.relation.value, "conf": e.confidence}
            for e in scene.edges
        ],
        "rules": [
            {
                "src_label": r.src_label,
                "dst_label": r.dst_label,
                "rel": r.relation.value,
                "score": r.score,
            }
            for r in scene.rules
        ],
        "queries": queries,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def save_scene(scene: BenchmarkScene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene_to_json(scene))


def _parse_relation(token, where: str) -> RelationType:
    try:
        return RelationType.from_token(str(token))
    except InputError as exc:
        raise SceneFormatError(f"{where}: {exc}") from None


def scene_from_json(text: str) -> BenchmarkScene:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"not valid JSON: {exc}") from None
    _require_keys(
        payload,
        "scene",
        (
            "version", "spec", "intrinsics", "pose", "depth", "user_position",
            "objects", "edges", "rules", "queries",
        ),
    )
    if payload["version"] != 1:
        raise SceneFormatError(f"unsupported version {payload['version']!r}")

    _require_keys(payload["spec"], "spec", ("context", "difficulty", "seed", "noise"))
    noise_json = payload["spec"]["noise"]
    _require_keys(
        noise_json, "spec.noise", ("depth_sigma", "box_jitter_sigma", "dropout_fraction")
    )
    _require_keys(
        payload["intrinsics"], "intrinsics", ("fx", "fy", "cx", "cy", "width", "height")
    )
    _require_keys(payload["pose"], "pose", ("rotation", "translation"))
    _require_keys(payload["depth"], "depth", ("width", "height", "encoding", "data"))

    intr_json = payload["intrinsics"]
    try:
        intrinsics = CameraIntrinsics(
            float(intr_json["fx"]), float(intr_json["fy"]),
            float(intr_json["cx"]), float(intr_json["cy"]),
            int(intr_json["width"]), int(intr_json["height"]),
        )
        rotation = np.array(payload["pose"]["rotation"], dtype=np.float64)
        if rotation.shape != (9,):
            raise SceneFormatError("pose.rotation must hold 9 numbers")
        pose = PoseSE3(rotation.reshape(3, 3), Vec3(*payload["pose"]["translation"]))
    except InputError as exc:
        raise SceneFormatError(str(exc)) from None

    depth_json = payload["depth"]
    if depth_json["encoding"] != "base64-le-f32":
        raise SceneFormatError(f"unknown depth encoding {depth_json['encoding']!r}")
    raw = base64.b64decode(depth_json["data"])
    w, h = int(depth_json["width"]), int(depth_json["height"])
    if len(raw) != w * h * 4:
        raise SceneFormatError(
            f"depth data holds {len(raw)} bytes, expected {w * h * 4}"
        )
    depth = np.frombuffer(raw, dtype="<f4").reshape(h, w)
    frame = DepthFrame(w, h, depth)

    spec_json = payload["spec"]
    spec = SceneSpec(
        context=spec_json["context"],
        difficulty=spec_json["difficulty"],
        seed=int(spec_json["seed"]),
        camera=pose,
        intrinsics=intrinsics,
        noise=NoiseSpec(
            float(noise_json["depth_sigma"]),
            float(noise_json["box_jitter_sigma"]),
            float(noise_json["dropout_fraction"]),
        ),
    )

    objects = []
    for i, obj in enumerate(payload["objects"]):
        _require_keys(
            obj, f"objects[{i}]", ("id", "label", "center", "half_extents", "box2")
        )
        box2 = obj["box2"]
        if not (isinstance(box2, list) and len(box2) == 4):
            raise SceneFormatError(f"objects[{i}].box2 must hold 4 numbers")
        try:
            objects.append(
                SceneObject(
                    int(obj["id"]),
                    str(obj["label"]),
                    Vec3(*obj["center"]),
                    Vec3(*obj["half_extents"]),
                    Box2(*(float(v) for v in box2)),
                )
            )
        except InputError as exc:
            raise SceneFormatError(f"objects[{i}]: {exc}") from None

    known_ids = {o.id for o in objects}
    edges = []
    for i, edge in enumerate(payload["edges"]):
        _require_keys(edge, f"edges[{i}]", ("src", "dst", "rel", "conf"))
        if edge["src"] not in known_ids or edge["dst"] not in known_ids:
            raise SceneFormatError(f"edges[{i}] references unknown object ids")
        try:
            edges.append(
                RelationEdge(
                    int(edge["src"]),
                    int(edge["dst"]),
                    _parse_relation(edge["rel"], f"edges[{i}]"),
                    float(edge["conf"]),
                )
            )
        except InputError as exc:
            raise SceneFormatError(f"edges[{i}]: {exc}") from None

    rules = []
    for i, rule in enumerate(payload["rules"]):
        _require_keys(rule, f"rules[{i}]", ("src_label", "dst_label", "rel", "score"))
        try:
            rules.append(
                RelationRule(
                    str(rule["src_label"]),
                    str(rule["dst_label"]),
                    _parse_relation(rule["rel"], f"rules[{i}]"),
                    float(rule["score"]),
                )
            )
        except InputError as exc:
            raise SceneFormatError(f"rules[{i}]: {exc}") from None

    queries = []
    for i, q in enumerate(payload["queries"]):
        _require_keys(q, f"queries[{i}]", ("text", "expected"))
        expected = q["expected"]
        _require_keys(expected, f"queries[{i}].expected", ("kind",), ("ids", "meters"))
        if expected["kind"] == "objects":
            if "ids" not in expected:
                raise SceneFormatError(f"queries[{i}].expected needs ids")
            if not set(expected["ids"]) <= known_ids:
                raise SceneFormatError(f"queries[{i}] references unknown object ids")
            queries.append(
                SceneQuery(str(q["text"]), expected_ids=frozenset(int(v) for v in expected["ids"]))
            )
        elif expected["kind"] == "distance":
            if "meters" not in expected:
                raise SceneFormatError(f"queries[{i}].expected needs meters")
            queries.append(
                SceneQuery(str(q["text"]), expected_meters=float(expected["meters"]))
            )
        else:
            raise SceneFormatError(
                f"queries[{i}].expected.kind must be objects or distance"
            )

    return BenchmarkScene(
        spec=spec,
        intrinsics=intrinsics,
        pose=pose,
        frame=frame,
        user_position=Vec3(*payload["user_position"]),
        objects=tuple(objects),
        edges=tuple(edges),
        rules=tuple(rules),
        queries=tuple(queries),
    )


def load_scene(path) -> BenchmarkScene:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_json(fh.read())
