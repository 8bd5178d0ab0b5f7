"""Shared builders for randomized world-model test instances."""

from __future__ import annotations

import math

import numpy as np

from grounded_world.geometry import (
    Box3,
    CameraIntrinsics,
    DepthFrame,
    Plane,
    PoseSE3,
    Vec3,
    pixel_to_ray,
    ray_box_intersect,
    ray_plane_intersect,
)
from grounded_world.graph import ObjectNode, RelationType, SceneGraph
from grounded_world.relations import RelationParams, SemanticProposal

FLOOR = Plane(Vec3(0.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0))


def render_frame(
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
    boxes=(),
    floor: Plane | None = FLOOR,
) -> DepthFrame:
    """Analytic per-pixel reference renderer: nearest ray hit as forward depth."""
    depth = np.zeros((intrinsics.height, intrinsics.width), dtype=np.float32)
    forward = pose.forward
    for v in range(intrinsics.height):
        for u in range(intrinsics.width):
            ray = pixel_to_ray((u, v), intrinsics, pose)
            best = math.inf
            for box in boxes:
                t = ray_box_intersect(ray, box)
                if t is not None and t < best:
                    best = t
            if floor is not None:
                t = ray_plane_intersect(ray, floor)
                if t is not None and t < best:
                    best = t
            if math.isfinite(best):
                depth[v, u] = best * ray.direction.dot(forward)
    return DepthFrame(intrinsics.width, intrinsics.height, depth)

LABEL_POOL = ["mug", "pen", "lamp", "box", "plant", "cable", "monitor", "bottle"]
ALL_RELATIONS = list(RelationType)


def make_node(node_id, label, x, y, z, half=0.05, conf=0.9, seen=0.0):
    center = Vec3(float(x), float(y), float(z))
    extents = Vec3(half, half, half) if isinstance(half, float) else half
    return ObjectNode(node_id, label, center, Box3(center, extents), conf, seen)


def random_scene(rng: np.random.Generator, max_nodes: int = 8):
    """Random graph with occasional stacked pairs so On/Under get exercised."""
    graph = SceneGraph(user_position=Vec3(*(float(v) for v in rng.uniform(-2, 2, 3))))
    count = int(rng.integers(1, max_nodes + 1))
    ids = [int(i) for i in rng.choice(np.arange(1, 60), size=count, replace=False)]
    prev_id = None
    for node_id in ids:
        half = Vec3(*(float(v) for v in rng.uniform(0.02, 0.25, 3)))
        if prev_id is not None and rng.random() < 0.35:
            base = graph.nodes[prev_id].volume
            center = Vec3(
                base.center.x + float(rng.uniform(-0.05, 0.05)),
                base.center.y + base.half_extents.y + half.y + float(rng.uniform(-0.02, 0.02)),
                base.center.z + float(rng.uniform(-0.05, 0.05)),
            )
        else:
            center = Vec3(*(float(v) for v in rng.uniform(-1.5, 1.5, 3)))
        label = LABEL_POOL[int(rng.integers(0, len(LABEL_POOL)))]
        graph.upsert_node(
            ObjectNode(node_id, label, center, Box3(center, half),
                       float(rng.uniform(0.4, 1.0)), 0.0)
        )
        prev_id = node_id
    theta = float(rng.uniform(0.0, 2.0 * math.pi))
    pitch = float(rng.uniform(-0.3, 0.3))
    forward = Vec3(
        math.cos(pitch) * math.cos(theta),
        math.sin(pitch),
        math.cos(pitch) * math.sin(theta),
    )
    return graph, forward


def random_proposals(rng: np.random.Generator, graph: SceneGraph):
    ids = sorted(graph.nodes)
    proposals = []
    if len(ids) >= 2:
        for _ in range(int(rng.integers(0, 6))):
            src, dst = (int(v) for v in rng.choice(ids, size=2, replace=False))
            rel = ALL_RELATIONS[int(rng.integers(0, len(ALL_RELATIONS)))]
            proposals.append(SemanticProposal(src, dst, rel, float(rng.uniform(0, 1))))
    return proposals


def random_params(rng: np.random.Generator) -> RelationParams:
    alpha = [0.0, 0.3, 0.5, 1.0][int(rng.integers(0, 4))]
    tau = [0.5, 0.6, 0.7][int(rng.integers(0, 3))]
    return RelationParams(alpha=alpha, tau=tau)
