"""Unoptimized reference for relation inference.

Deliberately plain: explicit loops, inline predicate arithmetic, no reuse
of production scoring code. The fused-score expression mirrors the
production arithmetic term for term so confidences compare bit-equal.
"""

from __future__ import annotations

import math

from ..errors import InputError
from ..graph import RelationEdge, RelationType, SceneGraph

SPATIAL = list(RelationType)[:7]
HIGH_LEVEL = list(RelationType)[7:]


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _rests_on(top_node, base_node, params) -> bool:
    # face gap between the top object's bottom and the base object's top
    gap = (top_node.volume.center.y - top_node.volume.half_extents.y) - (
        base_node.volume.center.y + base_node.volume.half_extents.y
    )
    if abs(gap) > params.eps_z:
        return False
    dx = top_node.anchor.x - base_node.anchor.x
    dz = top_node.anchor.z - base_node.anchor.z
    if math.sqrt(dx * dx + dz * dz) > params.eps_h:
        return False
    # footprint of the top object against the slightly grown base footprint
    ax0 = top_node.volume.center.x - top_node.volume.half_extents.x
    ax1 = top_node.volume.center.x + top_node.volume.half_extents.x
    az0 = top_node.volume.center.z - top_node.volume.half_extents.z
    az1 = top_node.volume.center.z + top_node.volume.half_extents.z
    bx0 = base_node.volume.center.x - base_node.volume.half_extents.x - params.eps_support
    bx1 = base_node.volume.center.x + base_node.volume.half_extents.x + params.eps_support
    bz0 = base_node.volume.center.z - base_node.volume.half_extents.z - params.eps_support
    bz1 = base_node.volume.center.z + base_node.volume.half_extents.z + params.eps_support
    ox = min(ax1, bx1) - max(ax0, bx0)
    oz = min(az1, bz1) - max(az0, bz0)
    overlap = (ox if ox > 0.0 else 0.0) * (oz if oz > 0.0 else 0.0)
    own = (ax1 - ax0) * (az1 - az0)
    return overlap >= params.footprint_overlap_min * own


def _segment_blocked(user, target, box) -> bool:
    tmin, tmax = 0.0, 1.0
    for lo, hi, o, e in (
        (box.min_corner.x, box.max_corner.x, user.x, target.x),
        (box.min_corner.y, box.max_corner.y, user.y, target.y),
        (box.min_corner.z, box.max_corner.z, user.z, target.z),
    ):
        d = e - o
        if abs(d) < 1e-12:
            if o < lo or o > hi:
                return False
            continue
        a = (lo - o) / d
        b = (hi - o) / d
        tmin = max(tmin, min(a, b))
        tmax = min(tmax, max(a, b))
    return tmin < tmax


def _spatial_indicator(
    rel: RelationType, graph: SceneGraph, i_id: int, j_id: int, params, view_forward
) -> int:
    i = graph.nodes[i_id]
    j = graph.nodes[j_id]
    user = graph.user_position
    if rel is RelationType.ON:
        return 1 if _rests_on(i, j, params) else 0
    if rel is RelationType.UNDER:
        return 1 if _rests_on(j, i, params) else 0
    if rel is RelationType.NEXT_TO:
        close = i.anchor.distance_to(j.anchor) <= params.eps_h
        stacked = _rests_on(i, j, params) or _rests_on(j, i, params)
        return 1 if close and not stacked else 0
    if rel is RelationType.BEHIND:
        depth_i = (i.anchor - user).dot(view_forward)
        depth_j = (j.anchor - user).dot(view_forward)
        return 1 if depth_i > depth_j + params.eps_depth else 0
    if rel is RelationType.WITHIN_REACH:
        return 1 if i.anchor.distance_to(user) <= params.reach_radius else 0
    if rel is RelationType.CLOSEST_TO:
        distances = {}
        for k_id in graph.nodes:
            if k_id != j_id:
                distances[k_id] = graph.nodes[k_id].anchor.distance_to(j.anchor)
        nearest = min(distances.values())
        winners = [k for k, d in distances.items() if d == nearest]
        return 1 if min(winners) == i_id else 0
    if rel is RelationType.BLOCKING:
        return 1 if _segment_blocked(user, j.anchor, i.volume) else 0
    raise AssertionError(rel)


def brute_force_oracle(graph, proposals, params, view_forward) -> set[RelationEdge]:
    proposal_scores: dict[tuple[int, int, RelationType], float] = {}
    for p in proposals:
        if p.src not in graph.nodes or p.dst not in graph.nodes:
            raise InputError(f"proposal ({p.src}, {p.dst}) references a missing node")
        if p.src == p.dst:
            raise InputError(f"proposal self-loop on node {p.src}")
        key = (p.src, p.dst, p.relation)
        if key not in proposal_scores or p.score > proposal_scores[key]:
            proposal_scores[key] = p.score

    selected: dict[tuple[int, int], RelationEdge] = {}
    for i_id in graph.nodes:
        for j_id in graph.nodes:
            if i_id == j_id:
                continue
            best_rel = None
            best_gamma = None
            for rel in RelationType:
                if rel in SPATIAL:
                    s_geo = _spatial_indicator(rel, graph, i_id, j_id, params, view_forward)
                else:
                    s_geo = 0
                s_llm = proposal_scores.get((i_id, j_id, rel), 0.0)
                gamma = _sigmoid(params.alpha * s_llm + (1.0 - params.alpha) * s_geo)
                if best_gamma is None or gamma > best_gamma:
                    best_rel = rel
                    best_gamma = gamma
            if best_gamma >= params.tau:
                selected[(i_id, j_id)] = RelationEdge(i_id, j_id, best_rel, best_gamma)

    for (i_id, j_id), edge in list(selected.items()):
        if edge.relation in (RelationType.STRUCTURAL, RelationType.INTERACTION):
            if (j_id, i_id) not in selected:
                selected[(j_id, i_id)] = RelationEdge(
                    j_id, i_id, edge.relation, edge.confidence
                )
    return set(selected.values())
