"""Relation inference: binary geometric predicates fused with semantic
proposals through a logistic squash, one argmax edge per ordered pair.

Conventions. The up axis is world +y. Horizontal quantities live in the
(x, z) plane. "Forward depth" of a point is its component along the
viewer's forward direction measured from the user position. A reference
implementation with the same contract lives in grounded_world.reference;
the two must never share scoring helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import InputError
from .geometry import Box3, Vec3
from .graph import ObjectNode, RelationEdge, RelationType, SceneGraph


@dataclass(frozen=True)
class RelationParams:
    alpha: float = 0.5
    tau: float = 0.6
    reach_radius: float = 0.75
    eps_z: float = 0.05
    eps_h: float = 0.30
    eps_depth: float = 0.10
    eps_support: float = 0.03
    footprint_overlap_min: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError(f"alpha {self.alpha} outside [0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise InputError(f"tau {self.tau} outside (0, 1)")
        for name in ("reach_radius", "eps_z", "eps_h", "eps_depth", "eps_support"):
            if getattr(self, name) < 0.0:
                raise InputError(f"{name} must be non-negative")
        if not 0.0 <= self.footprint_overlap_min <= 1.0:
            raise InputError("footprint_overlap_min outside [0, 1]")


@dataclass(frozen=True)
class SemanticProposal:
    """A proposed (src, dst, relation) with score clamped into [0, 1]."""

    src: int
    dst: int
    relation: RelationType
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise InputError("proposal score must be finite")
        object.__setattr__(self, "score", min(1.0, max(0.0, self.score)))


@dataclass(frozen=True, eq=False)
class ScoredPair:
    src: int
    dst: int
    scores: Mapping[RelationType, float]

    def best(self) -> tuple[RelationType, float]:
        """Argmax relation; ties resolve to earliest declaration order."""
        best_rel, best_score = None, -1.0
        for rel in RelationType:
            if self.scores[rel] > best_score:
                best_rel, best_score = rel, self.scores[rel]
        return best_rel, best_score


def fuse(s_llm: float, s_geo: float, alpha: float) -> float:
    """Logistic of the convex combination of semantic and geometric scores."""
    return 1.0 / (1.0 + math.exp(-(alpha * s_llm + (1.0 - alpha) * s_geo)))


def _footprint(box: Box3) -> tuple[float, float, float, float]:
    c, h = box.center, box.half_extents
    return (c.x - h.x, c.z - h.z, c.x + h.x, c.z + h.z)


def _footprint_overlap(a: tuple, b: tuple) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    d = min(a[3], b[3]) - max(a[1], b[1])
    return max(0.0, w) * max(0.0, d)


def _horizontal_offset(a: Vec3, b: Vec3) -> float:
    return math.hypot(a.x - b.x, a.z - b.z)


def _on(i: ObjectNode, j: ObjectNode, params: RelationParams) -> bool:
    """i rests on j: near-zero face gap, close anchors, supported footprint."""
    bottom_i = i.volume.center.y - i.volume.half_extents.y
    top_j = j.volume.center.y + j.volume.half_extents.y
    if abs(bottom_i - top_j) > params.eps_z:
        return False
    if _horizontal_offset(i.anchor, j.anchor) > params.eps_h:
        return False
    fp_i = _footprint(i.volume)
    fx0, fz0, fx1, fz1 = _footprint(j.volume)
    m = params.eps_support
    fp_j = (fx0 - m, fz0 - m, fx1 + m, fz1 + m)
    area_i = (fp_i[2] - fp_i[0]) * (fp_i[3] - fp_i[1])
    return _footprint_overlap(fp_i, fp_j) >= params.footprint_overlap_min * area_i


def _segment_hits_box(origin: Vec3, target: Vec3, box: Box3) -> bool:
    """True when the open segment origin->target passes through box."""
    o = (origin.x, origin.y, origin.z)
    d = (target.x - origin.x, target.y - origin.y, target.z - origin.z)
    lo = (box.min_corner.x, box.min_corner.y, box.min_corner.z)
    hi = (box.max_corner.x, box.max_corner.y, box.max_corner.z)
    t_enter, t_exit = 0.0, 1.0
    for axis in range(3):
        if abs(d[axis]) < 1e-12:
            if not lo[axis] <= o[axis] <= hi[axis]:
                return False
            continue
        t0 = (lo[axis] - o[axis]) / d[axis]
        t1 = (hi[axis] - o[axis]) / d[axis]
        if t0 > t1:
            t0, t1 = t1, t0
        t_enter = max(t_enter, t0)
        t_exit = min(t_exit, t1)
    return t_enter < t_exit


def geometric_scores(
    graph: SceneGraph,
    src_id: int,
    dst_id: int,
    params: RelationParams,
    view_forward: Vec3,
) -> dict[RelationType, int]:
    """Binary geometric evidence for the ordered pair (src, dst). High-level
    relation types always score 0 here."""
    if src_id == dst_id:
        raise InputError("geometric scores need a pair of distinct nodes")
    i = graph.nodes[src_id]
    j = graph.nodes[dst_id]
    user = graph.user_position

    scores = dict.fromkeys(RelationType, 0)

    on = _on(i, j, params)
    under = _on(j, i, params)
    scores[RelationType.ON] = int(on)
    scores[RelationType.UNDER] = int(under)

    d_ij = i.anchor.distance_to(j.anchor)
    if d_ij <= params.eps_h and not (on or under):
        scores[RelationType.NEXT_TO] = 1

    fd_i = (i.anchor - user).dot(view_forward)
    fd_j = (j.anchor - user).dot(view_forward)
    if fd_i > fd_j + params.eps_depth:
        scores[RelationType.BEHIND] = 1

    if i.anchor.distance_to(user) <= params.reach_radius:
        scores[RelationType.WITHIN_REACH] = 1

    # closest-to: src is the argmin-distance neighbor of dst, ties to lowest id
    best = None
    for k_id in graph.nodes:
        if k_id == dst_id:
            continue
        cand = (graph.nodes[k_id].anchor.distance_to(j.anchor), k_id)
        if best is None or cand < best:
            best = cand
    if best is not None and best[1] == src_id:
        scores[RelationType.CLOSEST_TO] = 1

    if _segment_hits_box(user, j.anchor, i.volume):
        scores[RelationType.BLOCKING] = 1

    return scores


def _proposal_lookup(
    graph: SceneGraph, proposals: Iterable[SemanticProposal]
) -> dict[tuple[int, int, RelationType], float]:
    table: dict[tuple[int, int, RelationType], float] = {}
    for prop in proposals:
        if prop.src not in graph.nodes or prop.dst not in graph.nodes:
            raise InputError(
                f"proposal ({prop.src}, {prop.dst}) references a missing node"
            )
        if prop.src == prop.dst:
            raise InputError(f"proposal self-loop on node {prop.src}")
        key = (prop.src, prop.dst, prop.relation)
        table[key] = max(table.get(key, 0.0), prop.score)
    return table


def score_pair(
    graph: SceneGraph,
    src_id: int,
    dst_id: int,
    llm_scores: Mapping[tuple[int, int, RelationType], float],
    params: RelationParams,
    view_forward: Vec3,
) -> ScoredPair:
    geo = geometric_scores(graph, src_id, dst_id, params, view_forward)
    fused = {
        rel: fuse(llm_scores.get((src_id, dst_id, rel), 0.0), geo[rel], params.alpha)
        for rel in RelationType
    }
    return ScoredPair(src_id, dst_id, fused)


def infer_relations(
    graph: SceneGraph,
    proposals: Iterable[SemanticProposal],
    params: RelationParams,
    view_forward: Vec3,
) -> set[RelationEdge]:
    """One pass over all ordered node pairs: fuse evidence per relation type,
    keep the argmax type when its score clears tau, then mirror kept
    bidirectional edges onto unoccupied reverse pairs."""
    llm_scores = _proposal_lookup(graph, proposals)
    ids = sorted(graph.nodes)
    kept: dict[tuple[int, int], RelationEdge] = {}
    for src_id in ids:
        for dst_id in ids:
            if src_id == dst_id:
                continue
            pair = score_pair(graph, src_id, dst_id, llm_scores, params, view_forward)
            rel, gamma = pair.best()
            if gamma >= params.tau:
                kept[(src_id, dst_id)] = RelationEdge(src_id, dst_id, rel, gamma)

    # symmetry closure, skipping reverse pairs that already won a different type
    for edge in sorted(kept.values(), key=lambda e: (e.src, e.dst)):
        if edge.relation.is_bidirectional and (edge.dst, edge.src) not in kept:
            kept[(edge.dst, edge.src)] = RelationEdge(
                edge.dst, edge.src, edge.relation, edge.confidence
            )
    return set(kept.values())
