"""World model: labeled object nodes, typed relation edges, immutable
snapshots, and change detection between snapshots.

Node identity across perception refreshes is by nearest-anchor matching
among same-label nodes (see match_existing_node); everything else keys
on the integer node id.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import InputError
from .geometry import Box3, Vec3


class RelationType(Enum):
    """Typed relations between objects.

    Declaration order is load-bearing: it is the argmax tie-break order
    during inference, with the seven spatial types ranked first.
    """

    ON = "on"
    UNDER = "under"
    NEXT_TO = "next-to"
    BEHIND = "behind"
    WITHIN_REACH = "within-reach"
    CLOSEST_TO = "closest-to"
    BLOCKING = "blocking"
    SEQUENTIAL = "sequential"
    CAUSAL = "causal"
    STRUCTURAL = "structural"
    FUNCTIONAL = "functional"
    SEMANTIC = "semantic"
    DEPENDENCE = "dependence"
    INTERACTION = "interaction"
    REFERENTIAL = "referential"

    @property
    def is_spatial(self) -> bool:
        return self in _SPATIAL_TYPES

    @property
    def is_bidirectional(self) -> bool:
        return self in (RelationType.STRUCTURAL, RelationType.INTERACTION)

    @classmethod
    def from_token(cls, token: str) -> "RelationType":
        """Parse a kebab-case relation name, case-insensitively."""
        try:
            return cls(token.lower())
        except ValueError:
            valid = ", ".join(member.value for member in cls)
            raise InputError(
                f"unknown relation {token!r}; expected one of: {valid}"
            ) from None


_SPATIAL_TYPES = frozenset(list(RelationType)[:7])

RELATION_RANK: Mapping[RelationType, int] = MappingProxyType(
    {member: rank for rank, member in enumerate(RelationType)}
)


@dataclass
class ObjectNode:
    id: int
    label: str
    anchor: Vec3
    volume: Box3
    confidence: float
    last_seen: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"node confidence {self.confidence} outside [0, 1]")
        if not self.volume.contains(self.anchor, tol=1e-6):
            raise InputError(f"node {self.id}: anchor lies outside its volume")


@dataclass(frozen=True)
class RelationEdge:
    src: int
    dst: int
    relation: RelationType
    confidence: float

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise InputError(f"self-loop edge on node {self.src}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"edge confidence {self.confidence} outside [0, 1]")


def _edge_sort_key(edge: RelationEdge) -> tuple:
    return (edge.src, edge.dst, RELATION_RANK[edge.relation])


@dataclass(frozen=True)
class GraphSnapshot:
    """Deep, immutable copy of a graph. Timestamp is excluded from equality
    so two snapshots of the same state compare equal."""

    nodes: tuple[ObjectNode, ...]
    edges: tuple[RelationEdge, ...]
    user_position: Vec3
    timestamp: float = field(compare=False, default=0.0)

    def node_ids(self) -> frozenset[int]:
        return frozenset(n.id for n in self.nodes)


class SceneGraph:
    """Mutable world model. Single-writer: callers serialize mutations;
    snapshots are safe to share across threads."""

    def __init__(self, user_position: Vec3 = Vec3(0.0, 0.0, 0.0)) -> None:
        self._nodes: dict[int, ObjectNode] = {}
        self._edges: list[RelationEdge] = []
        self.user_position = user_position
        self.timestamp = 0.0
        self._next_id = 1

    @property
    def nodes(self) -> Mapping[int, ObjectNode]:
        return MappingProxyType(self._nodes)

    @property
    def edges(self) -> tuple[RelationEdge, ...]:
        return tuple(self._edges)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._nodes

    def allocate_id(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def upsert_node(self, node: ObjectNode) -> None:
        self._nodes[node.id] = node
        self._next_id = max(self._next_id, node.id + 1)
        self.timestamp = time.monotonic()

    def set_edges(self, edges: Iterable[RelationEdge]) -> None:
        """Replace the full edge set atomically; rejects the batch whole."""
        incoming = sorted(edges, key=_edge_sort_key)
        seen_pairs: set[tuple[int, int]] = set()
        for edge in incoming:
            if edge.src not in self._nodes or edge.dst not in self._nodes:
                raise InputError(
                    f"edge ({edge.src}, {edge.dst}) references a missing node"
                )
            pair = (edge.src, edge.dst)
            if pair in seen_pairs:
                raise InputError(f"duplicate edge for ordered pair {pair}")
            seen_pairs.add(pair)
        self._edges = incoming
        self.timestamp = time.monotonic()

    def snapshot(self) -> GraphSnapshot:
        nodes = tuple(
            replace(self._nodes[i]) for i in sorted(self._nodes)
        )
        return GraphSnapshot(
            nodes=nodes,
            edges=tuple(self._edges),
            user_position=self.user_position,
            timestamp=time.monotonic(),
        )

    def validate(self) -> None:
        """Invariant sweep; raises InputError on the first violation."""
        for node_id, node in self._nodes.items():
            if node.id != node_id:
                raise InputError(f"node keyed as {node_id} carries id {node.id}")
            if not 0.0 <= node.confidence <= 1.0:
                raise InputError(f"node {node_id} confidence out of range")
            if not node.volume.contains(node.anchor, tol=1e-6):
                raise InputError(f"node {node_id} anchor outside volume")
        pairs: set[tuple[int, int]] = set()
        for edge in self._edges:
            if edge.src not in self._nodes or edge.dst not in self._nodes:
                raise InputError(f"dangling edge ({edge.src}, {edge.dst})")
            pair = (edge.src, edge.dst)
            if pair in pairs:
                raise InputError(f"duplicate ordered pair {pair}")
            pairs.add(pair)


def match_existing_node(
    graph: SceneGraph, label: str, anchor: Vec3, max_distance: float = 0.3
) -> int | None:
    """Return the id of the nearest same-label node within max_distance,
    or None. Ties resolve to the lowest id."""
    best_id = None
    best_dist = max_distance
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        if node.label != label:
            continue
        dist = node.anchor.distance_to(anchor)
        if dist < best_dist or (dist == best_dist and best_id is None):
            best_id = node_id
            best_dist = dist
    return best_id


class ChangeKind(Enum):
    MOVED = "moved"
    ADDED = "added"
    REMOVED = "removed"


@dataclass(frozen=True)
class ChangeEvent:
    kind: ChangeKind
    node_id: int
    label: str
    old_anchor: Vec3 | None = None
    new_anchor: Vec3 | None = None
    displacement: float = 0.0


def detect_changes(
    before: GraphSnapshot, after: GraphSnapshot, move_threshold: float = 0.15
) -> list[ChangeEvent]:
    """Diff two snapshots by node id: Added, Removed, and Moved (anchor
    displaced strictly more than move_threshold). Events sorted by id."""
    old = {n.id: n for n in before.nodes}
    new = {n.id: n for n in after.nodes}
    events: list[ChangeEvent] = []
    for node_id in old.keys() | new.keys():
        if node_id not in new:
            node = old[node_id]
            events.append(
                ChangeEvent(ChangeKind.REMOVED, node_id, node.label, old_anchor=node.anchor)
            )
        elif node_id not in old:
            node = new[node_id]
            events.append(
                ChangeEvent(ChangeKind.ADDED, node_id, node.label, new_anchor=node.anchor)
            )
        else:
            displacement = old[node_id].anchor.distance_to(new[node_id].anchor)
            if displacement > move_threshold:
                events.append(
                    ChangeEvent(
                        ChangeKind.MOVED,
                        node_id,
                        new[node_id].label,
                        old_anchor=old[node_id].anchor,
                        new_anchor=new[node_id].anchor,
                        displacement=displacement,
                    )
                )
    events.sort(key=lambda e: e.node_id)
    return events
