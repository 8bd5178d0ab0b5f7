"""World-model container tests: nodes, edges, snapshots, change events."""

from __future__ import annotations

import pytest

from grounded_world.errors import InputError
from grounded_world.geometry import Box3, Vec3
from grounded_world.graph import (
    ChangeKind,
    ObjectNode,
    RelationEdge,
    RelationType,
    SceneGraph,
    detect_changes,
    match_existing_node,
)


def make_node(node_id, label, x, y, z, half=0.05, conf=0.9, seen=0.0):
    c = Vec3(x, y, z)
    return ObjectNode(node_id, label, c, Box3(c, Vec3(half, half, half)), conf, seen)


class TestRelationType:
    def test_fifteen_members_in_order(self):
        values = [m.value for m in RelationType]
        assert values == [
            "on", "under", "next-to", "behind", "within-reach", "closest-to",
            "blocking", "sequential", "causal", "structural", "functional",
            "semantic", "dependence", "interaction", "referential",
        ]

    def test_spatial_family_is_first_seven(self):
        members = list(RelationType)
        assert all(m.is_spatial for m in members[:7])
        assert not any(m.is_spatial for m in members[7:])

    def test_bidirectional_flags(self):
        flagged = {m for m in RelationType if m.is_bidirectional}
        assert flagged == {RelationType.STRUCTURAL, RelationType.INTERACTION}

    def test_from_token(self):
        assert RelationType.from_token("Next-To") is RelationType.NEXT_TO
        with pytest.raises(InputError, match="closest-to"):
            RelationType.from_token("nearby")


class TestNodeAndEdgeInvariants:
    def test_confidence_range(self):
        with pytest.raises(InputError):
            make_node(1, "mug", 0, 0, 0, conf=1.5)

    def test_anchor_must_sit_inside_volume(self):
        with pytest.raises(InputError):
            ObjectNode(1, "mug", Vec3(1, 0, 0), Box3(Vec3(0, 0, 0), Vec3(0.1, 0.1, 0.1)), 0.9, 0.0)

    def test_edge_rejects_self_loop(self):
        with pytest.raises(InputError):
            RelationEdge(3, 3, RelationType.ON, 0.7)

    def test_edge_confidence_range(self):
        with pytest.raises(InputError):
            RelationEdge(1, 2, RelationType.ON, 1.2)


class TestSceneGraph:
    def test_upsert_inserts_then_replaces(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        assert len(g) == 1
        g.upsert_node(make_node(1, "mug", 0, 0, 2, conf=0.5))
        assert len(g) == 1
        assert g.nodes[1].confidence == 0.5
        assert g.nodes[1].anchor.z == 2
        g.validate()

    def test_upsert_preserves_unrelated_edges(self):
        g = SceneGraph()
        for i in (1, 2, 3):
            g.upsert_node(make_node(i, "box", i, 0, 0))
        g.set_edges([RelationEdge(1, 2, RelationType.NEXT_TO, 0.7)])
        g.upsert_node(make_node(3, "box", 3, 0, 1))
        g.upsert_node(make_node(1, "box", 1, 0, 1))  # edge endpoint replaced
        assert g.edges == (RelationEdge(1, 2, RelationType.NEXT_TO, 0.7),)
        g.validate()

    def test_set_edges_rejects_dangling(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 0))
        before = g.edges
        with pytest.raises(InputError):
            g.set_edges([RelationEdge(1, 99, RelationType.ON, 0.7)])
        assert g.edges == before  # batch rejected whole

    def test_set_edges_rejects_duplicate_ordered_pair(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "a", 0, 0, 0))
        g.upsert_node(make_node(2, "b", 1, 0, 0))
        with pytest.raises(InputError):
            g.set_edges([
                RelationEdge(1, 2, RelationType.ON, 0.7),
                RelationEdge(1, 2, RelationType.NEXT_TO, 0.7),
            ])
        # reversed pair is a different ordered pair, so this is fine
        g.set_edges([
            RelationEdge(1, 2, RelationType.ON, 0.7),
            RelationEdge(2, 1, RelationType.UNDER, 0.7),
        ])
        g.validate()

    def test_allocate_id_never_collides(self):
        g = SceneGraph()
        g.upsert_node(make_node(7, "mug", 0, 0, 0))
        assert g.allocate_id() == 8
        assert g.allocate_id() == 9


class TestSnapshot:
    def test_mutation_after_snapshot_leaves_it_unchanged(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        snap = g.snapshot()
        g.upsert_node(make_node(1, "mug", 0, 0, 5))
        g.upsert_node(make_node(2, "pen", 1, 0, 1))
        assert snap.node_ids() == {1}
        assert snap.nodes[0].anchor.z == 1

    def test_snapshots_of_same_state_compare_equal(self):
        g = SceneGraph(user_position=Vec3(0, 1.5, -2))
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        g.upsert_node(make_node(2, "pen", 1, 0, 1))
        g.set_edges([RelationEdge(1, 2, RelationType.NEXT_TO, 0.7)])
        assert g.snapshot() == g.snapshot()

    def test_snapshot_timestamps_monotone(self):
        g = SceneGraph()
        stamps = [g.snapshot().timestamp for _ in range(5)]
        assert stamps == sorted(stamps)


class TestDetectChanges:
    def test_identical_snapshots_no_events(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        snap = g.snapshot()
        assert detect_changes(snap, snap, 0.15) == []

    def test_displacement_above_threshold_is_moved(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        before = g.snapshot()
        g.upsert_node(make_node(1, "mug", 0, 0, 1.5))
        events = detect_changes(before, g.snapshot(), 0.1)
        assert len(events) == 1
        ev = events[0]
        assert ev.kind is ChangeKind.MOVED
        assert ev.displacement == pytest.approx(0.5)
        assert ev.old_anchor.z == 1 and ev.new_anchor.z == 1.5

    def test_displacement_below_threshold_ignored(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        before = g.snapshot()
        g.upsert_node(make_node(1, "mug", 0, 0, 1.05))
        assert detect_changes(before, g.snapshot(), 0.1) == []

    def test_added_removed_and_sorted_by_id(self):
        g = SceneGraph()
        g.upsert_node(make_node(2, "mug", 0, 0, 1))
        g.upsert_node(make_node(5, "pen", 1, 0, 1))
        before = g.snapshot()
        g2 = SceneGraph()
        g2.upsert_node(make_node(5, "pen", 1, 0, 1))
        g2.upsert_node(make_node(1, "lamp", 2, 0, 1))
        after = g2.snapshot()
        events = detect_changes(before, after, 0.15)
        assert [(e.kind, e.node_id) for e in events] == [
            (ChangeKind.ADDED, 1),
            (ChangeKind.REMOVED, 2),
        ]

    def test_swap_inputs_swaps_added_removed(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        a = g.snapshot()
        g.upsert_node(make_node(2, "pen", 1, 0, 1))
        b = g.snapshot()
        fwd = detect_changes(a, b, 0.15)
        rev = detect_changes(b, a, 0.15)
        assert [e.kind for e in fwd] == [ChangeKind.ADDED]
        assert [e.kind for e in rev] == [ChangeKind.REMOVED]
        assert fwd[0].node_id == rev[0].node_id == 2


class TestNodeAssociation:
    def test_matches_same_label_within_radius(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 0))
        assert match_existing_node(g, "mug", Vec3(0.2, 0, 0)) == 1

    def test_rejects_far_or_differently_labeled(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 0))
        assert match_existing_node(g, "mug", Vec3(0.4, 0, 0)) is None
        assert match_existing_node(g, "pen", Vec3(0.1, 0, 0)) is None

    def test_nearest_wins_and_ties_take_lowest_id(self):
        g = SceneGraph()
        g.upsert_node(make_node(4, "mug", 0.25, 0, 0))
        g.upsert_node(make_node(2, "mug", 0.10, 0, 0))
        assert match_existing_node(g, "mug", Vec3(0, 0, 0)) == 2
        g2 = SceneGraph()
        g2.upsert_node(make_node(4, "mug", 0.2, 0, 0))
        g2.upsert_node(make_node(2, "mug", -0.2, 0, 0))
        assert match_existing_node(g2, "mug", Vec3(0, 0, 0)) == 2
