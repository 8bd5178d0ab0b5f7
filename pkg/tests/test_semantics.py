"""Mock-tool and HTTP-client tests, including a stdlib loopback server."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from support import make_node
from grounded_world.errors import InputError, ProposerUnavailable, ProtocolError
from grounded_world.geometry import Box3, CameraIntrinsics, PoseSE3, Vec3, project_box_hull
from grounded_world.graph import RelationType, SceneGraph
from grounded_world.relations import SemanticProposal
from grounded_world.semantics import (
    DetectorRequest,
    GroundTruthDetector,
    GroundTruthLabelProposer,
    ProposerRequest,
    RelationRule,
    RemoteToolClient,
    RuleBasedRelationProposer,
)

INTR = CameraIntrinsics(fx=100.0, fy=100.0, cx=79.5, cy=59.5, width=160, height=120)


class TestLabelProposer:
    def test_query_nouns_select_matching_labels(self):
        proposer = GroundTruthLabelProposer(["mug", "desk"])
        out = proposer.propose_labels(ProposerRequest("where is the mug"))
        assert out.labels == ("mug",)

    def test_empty_query_returns_all_labels(self):
        proposer = GroundTruthLabelProposer(["mug", "desk", "mug"])
        out = proposer.propose_labels(ProposerRequest(""))
        assert out.labels == ("mug", "desk")
        assert "mug" in out.scene_description

    def test_multiword_labels_match_contiguously(self):
        proposer = GroundTruthLabelProposer(["coffee mug", "mug"])
        out = proposer.propose_labels(ProposerRequest("Move the COFFEE MUG please"))
        assert out.labels == ("coffee mug", "mug")
        out2 = proposer.propose_labels(ProposerRequest("mug of coffee"))
        assert out2.labels == ("mug",)

    def test_no_match_yields_empty(self):
        proposer = GroundTruthLabelProposer(["mug"])
        assert proposer.propose_labels(ProposerRequest("find the lamp")).labels == ()


class TestGroundTruthDetector:
    def scene_objects(self):
        return [
            ("mug", Box3(Vec3(0.0, 0.0, 2.0), Vec3(0.1, 0.1, 0.1))),
            ("lamp", Box3(Vec3(0.4, 0.1, 2.5), Vec3(0.08, 0.2, 0.08))),
        ]

    def test_noiseless_boxes_match_projection_exactly(self):
        objects = self.scene_objects()
        det = GroundTruthDetector(objects, INTR, PoseSE3.identity())
        out = det.detect(DetectorRequest(("mug", "lamp")))
        assert [d.label for d in out] == ["mug", "lamp"]
        for detection, (_, volume) in zip(out, objects):
            assert detection.box == project_box_hull(volume, INTR, PoseSE3.identity())
            assert detection.confidence == 0.95

    def test_threshold_above_mock_confidence_empties(self):
        det = GroundTruthDetector(self.scene_objects(), INTR, PoseSE3.identity())
        assert det.detect(DetectorRequest(("mug",), confidence_threshold=1.01)) == []

    def test_label_filtering(self):
        det = GroundTruthDetector(self.scene_objects(), INTR, PoseSE3.identity())
        out = det.detect(DetectorRequest(("lamp",)))
        assert [d.label for d in out] == ["lamp"]

    def test_empty_label_list_rejected(self):
        det = GroundTruthDetector(self.scene_objects(), INTR, PoseSE3.identity())
        with pytest.raises(InputError):
            det.detect(DetectorRequest(()))

    def test_jitter_bounded_by_three_sigma_and_seeded(self):
        objects = self.scene_objects()
        clean = GroundTruthDetector(objects, INTR, PoseSE3.identity())
        noisy_a = GroundTruthDetector(objects, INTR, PoseSE3.identity(),
                                      box_jitter_sigma=2.0, seed=5)
        noisy_b = GroundTruthDetector(objects, INTR, PoseSE3.identity(),
                                      box_jitter_sigma=2.0, seed=5)
        ref = clean.detect(DetectorRequest(("mug", "lamp")))
        jit_a = noisy_a.detect(DetectorRequest(("mug", "lamp")))
        jit_b = noisy_b.detect(DetectorRequest(("mug", "lamp")))
        assert jit_a == jit_b
        moved = False
        for r, j in zip(ref, jit_a):
            for a, b in [(r.box.x_min, j.box.x_min), (r.box.y_min, j.box.y_min),
                         (r.box.x_max, j.box.x_max), (r.box.y_max, j.box.y_max)]:
                assert abs(a - b) <= 6.0 + 1e-9
                moved = moved or abs(a - b) > 1e-9
        assert moved

    def test_object_behind_camera_skipped(self):
        det = GroundTruthDetector(
            [("ghost", Box3(Vec3(0, 0, -3.0), Vec3(0.1, 0.1, 0.1)))],
            INTR, PoseSE3.identity(),
        )
        assert det.detect(DetectorRequest(("ghost",))) == []


class TestRuleBasedProposer:
    def test_rule_expands_to_matching_pair(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "charger", 0, 0, 1))
        g.upsert_node(make_node(2, "laptop", 1, 0, 1))
        proposer = RuleBasedRelationProposer(
            [RelationRule("charger", "laptop", RelationType.FUNCTIONAL, 0.9)]
        )
        assert proposer.propose_relations(g, "") == [
            SemanticProposal(1, 2, RelationType.FUNCTIONAL, 0.9)
        ]

    def test_empty_table_and_absent_labels(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "charger", 0, 0, 1))
        assert RuleBasedRelationProposer([]).propose_relations(g, "") == []
        proposer = RuleBasedRelationProposer(
            [RelationRule("charger", "laptop", RelationType.FUNCTIONAL, 0.9)]
        )
        assert proposer.propose_relations(g, "") == []

    def test_duplicate_labels_expand_to_all_pairs(self):
        g = SceneGraph()
        g.upsert_node(make_node(1, "mug", 0, 0, 1))
        g.upsert_node(make_node(2, "mug", 1, 0, 1))
        g.upsert_node(make_node(3, "desk", 2, 0, 1))
        proposer = RuleBasedRelationProposer(
            [RelationRule("mug", "desk", RelationType.SEMANTIC, 0.8)]
        )
        out = proposer.propose_relations(g, "")
        assert out == [
            SemanticProposal(1, 3, RelationType.SEMANTIC, 0.8),
            SemanticProposal(2, 3, RelationType.SEMANTIC, 0.8),
        ]


class _ToolHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):  # keep test output quiet
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        if self.path == "/garbage":
            self._respond(200, b"this is not json")
            return
        if self.path == "/slow":
            time.sleep(0.8)
            self._respond(200, json.dumps({"labels": []}).encode())
            return
        if self.path == "/broken":
            self._respond(500, b"{}")
            return
        payload = json.loads(raw)
        kind = payload["kind"]
        if kind == "propose_labels":
            body = {"labels": ["mug", "desk"], "description": "echo"}
        elif kind == "detect":
            body = {
                "detections": [
                    {"label": payload["labels"][0],
                     "box": [10.0, 12.0, 40.0, 42.0], "conf": 0.9},
                    {"label": payload["labels"][0],
                     "box": [5.0, 5.0, 9.0, 9.0], "conf": 0.2},
                ]
            }
        else:
            body = {
                "proposals": [
                    {"src": "charger", "dst": "laptop",
                     "rel": "functional", "score": 0.9}
                ]
            }
        self._respond(200, json.dumps(body).encode())

    def _respond(self, status, body):
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        except BrokenPipeError:
            pass  # client gave up (timeout tests); nothing to answer


@pytest.fixture(scope="module")
def tool_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ToolHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join(timeout=2)


class TestRemoteToolClient:
    def test_label_round_trip(self, tool_server):
        client = RemoteToolClient(f"{tool_server}/tools")
        out = client.propose_labels(ProposerRequest("anything"))
        assert out.labels == ("mug", "desk")
        assert client.last_elapsed > 0.0
        client.close()

    def test_detect_round_trip_filters_threshold(self, tool_server):
        client = RemoteToolClient(f"{tool_server}/tools")
        out = client.detect(DetectorRequest(("mug",), confidence_threshold=0.35))
        assert len(out) == 1
        assert out[0].label == "mug"
        assert (out[0].box.x_min, out[0].box.y_max) == (10.0, 42.0)
        client.close()

    def test_proposals_resolve_labels_to_node_ids(self, tool_server):
        g = SceneGraph()
        g.upsert_node(make_node(4, "charger", 0, 0, 1))
        g.upsert_node(make_node(7, "laptop", 1, 0, 1))
        client = RemoteToolClient(f"{tool_server}/tools")
        out = client.propose_relations(g, "is the charger for the laptop?")
        assert out == [SemanticProposal(4, 7, RelationType.FUNCTIONAL, 0.9)]
        client.close()

    def test_timeout_raises_unavailable_with_elapsed(self, tool_server):
        client = RemoteToolClient(f"{tool_server}/slow", timeout=0.2)
        with pytest.raises(ProposerUnavailable) as info:
            client.propose_labels(ProposerRequest("q"))
        assert info.value.elapsed is not None and info.value.elapsed >= 0.2
        client.close()

    def test_http_error_raises_unavailable(self, tool_server):
        client = RemoteToolClient(f"{tool_server}/broken")
        with pytest.raises(ProposerUnavailable):
            client.propose_labels(ProposerRequest("q"))
        client.close()

    def test_malformed_body_raises_protocol_error(self, tool_server):
        client = RemoteToolClient(f"{tool_server}/garbage")
        with pytest.raises(ProtocolError):
            client.propose_labels(ProposerRequest("q"))
        client.close()

    def test_unreachable_endpoint(self):
        client = RemoteToolClient("http://127.0.0.1:9/tools", timeout=0.3)
        with pytest.raises(ProposerUnavailable):
            client.propose_labels(ProposerRequest("q"))
        client.close()
