"""Pluggable label-proposer, detector, and relation-proposer interfaces.

Ships three deterministic ground-truth mocks for benchmarking plus an HTTP
client for an external tool service. The engine only ever talks to the
Protocol types, so implementations are interchangeable.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import InputError, ProposerUnavailable, ProtocolError
from .geometry import Box2, Box3, CameraIntrinsics, PoseSE3, project_box_hull
from .graph import RelationType, SceneGraph
from .lifting import Detection2D
from .relations import SemanticProposal

DEFAULT_DETECTION_THRESHOLD = 0.35
MOCK_DETECTION_CONFIDENCE = 0.95


@dataclass(frozen=True)
class ProposerRequest:
    query: str
    frame_id: str = ""


@dataclass(frozen=True)
class DetectorRequest:
    labels: tuple[str, ...]
    frame_id: str = ""
    confidence_threshold: float = DEFAULT_DETECTION_THRESHOLD

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence_threshold <= 1.5:
            raise InputError("confidence threshold out of range")


@dataclass(frozen=True)
class LabelProposal:
    labels: tuple[str, ...]
    scene_description: str = ""


class LabelProposer(Protocol):
    def propose_labels(self, req: ProposerRequest) -> LabelProposal: ...


class Detector(Protocol):
    def detect(self, req: DetectorRequest) -> list[Detection2D]: ...


class RelationProposer(Protocol):
    def propose_relations(
        self, graph: SceneGraph, query: str
    ) -> list[SemanticProposal]: ...


def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def _contains_subsequence(haystack: list[str], needle: list[str]) -> bool:
    if not needle:
        return False
    for start in range(len(haystack) - len(needle) + 1):
        if haystack[start : start + len(needle)] == needle:
            return True
    return False


class GroundTruthLabelProposer:
    """Lexical stand-in for the label proposer: a label matches when its
    token sequence appears contiguously in the query; an empty query
    proposes every scene label."""

    def __init__(self, scene_labels: Sequence[str]):
        seen: dict[str, None] = {}
        for label in scene_labels:
            seen.setdefault(label, None)
        self._labels = tuple(seen)

    def propose_labels(self, req: ProposerRequest) -> LabelProposal:
        description = "visible objects: " + ", ".join(self._labels)
        query_tokens = _tokens(req.query)
        if not query_tokens:
            return LabelProposal(self._labels, description)
        matched = tuple(
            label
            for label in self._labels
            if _contains_subsequence(query_tokens, _tokens(label))
        )
        return LabelProposal(matched, description)


class GroundTruthDetector:
    """Projects ground-truth 3D boxes into the frame once at construction,
    optionally jittering corners with seeded Gaussian noise clipped at
    three sigmas, and serves label-filtered subsets per request."""

    def __init__(
        self,
        objects: Sequence[tuple[str, Box3]],
        intrinsics: CameraIntrinsics,
        pose: PoseSE3,
        box_jitter_sigma: float = 0.0,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self._detections: list[Detection2D] = []
        for label, volume in objects:
            hull = project_box_hull(volume, intrinsics, pose)
            if hull is None:
                continue
            if box_jitter_sigma > 0.0:
                noise = rng.normal(0.0, box_jitter_sigma, size=4)
                noise = np.clip(noise, -3.0 * box_jitter_sigma, 3.0 * box_jitter_sigma)
                x0 = hull.x_min + float(noise[0])
                y0 = hull.y_min + float(noise[1])
                x1 = hull.x_max + float(noise[2])
                y1 = hull.y_max + float(noise[3])
                x0 = max(0.0, min(x0, intrinsics.width - 2.0))
                y0 = max(0.0, min(y0, intrinsics.height - 2.0))
                x1 = min(intrinsics.width - 1.0, max(x1, x0 + 1.0))
                y1 = min(intrinsics.height - 1.0, max(y1, y0 + 1.0))
                hull = Box2(x0, y0, x1, y1)
            self._detections.append(
                Detection2D(label, hull, MOCK_DETECTION_CONFIDENCE)
            )

    def detect(self, req: DetectorRequest) -> list[Detection2D]:
        if not req.labels:
            raise InputError("detector called with no labels")
        wanted = set(req.labels)
        return [
            det
            for det in self._detections
            if det.label in wanted and det.confidence >= req.confidence_threshold
        ]


@dataclass(frozen=True)
class RelationRule:
    src_label: str
    dst_label: str
    relation: RelationType
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise InputError(f"rule score {self.score} outside [0, 1]")


class RuleBasedRelationProposer:
    """Expands a declarative label-pair rule table against the current graph;
    rules whose labels resolve to no node pair are skipped silently."""

    def __init__(self, rules: Sequence[RelationRule]):
        self._rules = tuple(rules)

    @property
    def rules(self) -> tuple[RelationRule, ...]:
        return self._rules

    def propose_relations(
        self, graph: SceneGraph, query: str
    ) -> list[SemanticProposal]:
        proposals: list[SemanticProposal] = []
        by_label: dict[str, list[int]] = {}
        for node_id in sorted(graph.nodes):
            by_label.setdefault(graph.nodes[node_id].label, []).append(node_id)
        for rule in self._rules:
            for src_id in by_label.get(rule.src_label, ()):
                for dst_id in by_label.get(rule.dst_label, ()):
                    if src_id != dst_id:
                        proposals.append(
                            SemanticProposal(src_id, dst_id, rule.relation, rule.score)
                        )
        return proposals


class RemoteToolClient:
    """HTTP implementation of all three interfaces over a JSON wire format.

    Transport failures and timeouts raise ProposerUnavailable (with elapsed
    seconds); responses that are not valid JSON of the expected shape raise
    ProtocolError. The wall-clock cost of the last call is kept on
    last_elapsed for stage accounting.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        client: httpx.Client | None = None,
    ):
        self._endpoint = endpoint
        self._timeout = timeout
        self._client = client or httpx.Client()
        self.last_elapsed = 0.0

    def close(self) -> None:
        self._client.close()

    def _call(self, payload: dict) -> dict:
        start = time.perf_counter()
        try:
            response = self._client.post(
                self._endpoint, json=payload, timeout=self._timeout
            )
        except httpx.TimeoutException as exc:
            self.last_elapsed = time.perf_counter() - start
            raise ProposerUnavailable(
                f"tool service timed out after {self._timeout} s",
                elapsed=self.last_elapsed,
            ) from exc
        except httpx.HTTPError as exc:
            self.last_elapsed = time.perf_counter() - start
            raise ProposerUnavailable(
                f"tool service unreachable: {exc}", elapsed=self.last_elapsed
            ) from exc
        self.last_elapsed = time.perf_counter() - start
        if response.status_code != 200:
            raise ProposerUnavailable(
                f"tool service returned HTTP {response.status_code}",
                elapsed=self.last_elapsed,
            )
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {exc}") from None
        if not isinstance(body, dict):
            raise ProtocolError("response JSON is not an object")
        return body

    def propose_labels(self, req: ProposerRequest) -> LabelProposal:
        body = self._call(
            {
                "kind": "propose_labels",
                "query": req.query,
                "frame_id": req.frame_id,
                "labels": [],
                "threshold": 0.0,
            }
        )
        labels = body.get("labels")
        if not isinstance(labels, list) or not all(
            isinstance(v, str) for v in labels
        ):
            raise ProtocolError("propose_labels response lacks a string label list")
        return LabelProposal(tuple(labels), str(body.get("description", "")))

    def detect(self, req: DetectorRequest) -> list[Detection2D]:
        if not req.labels:
            raise InputError("detector called with no labels")
        body = self._call(
            {
                "kind": "detect",
                "query": "",
                "frame_id": req.frame_id,
                "labels": list(req.labels),
                "threshold": req.confidence_threshold,
            }
        )
        raw = body.get("detections")
        if not isinstance(raw, list):
            raise ProtocolError("detect response lacks a detections list")
        detections = []
        for item in raw:
            try:
                x0, y0, x1, y1 = (float(v) for v in item["box"])
                det = Detection2D(
                    str(item["label"]), Box2(x0, y0, x1, y1), float(item["conf"])
                )
            except (KeyError, TypeError, ValueError, InputError) as exc:
                raise ProtocolError(f"malformed detection entry: {exc}") from None
            if det.confidence >= req.confidence_threshold:
                detections.append(det)
        return detections

    def propose_relations(
        self, graph: SceneGraph, query: str
    ) -> list[SemanticProposal]:
        body = self._call(
            {
                "kind": "propose_relations",
                "query": query,
                "frame_id": "",
                "labels": sorted({n.label for n in graph.nodes.values()}),
                "threshold": 0.0,
            }
        )
        raw = body.get("proposals")
        if not isinstance(raw, list):
            raise ProtocolError("propose_relations response lacks a proposals list")
        by_label: dict[str, list[int]] = {}
        for node_id in sorted(graph.nodes):
            by_label.setdefault(graph.nodes[node_id].label, []).append(node_id)
        proposals: list[SemanticProposal] = []
        for item in raw:
            try:
                src_label = str(item["src"])
                dst_label = str(item["dst"])
                relation = RelationType.from_token(str(item["rel"]))
                score = float(item["score"])
            except (KeyError, TypeError, ValueError, InputError) as exc:
                raise ProtocolError(f"malformed proposal entry: {exc}") from None
            for src_id in by_label.get(src_label, ()):
                for dst_id in by_label.get(dst_label, ()):
                    if src_id != dst_id:
                        proposals.append(
                            SemanticProposal(src_id, dst_id, relation, score)
                        )
        return proposals
