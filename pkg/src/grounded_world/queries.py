"""Structured query language, answer evaluation, and the perception
coordinator that decides between answering from the cached world model and
rerunning the tool pipeline.

Grammar (keywords case-insensitive, labels are words or double-quoted):

    LOCATE <label>
    RELATE <relation> <label>
    MEASURE DIST <label> <label>
    FILTER WITHIN <number><m|cm> OF <label>
    CLOSEST <label> TO <label>

Relate and FilterWithin answers depend on every object in the scene, not
just the ones named in the query, so those run (and cache-check against) a
broad perception pass that proposes all visible labels.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Callable, Union

from .errors import (
    GroundedWorldError,
    InputError,
    InsufficientDepth,
    NoPlaneFound,
    ProposerUnavailable,
    QueryFailed,
    QueryParseError,
)
from .geometry import CameraIntrinsics, DepthFrame, Plane, PoseSE3
from .graph import ObjectNode, RelationType, SceneGraph, match_existing_node
from .lifting import (
    Detection2D,
    LiftConfig,
    fit_support_plane,
    lift_detection,
    lift_detection_planar,
)
from .relations import RelationParams, infer_relations
from .semantics import (
    DEFAULT_DETECTION_THRESHOLD,
    Detector,
    DetectorRequest,
    LabelProposer,
    ProposerRequest,
    RelationProposer,
)

# ---------------------------------------------------------------- queries

@dataclass(frozen=True)
class LocateQuery:
    label: str

    def __post_init__(self) -> None:
        if not self.label.strip():
            raise InputError("query label must not be empty")


@dataclass(frozen=True)
class RelateQuery:
    relation: RelationType
    anchor_label: str

    def __post_init__(self) -> None:
        if not self.anchor_label.strip():
            raise InputError("query label must not be empty")


@dataclass(frozen=True)
class MeasureQuery:
    label_a: str
    label_b: str

    def __post_init__(self) -> None:
        if not self.label_a.strip() or not self.label_b.strip():
            raise InputError("query label must not be empty")


@dataclass(frozen=True)
class FilterWithinQuery:
    distance: float
    anchor_label: str

    def __post_init__(self) -> None:
        if not self.distance > 0.0:
            raise InputError("filter distance must be positive")
        if not self.anchor_label.strip():
            raise InputError("query label must not be empty")


@dataclass(frozen=True)
class ClosestQuery:
    label: str
    to_label: str

    def __post_init__(self) -> None:
        if not self.label.strip() or not self.to_label.strip():
            raise InputError("query label must not be empty")


Query = Union[LocateQuery, RelateQuery, MeasureQuery, FilterWithinQuery, ClosestQuery]

# ---------------------------------------------------------------- answers

@dataclass(frozen=True)
class ObjectsAnswer:
    ids: frozenset[int]

    def __post_init__(self) -> None:
        if not self.ids:
            raise InputError("objects answer must not be empty")

    def to_dict(self) -> dict:
        return {"kind": "objects", "ids": sorted(self.ids)}


@dataclass(frozen=True)
class DistanceAnswer:
    meters: float

    def __post_init__(self) -> None:
        if self.meters < 0.0:
            raise InputError("distance answer must be non-negative")

    def to_dict(self) -> dict:
        return {"kind": "distance", "meters": self.meters}


@dataclass(frozen=True)
class AmbiguousAnswer:
    candidates: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"kind": "ambiguous", "candidates": list(self.candidates)}


@dataclass(frozen=True)
class NotFoundAnswer:
    def to_dict(self) -> dict:
        return {"kind": "not-found"}


Answer = Union[ObjectsAnswer, DistanceAnswer, AmbiguousAnswer, NotFoundAnswer]

# ---------------------------------------------------------------- parser

@dataclass(frozen=True)
class _Token:
    text: str
    position: int  # 1-based character column
    quoted: bool = False


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == '"':
            end = text.find('"', i + 1)
            if end == -1:
                raise QueryParseError("unterminated quoted label", i + 1)
            tokens.append(_Token(text[i + 1 : end], i + 1, quoted=True))
            i = end + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] != '"':
                j += 1
            tokens.append(_Token(text[i:j], i + 1))
            i = j
    return tokens


_DISTANCE_RE = re.compile(r"(\d+(?:\.\d+)?)(cm|m)", re.IGNORECASE)


def parse_query(text: str) -> Query:
    tokens = _tokenize(text)
    if not tokens:
        raise QueryParseError("empty query", 1)
    cursor = 0

    def take(expected: str) -> _Token:
        nonlocal cursor
        if cursor >= len(tokens):
            raise QueryParseError(f"expected {expected}", len(text) + 1)
        token = tokens[cursor]
        cursor += 1
        return token

    def take_label(role: str) -> str:
        token = take(role)
        if not token.text.strip():
            raise QueryParseError(f"{role} must not be empty", token.position)
        return token.text

    def expect_keyword(word: str) -> None:
        token = take(f"keyword {word}")
        if token.quoted or token.text.upper() != word:
            raise QueryParseError(f"expected {word}, got {token.text!r}", token.position)

    head = take("a command")
    command = head.text.upper() if not head.quoted else ""
    query: Query
    if command == "LOCATE":
        query = LocateQuery(take_label("an object label"))
    elif command == "RELATE":
        rel_token = take("a relation name")
        try:
            relation = RelationType.from_token(rel_token.text)
        except InputError as exc:
            raise QueryParseError(str(exc), rel_token.position) from None
        query = RelateQuery(relation, take_label("an anchor label"))
    elif command == "MEASURE":
        expect_keyword("DIST")
        first = take_label("an object label")
        query = MeasureQuery(first, take_label("a second object label"))
    elif command == "FILTER":
        expect_keyword("WITHIN")
        dist_token = take("a distance such as 20cm or 0.5m")
        match = _DISTANCE_RE.fullmatch(dist_token.text)
        if match is None or dist_token.quoted:
            raise QueryParseError(
                f"expected a distance such as 20cm or 0.5m, got {dist_token.text!r}",
                dist_token.position,
            )
        meters = float(match.group(1))
        if match.group(2).lower() == "cm":
            meters /= 100.0
        if meters <= 0.0:
            raise QueryParseError("distance must be positive", dist_token.position)
        expect_keyword("OF")
        query = FilterWithinQuery(meters, take_label("an anchor label"))
    elif command == "CLOSEST":
        first = take_label("an object label")
        expect_keyword("TO")
        query = ClosestQuery(first, take_label("an anchor label"))
    else:
        raise QueryParseError(
            f"unknown command {head.text!r}; expected LOCATE, RELATE, MEASURE, "
            "FILTER, or CLOSEST",
            head.position,
        )
    if cursor != len(tokens):
        extra = tokens[cursor]
        raise QueryParseError(
            f"unexpected trailing input {extra.text!r}", extra.position
        )
    return query


def _normalize_label(label: str) -> str:
    return " ".join(label.split()).lower()


def label_match(node_label: str, query_label: str) -> bool:
    return _normalize_label(node_label) == _normalize_label(query_label)


def referenced_labels(query: Query) -> tuple[str, ...]:
    if isinstance(query, LocateQuery):
        return (query.label,)
    if isinstance(query, RelateQuery):
        return (query.anchor_label,)
    if isinstance(query, MeasureQuery):
        return (query.label_a, query.label_b)
    if isinstance(query, FilterWithinQuery):
        return (query.anchor_label,)
    return (query.label, query.to_label)


def needs_broad_perception(query: Query) -> bool:
    """Relate and FilterWithin answers range over the whole scene."""
    return isinstance(query, (RelateQuery, FilterWithinQuery))

# ---------------------------------------------------------------- timings

@dataclass(frozen=True)
class StageDelays:
    """Simulated per-stage service latencies added to measured stage time."""

    capture_encode: float = 0.0
    network: float = 0.0
    mllm: float = 0.0
    detection: float = 0.0
    client_grounding: float = 0.0

    @classmethod
    def service_profile(cls) -> "StageDelays":
        """Median latencies of a remote-service deployment; used by the
        latency-accounting demos and tests."""
        return cls(
            capture_encode=0.15,
            network=0.42,
            mllm=2.10,
            detection=0.82,
            client_grounding=1.25,
        )


@dataclass(frozen=True)
class StageTimings:
    capture_encode: float
    network: float
    mllm: float
    detection: float
    client_grounding: float
    end_to_end: float

    @classmethod
    def zero(cls) -> "StageTimings":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def gather(
        cls,
        capture_encode: float,
        network: float,
        mllm: float,
        detection: float,
        client_grounding: float,
    ) -> "StageTimings":
        return cls(
            capture_encode,
            network,
            mllm,
            detection,
            client_grounding,
            capture_encode + network + mllm + detection + client_grounding,
        )


class CoordinatorMode:
    FULL = "full"
    NO_COORDINATOR = "no-coordinator"
    NO_DEPTH = "no-depth"

    ALL = (FULL, NO_COORDINATOR, NO_DEPTH)


@dataclass(frozen=True)
class CoordinatorPolicy:
    mode: str = CoordinatorMode.FULL
    max_staleness: float = 30.0
    min_node_confidence: float = 0.35

    def __post_init__(self) -> None:
        if self.mode not in CoordinatorMode.ALL:
            raise InputError(f"unknown coordinator mode {self.mode!r}")
        if not self.max_staleness > 0.0:
            raise InputError("max_staleness must be positive")
        if not 0.0 <= self.min_node_confidence <= 1.0:
            raise InputError("min_node_confidence outside [0, 1]")


@dataclass(frozen=True)
class PerceptionInputs:
    frame: DepthFrame
    intrinsics: CameraIntrinsics
    pose: PoseSE3
    frame_id: str = "frame-0"

# ---------------------------------------------------------------- session

class QuerySession:
    """Holds one world model plus its tool bindings and serves queries.

    Reusing a session across queries is what enables cache answers; a fresh
    session starts cold. One query in flight at a time per session.
    """

    def __init__(
        self,
        world: SceneGraph,
        inputs: PerceptionInputs,
        label_proposer: LabelProposer,
        detector: Detector,
        relation_proposer: RelationProposer,
        policy: CoordinatorPolicy = CoordinatorPolicy(),
        relation_params: RelationParams = RelationParams(),
        lift_config: LiftConfig = LiftConfig(),
        delays: StageDelays = StageDelays(),
        detection_threshold: float = DEFAULT_DETECTION_THRESHOLD,
        clock: Callable[[], float] = time.monotonic,
        plane_seed: int = 0,
        broad_refresh_at: float | None = None,
    ):
        self.world = world
        self._inputs = inputs
        self._label_proposer = label_proposer
        self._detector = detector
        self._relation_proposer = relation_proposer
        self._policy = policy
        self._relation_params = relation_params
        self._lift_config = lift_config
        self._delays = delays
        self._detection_threshold = detection_threshold
        self._clock = clock
        self._plane_seed = plane_seed
        self._plane: Plane | None = None
        # Warm-started sessions (prebuilt world) declare when their last
        # whole-scene refresh happened; cold sessions have had none.
        self._last_broad_refresh = broad_refresh_at

    # -- coordinator ------------------------------------------------------

    def run(self, query: Query | str) -> tuple[Answer, StageTimings]:
        if isinstance(query, str):
            query = parse_query(query)
        broad = needs_broad_perception(query)
        if self._policy.mode == CoordinatorMode.FULL and self._world_sufficient(
            query, broad
        ):
            return self._evaluate(query), StageTimings.zero()
        timings = self._perceive(query, broad)
        return self._evaluate(query), timings

    def _world_sufficient(self, query: Query, broad: bool) -> bool:
        now = self._clock()
        if broad:
            if (
                self._last_broad_refresh is None
                or now - self._last_broad_refresh > self._policy.max_staleness
            ):
                return False
        for query_label in referenced_labels(query):
            if not any(
                label_match(node.label, query_label)
                and node.confidence >= self._policy.min_node_confidence
                and now - node.last_seen <= self._policy.max_staleness
                for node in self.world.nodes.values()
            ):
                return False
        return True

    # -- perception -------------------------------------------------------

    def _support_plane(self) -> Plane:
        if self._plane is None:
            self._plane = fit_support_plane(
                self._inputs.frame,
                self._inputs.intrinsics,
                self._inputs.pose,
                seed=self._plane_seed,
            )
        return self._plane

    def _lift(self, detection: Detection2D):
        if self._policy.mode == CoordinatorMode.NO_DEPTH:
            return lift_detection_planar(
                detection,
                self._support_plane(),
                self._inputs.intrinsics,
                self._inputs.pose,
                self._lift_config,
            )
        return lift_detection(
            detection,
            self._inputs.frame,
            self._inputs.intrinsics,
            self._inputs.pose,
            self._lift_config,
        )

    def _perceive(self, query: Query, broad: bool) -> StageTimings:
        # NoCoordinator refreshes everything every time, so its answers are
        # never shaped by what an earlier, narrower query happened to see.
        broad = broad or self._policy.mode == CoordinatorMode.NO_COORDINATOR
        proposer_query = "" if broad else _query_text_for_proposer(query)
        mllm_time = 0.0

        start = time.perf_counter()
        try:
            proposal = self._label_proposer.propose_labels(
                ProposerRequest(proposer_query, self._inputs.frame_id)
            )
        except ProposerUnavailable as exc:
            raise QueryFailed(f"label proposer failed: {exc}", stage="mllm") from exc
        mllm_time += time.perf_counter() - start

        start = time.perf_counter()
        detections: list[Detection2D] = []
        if proposal.labels:
            try:
                detections = self._detector.detect(
                    DetectorRequest(
                        tuple(proposal.labels),
                        self._inputs.frame_id,
                        self._detection_threshold,
                    )
                )
            except (ProposerUnavailable, GroundedWorldError) as exc:
                raise QueryFailed(f"detector failed: {exc}", stage="detection") from exc
        detection_time = time.perf_counter() - start

        start = time.perf_counter()
        now = self._clock()
        try:
            for detection in detections:
                lifted = self._lift(detection)
                node_id = match_existing_node(
                    self.world, detection.label, lifted.anchor
                )
                if node_id is None:
                    node_id = self.world.allocate_id()
                self.world.upsert_node(
                    ObjectNode(
                        node_id,
                        detection.label,
                        lifted.anchor,
                        lifted.volume,
                        detection.confidence,
                        now,
                    )
                )
        except (InsufficientDepth, NoPlaneFound, InputError) as exc:
            raise QueryFailed(
                f"grounding failed: {exc}", stage="client_grounding"
            ) from exc
        grounding_time = time.perf_counter() - start

        start = time.perf_counter()
        try:
            proposals = self._relation_proposer.propose_relations(
                self.world, _query_text_for_proposer(query)
            )
        except ProposerUnavailable as exc:
            raise QueryFailed(
                f"relation proposer failed: {exc}", stage="mllm"
            ) from exc
        mllm_time += time.perf_counter() - start

        start = time.perf_counter()
        edges = infer_relations(
            self.world,
            proposals,
            self._relation_params,
            self._inputs.pose.forward,
        )
        self.world.set_edges(edges)
        grounding_time += time.perf_counter() - start

        if broad:
            self._last_broad_refresh = self._clock()
        return StageTimings.gather(
            capture_encode=self._delays.capture_encode,
            network=self._delays.network,
            mllm=self._delays.mllm + mllm_time,
            detection=self._delays.detection + detection_time,
            client_grounding=self._delays.client_grounding + grounding_time,
        )

    # -- evaluation -------------------------------------------------------

    def _resolve(self, query_label: str) -> list[int]:
        return [
            node_id
            for node_id in sorted(self.world.nodes)
            if label_match(self.world.nodes[node_id].label, query_label)
        ]

    def _resolve_unique(self, query_label: str) -> int | Answer:
        ids = self._resolve(query_label)
        if not ids:
            return NotFoundAnswer()
        if len(ids) > 1:
            return AmbiguousAnswer(tuple(ids))
        return ids[0]

    def _evaluate(self, query: Query) -> Answer:
        world = self.world
        if isinstance(query, LocateQuery):
            ids = self._resolve(query.label)
            if not ids:
                return NotFoundAnswer()
            if len(ids) > 1:
                return AmbiguousAnswer(tuple(ids))
            return ObjectsAnswer(frozenset(ids))

        if isinstance(query, RelateQuery):
            anchor = self._resolve_unique(query.anchor_label)
            if not isinstance(anchor, int):
                return anchor
            ids = frozenset(
                edge.src
                for edge in world.edges
                if edge.dst == anchor and edge.relation is query.relation
            )
            return ObjectsAnswer(ids) if ids else NotFoundAnswer()

        if isinstance(query, MeasureQuery):
            first = self._resolve_unique(query.label_a)
            if not isinstance(first, int):
                return first
            second = self._resolve_unique(query.label_b)
            if not isinstance(second, int):
                return second
            meters = world.nodes[first].anchor.distance_to(world.nodes[second].anchor)
            return DistanceAnswer(meters)

        if isinstance(query, FilterWithinQuery):
            anchor = self._resolve_unique(query.anchor_label)
            if not isinstance(anchor, int):
                return anchor
            center = world.nodes[anchor].anchor
            ids = frozenset(
                node_id
                for node_id in world.nodes
                if node_id != anchor
                and world.nodes[node_id].anchor.distance_to(center) <= query.distance
            )
            return ObjectsAnswer(ids) if ids else NotFoundAnswer()

        if isinstance(query, ClosestQuery):
            anchor = self._resolve_unique(query.to_label)
            if not isinstance(anchor, int):
                return anchor
            center = world.nodes[anchor].anchor
            candidates = [i for i in self._resolve(query.label) if i != anchor]
            if not candidates:
                return NotFoundAnswer()
            winner = min(
                candidates,
                key=lambda i: (world.nodes[i].anchor.distance_to(center), i),
            )
            return ObjectsAnswer(frozenset({winner}))

        raise InputError(f"unsupported query type {type(query).__name__}")


def _query_text_for_proposer(query: Query) -> str:
    """Reconstruct a lexical form of the query for the label proposer."""
    if isinstance(query, LocateQuery):
        return f"locate the {query.label}"
    if isinstance(query, RelateQuery):
        return f"what is {query.relation.value} the {query.anchor_label}"
    if isinstance(query, MeasureQuery):
        return f"measure from the {query.label_a} to the {query.label_b}"
    if isinstance(query, FilterWithinQuery):
        return f"filter objects near the {query.anchor_label}"
    return f"which {query.label} is closest to the {query.to_label}"


def run_query(
    query: Query | str,
    world: SceneGraph,
    inputs: PerceptionInputs,
    label_proposer: LabelProposer,
    detector: Detector,
    relation_proposer: RelationProposer,
    policy: CoordinatorPolicy = CoordinatorPolicy(),
    **session_kwargs,
) -> tuple[Answer, StageTimings]:
    """One-shot wrapper over QuerySession (no cache reuse across calls)."""
    session = QuerySession(
        world,
        inputs,
        label_proposer,
        detector,
        relation_proposer,
        policy=policy,
        **session_kwargs,
    )
    return session.run(query)
