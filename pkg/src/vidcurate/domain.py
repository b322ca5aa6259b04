"""Shared data model: videos, rounds, decisions, sessions.

Every type has a canonical JSON dict form (snake_case keys) produced by
``to_dict`` and consumed by ``from_dict``; persistence, the HTTP API and
the benchmark format all use that representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

from .errors import IllegalTransition


class Stage(str, Enum):
    """Lifecycle stage of a video item."""

    SOURCED = "sourced"
    GROUNDED = "grounded"
    CANDIDATE = "candidate"
    KEPT = "kept"
    DISCARDED = "discarded"
    UNCERTAIN = "uncertain"
    USER_ACCEPTED = "user_accepted"
    USER_REJECTED = "user_rejected"


# Edges of the lifecycle DAG. Review verdicts (user_accepted/user_rejected)
# are reachable from any policy outcome because any shown item may be
# overridden by the user.
STAGE_DAG: dict[Stage, frozenset[Stage]] = {
    Stage.SOURCED: frozenset({Stage.GROUNDED}),
    Stage.GROUNDED: frozenset({Stage.CANDIDATE}),
    Stage.CANDIDATE: frozenset({Stage.KEPT, Stage.DISCARDED, Stage.UNCERTAIN}),
    Stage.KEPT: frozenset({Stage.USER_ACCEPTED, Stage.USER_REJECTED}),
    Stage.DISCARDED: frozenset({Stage.USER_ACCEPTED, Stage.USER_REJECTED}),
    Stage.UNCERTAIN: frozenset({Stage.USER_ACCEPTED, Stage.USER_REJECTED}),
    Stage.USER_ACCEPTED: frozenset(),
    Stage.USER_REJECTED: frozenset(),
}


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    UNCERTAIN = "uncertain"


class RoundKind(str, Enum):
    NORMAL = "normal"
    DOUBLE_CHECK = "double_check"


class Phase(str, Enum):
    PROPOSING = "proposing"
    INTERACTIVE = "interactive"
    AUTO = "auto"
    DONE = "done"


PHASE_ORDER = [Phase.PROPOSING, Phase.INTERACTIVE, Phase.AUTO, Phase.DONE]


@dataclass(frozen=True)
class Query:
    """Free-form user request that seeds a collection session."""

    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Query":
        return cls(text=d["text"])


@dataclass(frozen=True)
class KeywordSet:
    """Ordered search keywords, case-fold deduplicated, first spelling wins."""

    keywords: tuple[str, ...]

    def __init__(self, keywords):
        cleaned: list[str] = []
        seen: set[str] = set()
        for kw in keywords:
            kw = kw.strip()
            if not kw:
                continue
            folded = kw.casefold()
            if folded in seen:
                continue
            seen.add(folded)
            cleaned.append(kw)
        if not cleaned:
            raise ValueError("keyword set must contain at least one keyword")
        object.__setattr__(self, "keywords", tuple(cleaned))

    def __iter__(self):
        return iter(self.keywords)

    def __len__(self):
        return len(self.keywords)

    def to_dict(self) -> dict[str, Any]:
        return {"keywords": list(self.keywords)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "KeywordSet":
        return cls(d["keywords"])


@dataclass
class VideoItem:
    """One sourced clip and its lifecycle state.

    ``asset_path`` is opaque here; no video decoding happens in this
    package. ``description_cache`` maps attribute name to description
    text and is shared, append-only state (copies made by
    ``transition_stage`` deliberately alias it).
    """

    id: str
    source_url: str
    asset_path: str = ""
    clip_span: Optional[tuple[float, float]] = None
    duration_s: Optional[float] = None
    description_cache: dict[str, str] = field(default_factory=dict)
    stage: Stage = Stage.SOURCED
    bounding: Optional[list[float]] = None

    def __post_init__(self):
        if self.clip_span is not None:
            start, end = self.clip_span
            if not (0 <= start < end):
                raise ValueError(f"invalid clip span ({start}, {end})")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source_url": self.source_url,
            "asset_path": self.asset_path,
            "clip_span": list(self.clip_span) if self.clip_span else None,
            "duration_s": self.duration_s,
            "description_cache": dict(self.description_cache),
            "stage": self.stage.value,
            "bounding": list(self.bounding) if self.bounding else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VideoItem":
        span = d.get("clip_span")
        bounding = d.get("bounding")
        return cls(
            id=d["id"],
            source_url=d["source_url"],
            asset_path=d.get("asset_path", ""),
            clip_span=tuple(span) if span else None,
            duration_s=d.get("duration_s"),
            description_cache=dict(d.get("description_cache", {})),
            stage=Stage(d.get("stage", "sourced")),
            bounding=list(bounding) if bounding else None,
        )


def transition_stage(item: VideoItem, next_stage: Stage) -> VideoItem:
    """Return a copy of ``item`` advanced to ``next_stage``.

    Raises IllegalTransition unless (item.stage, next_stage) is an edge
    of the lifecycle DAG.
    """
    if next_stage not in STAGE_DAG[item.stage]:
        raise IllegalTransition(item.stage.value, next_stage.value)
    return replace(item, stage=next_stage)


@dataclass(frozen=True)
class Comment:
    """User-provided rejection reason for one video."""

    video_id: str
    text: str

    def to_dict(self) -> dict[str, Any]:
        return {"video_id": self.video_id, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Comment":
        return cls(video_id=d["video_id"], text=d["text"])


@dataclass
class RoundRecord:
    """One interaction round: shown videos and the user's partition of them."""

    round_index: int
    sampled: list[str]
    accepted: list[str]
    rejected: list[str]
    comments: list[Comment] = field(default_factory=list)
    kind: RoundKind = RoundKind.NORMAL

    def to_dict(self) -> dict[str, Any]:
        return {
            "round_index": self.round_index,
            "sampled": list(self.sampled),
            "accepted": list(self.accepted),
            "rejected": list(self.rejected),
            "comments": [c.to_dict() for c in self.comments],
            "kind": self.kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RoundRecord":
        return cls(
            round_index=d["round_index"],
            sampled=list(d["sampled"]),
            accepted=list(d["accepted"]),
            rejected=list(d["rejected"]),
            comments=[Comment.from_dict(c) for c in d.get("comments", [])],
            kind=RoundKind(d.get("kind", "normal")),
        )


def validate_round(record: RoundRecord) -> list[str]:
    """Check the round partition invariants; returns violation names.

    Never raises: an empty list means the record is valid.
    """
    violations: list[str] = []
    sampled = set(record.sampled)
    accepted = set(record.accepted)
    rejected = set(record.rejected)
    if accepted | rejected != sampled:
        violations.append("partition incomplete")
    if accepted & rejected:
        violations.append("partition overlap")
    comment_targets = sampled if record.kind is RoundKind.DOUBLE_CHECK else rejected
    if any(c.video_id not in comment_targets for c in record.comments):
        violations.append("orphan comment")
    return violations


@dataclass
class Decision:
    """Per-video verdict with confidence and supporting evidence."""

    verdict: Verdict
    confidence: float
    triggering_attribute: Optional[str] = None
    evidence: str = ""

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.verdict is Verdict.REJECT and not self.triggering_attribute:
            raise ValueError("reject decisions must name a triggering attribute")

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "confidence": self.confidence,
            "triggering_attribute": self.triggering_attribute,
            "evidence": self.evidence,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Decision":
        return cls(
            verdict=Verdict(d["verdict"]),
            confidence=d["confidence"],
            triggering_attribute=d.get("triggering_attribute"),
            evidence=d.get("evidence", ""),
        )


@dataclass
class SessionConfig:
    """Tunable knobs for one collection session.

    ``uncertain_band`` and ``buffer_trigger`` mirror the ambiguity band
    and double-check accumulation count the workflow is built around;
    the rest are operational defaults.
    """

    top_k: int = 200
    round_sample_size: int = 8
    min_rounds: int = 3
    consecutive_clean_rounds: int = 2
    uncertain_band: tuple[float, float] = (0.40, 0.60)
    buffer_trigger: int = 100
    double_check_sample: int = 8
    accept_threshold: float = 0.60
    max_templates: int = 5
    search_limit: int = 500
    seed: int = 0

    def __post_init__(self):
        low, high = self.uncertain_band
        if not (0 <= low < high <= 1):
            raise ValueError(f"uncertain band ({low}, {high}) must satisfy 0 <= low < high <= 1")
        for name in ("top_k", "round_sample_size", "min_rounds", "consecutive_clean_rounds",
                     "buffer_trigger", "double_check_sample", "max_templates", "search_limit"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.accept_threshold <= 1:
            raise ValueError("accept_threshold must be in (0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "top_k": self.top_k,
            "round_sample_size": self.round_sample_size,
            "min_rounds": self.min_rounds,
            "consecutive_clean_rounds": self.consecutive_clean_rounds,
            "uncertain_band": list(self.uncertain_band),
            "buffer_trigger": self.buffer_trigger,
            "double_check_sample": self.double_check_sample,
            "accept_threshold": self.accept_threshold,
            "max_templates": self.max_templates,
            "search_limit": self.search_limit,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionConfig":
        d = dict(d)
        if "uncertain_band" in d:
            d["uncertain_band"] = tuple(d["uncertain_band"])
        return cls(**d)


@dataclass(frozen=True)
class TableEntry:
    """One negative value recorded for an attribute."""

    negative_value: str
    source_comment_id: str
    round_added: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "negative_value": self.negative_value,
            "source_comment_id": self.source_comment_id,
            "round_added": self.round_added,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TableEntry":
        return cls(
            negative_value=d["negative_value"],
            source_comment_id=d["source_comment_id"],
            round_added=d["round_added"],
        )


@dataclass
class StandardTable:
    """The rejection policy: attribute -> unwanted value phrases.

    Attribute names are canonical (trimmed, lower-case); (attribute,
    value) pairs are unique after case-fold; version increments on
    every mutation.
    """

    entries: dict[str, list[TableEntry]] = field(default_factory=dict)
    version: int = 0

    def has_pair(self, attribute: str, value: str) -> bool:
        attribute = attribute.strip().casefold()
        folded = value.strip().casefold()
        return any(e.negative_value.casefold() == folded for e in self.entries.get(attribute, []))

    def attributes(self) -> list[str]:
        return sorted(self.entries)

    def values_for(self, attribute: str) -> list[str]:
        return [e.negative_value for e in self.entries.get(attribute, [])]

    def copy(self) -> "StandardTable":
        return StandardTable(
            entries={a: list(es) for a, es in self.entries.items()},
            version=self.version,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": {a: [e.to_dict() for e in es] for a, es in sorted(self.entries.items())},
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StandardTable":
        return cls(
            entries={
                a: [TableEntry.from_dict(e) for e in es]
                for a, es in d.get("entries", {}).items()
            },
            version=d.get("version", 0),
        )


@dataclass
class CriterionTemplate:
    """One positive description template aggregated from accepted videos."""

    text: str
    support: list[str]
    round_added: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("template text must be non-empty")
        if not self.support:
            raise ValueError("template support must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "support": list(self.support), "round_added": self.round_added}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CriterionTemplate":
        return cls(text=d["text"], support=list(d["support"]), round_added=d["round_added"])


@dataclass
class DoubleCheckBatch:
    """Buffered low-confidence items drawn for user re-verification."""

    batch_id: int
    items: list[tuple[str, Decision]]
    prompts: dict[str, str] = field(default_factory=dict)

    def video_ids(self) -> list[str]:
        return [vid for vid, _ in self.items]

    def to_dict(self) -> dict[str, Any]:
        return {
            "batch_id": self.batch_id,
            "items": [[vid, d.to_dict()] for vid, d in self.items],
            "prompts": dict(self.prompts),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DoubleCheckBatch":
        return cls(
            batch_id=d["batch_id"],
            items=[(vid, Decision.from_dict(dd)) for vid, dd in d["items"]],
            prompts=dict(d.get("prompts", {})),
        )


@dataclass
class ManifestEntry:
    """One collected clip in the exported dataset manifest."""

    video_id: str
    source_url: str
    clip_span: Optional[tuple[float, float]]
    asset_path: str
    decision_provenance: str  # "user_accepted" | "policy_accepted"

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "source_url": self.source_url,
            "clip_span": list(self.clip_span) if self.clip_span else None,
            "asset_path": self.asset_path,
            "decision_provenance": self.decision_provenance,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ManifestEntry":
        span = d.get("clip_span")
        return cls(
            video_id=d["video_id"],
            source_url=d["source_url"],
            clip_span=tuple(span) if span else None,
            asset_path=d.get("asset_path", ""),
            decision_provenance=d["decision_provenance"],
        )


@dataclass
class DatasetManifest:
    """The collected dataset: manifest header plus one entry per clip."""

    session_id: str
    entries: list[ManifestEntry] = field(default_factory=list)
    created_at: str = ""
    policy_version_at_export: int = 0

    def video_ids(self) -> set[str]:
        return {e.video_id for e in self.entries}

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "entries": [e.to_dict() for e in self.entries],
            "created_at": self.created_at,
            "policy_version_at_export": self.policy_version_at_export,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DatasetManifest":
        return cls(
            session_id=d["session_id"],
            entries=[ManifestEntry.from_dict(e) for e in d.get("entries", [])],
            created_at=d.get("created_at", ""),
            policy_version_at_export=d.get("policy_version_at_export", 0),
        )


@dataclass
class Session:
    """Full state of one collection session.

    Everything here is reconstructible from the session's event log;
    wall-clock values are taken once when recorded and replayed as-is.
    """

    id: str
    query: Query
    config: SessionConfig
    demand_summary: str = ""
    keywords: Optional[KeywordSet] = None
    table: StandardTable = field(default_factory=StandardTable)
    templates: list[CriterionTemplate] = field(default_factory=list)
    rounds: list[RoundRecord] = field(default_factory=list)
    uncertain_buffer: list[tuple[str, Decision]] = field(default_factory=list)
    phase: Phase = Phase.PROPOSING
    created_at: str = ""
    pool: dict[str, VideoItem] = field(default_factory=dict)
    manifest: DatasetManifest = None  # type: ignore[assignment]
    audit: list[dict[str, Any]] = field(default_factory=list)
    pending_batches: list[DoubleCheckBatch] = field(default_factory=list)
    batches_issued: int = 0
    current_round: Optional[dict[str, Any]] = None
    rng_draws: int = 0
    warnings: list[str] = field(default_factory=list)
    archived_rounds: list[RoundRecord] = field(default_factory=list)
    last_event_at: str = ""

    def __post_init__(self):
        if self.manifest is None:
            self.manifest = DatasetManifest(session_id=self.id)

    def next_rng_seed(self) -> str:
        """Per-draw RNG seed; the draw counter makes resumed sessions
        continue the same deterministic sequence."""
        seed = f"{self.config.seed}:{self.rng_draws}"
        self.rng_draws += 1
        return seed

    def candidates(self) -> list[VideoItem]:
        """Unreviewed pool items still subject to policy filtering."""
        return [v for v in self.pool.values() if v.stage is Stage.CANDIDATE]

    def buffered_ids(self) -> list[str]:
        return [vid for vid, _ in self.uncertain_buffer]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "query": self.query.to_dict(),
            "config": self.config.to_dict(),
            "demand_summary": self.demand_summary,
            "keywords": self.keywords.to_dict() if self.keywords else None,
            "table": self.table.to_dict(),
            "templates": [t.to_dict() for t in self.templates],
            "rounds": [r.to_dict() for r in self.rounds],
            "uncertain_buffer": [[vid, d.to_dict()] for vid, d in self.uncertain_buffer],
            "phase": self.phase.value,
            "created_at": self.created_at,
            "pool": [v.to_dict() for v in self.pool.values()],
            "manifest": self.manifest.to_dict(),
            "audit": list(self.audit),
            "pending_batches": [b.to_dict() for b in self.pending_batches],
            "batches_issued": self.batches_issued,
            "current_round": self.current_round,
            "rng_draws": self.rng_draws,
            "warnings": list(self.warnings),
            "archived_rounds": [r.to_dict() for r in self.archived_rounds],
            "last_event_at": self.last_event_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Session":
        return cls(
            id=d["id"],
            query=Query.from_dict(d["query"]),
            config=SessionConfig.from_dict(d["config"]),
            demand_summary=d.get("demand_summary", ""),
            keywords=KeywordSet.from_dict(d["keywords"]) if d.get("keywords") else None,
            table=StandardTable.from_dict(d.get("table", {})),
            templates=[CriterionTemplate.from_dict(t) for t in d.get("templates", [])],
            rounds=[RoundRecord.from_dict(r) for r in d.get("rounds", [])],
            uncertain_buffer=[(vid, Decision.from_dict(dd)) for vid, dd in d.get("uncertain_buffer", [])],
            phase=Phase(d.get("phase", "proposing")),
            created_at=d.get("created_at", ""),
            pool={v["id"]: VideoItem.from_dict(v) for v in d.get("pool", [])},
            manifest=DatasetManifest.from_dict(d["manifest"]) if d.get("manifest") else None,
            audit=list(d.get("audit", [])),
            pending_batches=[DoubleCheckBatch.from_dict(b) for b in d.get("pending_batches", [])],
            batches_issued=d.get("batches_issued", 0),
            current_round=d.get("current_round"),
            rng_draws=d.get("rng_draws", 0),
            warnings=list(d.get("warnings", [])),
            archived_rounds=[RoundRecord.from_dict(r) for r in d.get("archived_rounds", [])],
            last_event_at=d.get("last_event_at", ""),
        )
