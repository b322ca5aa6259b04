"""Event-sourced session persistence.

Every state mutation appends one JSONL event carrying the new values of
the session fields it touched; replaying the log folds those deltas
back into an identical session. Wall-clock timestamps are recorded in
events and reused on replay, so reconstruction is byte-identical.

Session directory layout::

    sessions/<id>/
        events.log            append-only JSONL
        session.json          latest snapshot
        standard_table.json   current rejection policy
        templates.json        current acceptance policy
        policy_history/       per-round policy snapshots
        manifest.jsonl        written by export
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional

from .domain import (
    CriterionTemplate,
    DatasetManifest,
    Decision,
    DoubleCheckBatch,
    KeywordSet,
    Phase,
    Query,
    RoundRecord,
    Session,
    SessionConfig,
    StandardTable,
    VideoItem,
)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def jsonl_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False) + "\n"


# Decoders for partially-updated session fields; scalars and raw dicts
# pass through unchanged.
_FIELD_DECODERS = {
    "keywords": lambda v: KeywordSet.from_dict(v) if v else None,
    "table": StandardTable.from_dict,
    "templates": lambda v: [CriterionTemplate.from_dict(t) for t in v],
    "rounds": lambda v: [RoundRecord.from_dict(r) for r in v],
    "archived_rounds": lambda v: [RoundRecord.from_dict(r) for r in v],
    "uncertain_buffer": lambda v: [(vid, Decision.from_dict(d)) for vid, d in v],
    "pending_batches": lambda v: [DoubleCheckBatch.from_dict(b) for b in v],
    "manifest": DatasetManifest.from_dict,
    "phase": Phase,
    "pool": lambda v: {item["id"]: VideoItem.from_dict(item) for item in v},
}


def apply_event(session: Optional[Session], event: dict[str, Any]) -> Session:
    """Fold one event into session state; pure apart from mutation of
    the passed session."""
    if event["type"] == "created":
        data = event["set"]
        session = Session(
            id=data["id"],
            query=Query.from_dict(data["query"]),
            config=SessionConfig.from_dict(data["config"]),
            created_at=event["at"],
        )
        session.last_event_at = event["at"]
        return session
    if session is None:
        raise ValueError("event log does not start with a created event")
    for name, value in event.get("set", {}).items():
        decoder = _FIELD_DECODERS.get(name)
        setattr(session, name, decoder(value) if decoder else value)
    for vid, item in event.get("pool_updates", {}).items():
        session.pool[vid] = VideoItem.from_dict(item)
    session.last_event_at = event["at"]
    return session


class SessionStore:
    """Directory-backed store for sessions and their event logs."""

    def __init__(self, root_dir: str | Path):
        self.root = Path(root_dir)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)

    def session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in (self.root / "sessions").iterdir() if p.is_dir())

    def exists(self, session_id: str) -> bool:
        return (self.session_dir(session_id) / "events.log").exists()

    def _next_seq(self, session_id: str) -> int:
        path = self.session_dir(session_id) / "events.log"
        if not path.exists():
            return 0
        with path.open(encoding="utf-8") as fh:
            return sum(1 for _ in fh)

    def append_event(self, session_id: str, event_type: str, set_fields: dict[str, Any],
                     pool_updates: Optional[dict[str, Any]] = None,
                     at: Optional[str] = None) -> dict[str, Any]:
        directory = self.session_dir(session_id)
        directory.mkdir(parents=True, exist_ok=True)
        event = {
            "seq": self._next_seq(session_id),
            "at": at or utc_now(),
            "type": event_type,
            "set": set_fields,
        }
        if pool_updates:
            event["pool_updates"] = pool_updates
        with (directory / "events.log").open("a", encoding="utf-8") as fh:
            fh.write(jsonl_line(event))
        return event

    def events(self, session_id: str) -> Iterable[dict[str, Any]]:
        path = self.session_dir(session_id) / "events.log"
        if not path.exists():
            return []
        with path.open(encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def replay(self, session_id: str) -> Session:
        """Reconstruct the session purely from its event log."""
        session: Optional[Session] = None
        for event in self.events(session_id):
            session = apply_event(session, event)
        if session is None:
            raise FileNotFoundError(f"no events for session {session_id}")
        return session

    def write_snapshot(self, session: Session) -> None:
        directory = self.session_dir(session.id)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "session.json").write_text(
            canonical_json(session.to_dict()), encoding="utf-8"
        )
        (directory / "standard_table.json").write_text(
            canonical_json(session.table.to_dict()), encoding="utf-8"
        )
        (directory / "templates.json").write_text(
            canonical_json([t.to_dict() for t in session.templates]), encoding="utf-8"
        )

    def write_policy_history(self, session: Session, round_index: int) -> None:
        history = self.session_dir(session.id) / "policy_history"
        history.mkdir(parents=True, exist_ok=True)
        (history / f"table.r{round_index}.json").write_text(
            canonical_json(session.table.to_dict()), encoding="utf-8"
        )
        (history / f"templates.r{round_index}.json").write_text(
            canonical_json([t.to_dict() for t in session.templates]), encoding="utf-8"
        )

    def load_snapshot(self, session_id: str) -> Session:
        path = self.session_dir(session_id) / "session.json"
        if not path.exists():
            return self.replay(session_id)
        return Session.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def snapshot_bytes(self, session_id: str) -> bytes:
        path = self.session_dir(session_id) / "session.json"
        return path.read_bytes() if path.exists() else b""
