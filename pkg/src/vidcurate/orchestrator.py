"""End-to-end session workflow.

Drives proposal, the interactive feedback loop with double-check
interleavings, the termination check and the fully automatic scale-up.
Per-round policy filtering is provisional: unreviewed pool items stay
candidates and are re-filtered with the freshest policy every round.
Stage transitions commit only when an item is buffered for double
check, reviewed by the user, or decided in auto mode.
"""

from __future__ import annotations

import logging
import random
import uuid
from pathlib import Path
from typing import Any, Optional, Sequence

from . import policy as policy_ops
from . import proposal
from .domain import (
    DatasetManifest,
    ManifestEntry,
    Phase,
    Query,
    RoundKind,
    RoundRecord,
    Session,
    SessionConfig,
    Stage,
    Verdict,
    VideoItem,
    transition_stage,
    validate_round,
)
from .errors import (
    AdapterUnavailable,
    BackendUnavailable,
    PhaseError,
    PoolExhausted,
    PreconditionError,
    StaleRound,
    ValidationFailed,
)
from .gateway import ModelGateway
from .policy import FilterOutcome, filter_batch
from .store import SessionStore, jsonl_line, utc_now

logger = logging.getLogger(__name__)

_PHASE_EDGES = {
    (Phase.PROPOSING, Phase.INTERACTIVE),
    (Phase.INTERACTIVE, Phase.AUTO),
    (Phase.AUTO, Phase.DONE),
}

PROVENANCE_USER = "user_accepted"
PROVENANCE_POLICY = "policy_accepted"

AUTO_EVENT_CHUNK = 25


class Orchestrator:
    """Owns sessions: one logical writer per session, event-sourced."""

    def __init__(self, gateway: ModelGateway, adapter: proposal.SourceAdapter,
                 grounder: proposal.Grounder, store: SessionStore):
        self.gateway = gateway
        self.adapter = adapter
        self.grounder = grounder
        self.store = store

    # -- persistence helpers -------------------------------------------------

    def _commit(self, session: Session, event_type: str, fields: Sequence[str],
                pool_ids: Sequence[str] = ()) -> None:
        """Append an event carrying the current values of ``fields`` and
        refresh the snapshot."""
        snapshot = session.to_dict()
        set_fields = {name: snapshot[name] for name in fields}
        pool_updates = {vid: session.pool[vid].to_dict() for vid in pool_ids}
        event = self.store.append_event(session.id, event_type, set_fields, pool_updates)
        session.last_event_at = event["at"]
        self.store.write_snapshot(session)

    def _set_phase(self, session: Session, new_phase: Phase) -> None:
        if new_phase is Phase.PROPOSING or (session.phase, new_phase) in _PHASE_EDGES:
            session.phase = new_phase
            return
        raise PhaseError(f"cannot move phase {session.phase.value} -> {new_phase.value}")

    def load(self, session_id: str) -> Session:
        return self.store.load_snapshot(session_id)

    # -- proposal ------------------------------------------------------------

    def start_session(self, query: Query, config: Optional[SessionConfig] = None,
                      session_id: Optional[str] = None) -> Session:
        """Create a session and run the proposal pipeline.

        On pipeline failure the session persists in the proposing phase
        and ``propose`` can be retried.
        """
        session = Session(
            id=session_id or uuid.uuid4().hex[:12],
            query=query,
            config=config or SessionConfig(),
        )
        event = self.store.append_event(
            session.id, "created",
            {"id": session.id, "query": query.to_dict(), "config": session.config.to_dict()},
        )
        session.created_at = event["at"]
        session.last_event_at = event["at"]
        self.store.write_snapshot(session)
        self.propose(session)
        return session

    def propose(self, session: Session) -> Session:
        """Keyword generation, search, grounding, Top-K initialization."""
        if session.phase is not Phase.PROPOSING:
            raise PhaseError(f"propose requires proposing phase, not {session.phase.value}")
        keywords = self.gateway.generate_keywords(session.query)
        sourced = proposal.search(keywords, self.adapter, session.config.search_limit)
        if not sourced:
            session.warnings.append("search returned no results")
        grounded = proposal.ground(sourced, session.query, self.gateway, self.grounder)
        pool = proposal.init_candidates(
            grounded, session.query, session.config.top_k, self.gateway
        ) if grounded else proposal.CandidatePool(demand_text=self.gateway.summarize_demand(session.query))
        session.keywords = keywords
        session.demand_summary = pool.demand_text
        session.pool = {item.id: item for item in pool.items}
        self._set_phase(session, Phase.INTERACTIVE)
        self._commit(session, "proposed",
                     ["keywords", "demand_summary", "pool", "phase", "warnings"])
        return session

    def _refill(self, session: Session) -> int:
        """Re-search with the session keywords; returns how many new
        candidates entered the pool."""
        assert session.keywords is not None
        sourced = proposal.search(session.keywords, self.adapter, session.config.search_limit)
        fresh = [item for item in sourced if item.id not in session.pool]
        if not fresh:
            return 0
        grounded = proposal.ground(fresh, session.query, self.gateway, self.grounder)
        if not grounded:
            return 0
        pool = proposal.init_candidates(
            grounded, session.query, max(len(grounded), 1), self.gateway
        )
        for item in pool.items:
            session.pool[item.id] = item
        return len(pool.items)

    # -- interactive rounds --------------------------------------------------

    def next_round(self, session: Session) -> dict[str, Any]:
        """Issue (or re-serve) the current round skeleton.

        A pending double-check batch takes priority over normal
        sampling; otherwise the unreviewed candidates are re-filtered
        with the current policy and a seeded uniform sample of the kept
        and uncertain items is drawn.
        """
        if session.phase is not Phase.INTERACTIVE:
            raise PhaseError(f"rounds require interactive phase, not {session.phase.value}")
        if session.current_round is not None:
            return session.current_round

        round_index = len(session.rounds) + 1
        if session.pending_batches:
            skeleton = self._double_check_skeleton(session, round_index)
            session.current_round = skeleton
            self._commit(session, "round_issued", ["current_round"])
            return skeleton

        committed: list[str] = []
        outcome = self._filter_candidates(session)
        virgin = not session.table.entries and not session.templates
        if not virgin:
            buffered_before = set(session.buffered_ids())
            for item, decision in outcome.uncertain:
                if item.id in buffered_before:
                    continue
                session.pool[item.id] = item  # commit the uncertain stage
                committed.append(item.id)
                policy_ops.buffer_push(session, item, decision)
            if session.pending_batches:
                skeleton = self._double_check_skeleton(session, round_index)
                session.current_round = skeleton
                self._commit(
                    session, "round_issued",
                    ["current_round", "uncertain_buffer", "pending_batches",
                     "batches_issued", "rng_draws"],
                    committed,
                )
                return skeleton

        eligible: list[tuple[str, str]] = [(item.id, "kept") for item in outcome.kept]
        if virgin:
            eligible += [(item.id, "uncertain") for item, _ in outcome.uncertain]
        else:
            eligible += [(vid, "uncertain") for vid in session.buffered_ids()]

        if not eligible:
            if self._refill(session) == 0:
                raise PoolExhausted("no unreviewed candidates remain")
            outcome = self._filter_candidates(session)
            eligible = [(item.id, "kept") for item in outcome.kept]
            if virgin:
                eligible += [(item.id, "uncertain") for item, _ in outcome.uncertain]
            if not eligible:
                raise PoolExhausted("re-search produced no reviewable candidates")

        count = min(session.config.round_sample_size, len(eligible))
        rng = random.Random(session.next_rng_seed())
        sample = rng.sample(eligible, count)
        sampled_ids = [vid for vid, _ in sample]
        via = {vid: stage for vid, stage in sample}
        # sampled buffer items get their review now instead of a later batch
        session.uncertain_buffer = [
            (vid, d) for vid, d in session.uncertain_buffer if vid not in via
        ]
        skeleton = {
            "round_index": round_index,
            "kind": RoundKind.NORMAL.value,
            "sampled": sampled_ids,
            "via": via,
            "items": [self._round_item(session, vid) for vid in sampled_ids],
            "filter_summary": outcome.summary(),
        }
        session.current_round = skeleton
        self._commit(
            session, "round_issued",
            ["current_round", "uncertain_buffer", "pending_batches", "batches_issued",
             "rng_draws"],
            committed,
        )
        return skeleton

    def _filter_candidates(self, session: Session) -> FilterOutcome:
        return filter_batch(
            session.candidates(), session.table, session.templates,
            session.config, self.gateway,
        )

    def _double_check_skeleton(self, session: Session, round_index: int) -> dict[str, Any]:
        batch = session.pending_batches[0]
        items = []
        for vid, decision in batch.items:
            entry = self._round_item(session, vid)
            entry["triggering_attribute"] = decision.triggering_attribute or policy_ops.OVERALL
            entry["prompt"] = batch.prompts[vid]
            items.append(entry)
        return {
            "round_index": round_index,
            "kind": RoundKind.DOUBLE_CHECK.value,
            "sampled": batch.video_ids(),
            "via": {vid: "uncertain" for vid in batch.video_ids()},
            "batch_id": batch.batch_id,
            "items": items,
        }

    def _round_item(self, session: Session, vid: str) -> dict[str, Any]:
        item = session.pool[vid]
        return {
            "id": item.id,
            "asset_url": f"/assets/{item.id}",
            "clip_span": list(item.clip_span) if item.clip_span else None,
            "triggering_attribute": None,
        }

    def submit_feedback(self, session: Session, record: RoundRecord) -> bool:
        """Apply a round's feedback: policy updates, stage commits,
        manifest growth. Returns the termination predicate."""
        if session.phase is not Phase.INTERACTIVE:
            raise PhaseError(f"feedback requires interactive phase, not {session.phase.value}")
        current = session.current_round
        if current is None:
            raise StaleRound("no round is currently issued")
        if record.round_index != current["round_index"]:
            raise StaleRound(
                f"expected round {current['round_index']}, got {record.round_index}"
            )
        if set(record.sampled) != set(current["sampled"]):
            raise StaleRound("sampled set does not match the issued round")
        violations = validate_round(record)
        if violations:
            raise ValidationFailed(violations)
        if record.kind.value != current["kind"]:
            raise ValidationFailed(["round kind mismatch"])

        if record.kind is RoundKind.DOUBLE_CHECK:
            policy_ops.incorporate_double_check(session, record, self.gateway)
        else:
            accepted_items = [session.pool[vid] for vid in record.accepted]
            rejected_items = [session.pool[vid] for vid in record.rejected]
            if record.comments:
                session.table, audit = policy_ops.update_rejection(
                    session.table, rejected_items, record.comments,
                    self.gateway, record.round_index,
                )
                session.audit.extend(audit)
            if accepted_items:
                session.templates = policy_ops.update_acceptance(
                    session.templates, accepted_items, session.config.max_templates,
                    self.gateway, record.round_index,
                )
            via = current.get("via", {})
            for vid in record.sampled:
                final = Stage.USER_ACCEPTED if vid in set(record.accepted) else Stage.USER_REJECTED
                item = session.pool[vid]
                if item.stage is Stage.CANDIDATE:
                    item = transition_stage(
                        item,
                        Stage.KEPT if via.get(vid) == "kept" else Stage.UNCERTAIN,
                    )
                session.pool[vid] = transition_stage(item, final)

        for vid in record.accepted:
            self._add_manifest_entry(session, session.pool[vid], PROVENANCE_USER)
        session.rounds.append(record)
        session.current_round = None
        self.store.write_policy_history(session, record.round_index)
        self._commit(
            session, "feedback",
            ["rounds", "table", "templates", "audit", "manifest", "uncertain_buffer",
             "pending_batches", "current_round"],
            record.sampled,
        )
        return self.check_termination(session)

    def _add_manifest_entry(self, session: Session, item: VideoItem, provenance: str) -> bool:
        if item.id in session.manifest.video_ids():
            return False
        session.manifest.entries.append(
            ManifestEntry(
                video_id=item.id,
                source_url=item.source_url,
                clip_span=item.clip_span,
                asset_path=item.asset_path,
                decision_provenance=provenance,
            )
        )
        if not session.manifest.created_at:
            session.manifest.created_at = session.last_event_at
        session.manifest.policy_version_at_export = session.table.version
        return True

    def check_termination(self, session: Session) -> bool:
        """True when enough rounds have run, the recent normal rounds
        were all rejection-free, and no double-check batch is waiting."""
        if session.phase is not Phase.INTERACTIVE:
            return False
        if len(session.rounds) < session.config.min_rounds:
            return False
        if session.pending_batches:
            return False
        normal = [r for r in session.rounds if r.kind is RoundKind.NORMAL]
        streak = session.config.consecutive_clean_rounds
        if len(normal) < streak:
            return False
        return all(not r.rejected for r in normal[-streak:])

    # -- automatic scale-up --------------------------------------------------

    def run_auto(self, session: Session, budget: int,
                 budget_seconds: Optional[float] = None) -> DatasetManifest:
        """Collect with the frozen final policy until ``budget`` new
        entries (or the optional wall-clock budget) are reached.

        Uncertain items have no user to ask, so they are logged and
        dropped. Adapter or backend failures pause the run; calling
        again resumes from the persisted pool state.
        """
        import time

        if session.phase is Phase.INTERACTIVE:
            if not self.check_termination(session):
                raise PreconditionError("session has not reached termination")
            self._set_phase(session, Phase.AUTO)
            self._commit(session, "auto_started", ["phase"])
        elif session.phase is not Phase.AUTO:
            raise PhaseError(f"auto mode unavailable in phase {session.phase.value}")

        frozen_version = session.table.version
        frozen_templates = [t.text for t in session.templates]
        started = time.monotonic()
        incremental = DatasetManifest(
            session_id=session.id,
            created_at=session.last_event_at,
            policy_version_at_export=frozen_version,
        )
        touched: list[str] = []

        def flush(reason: str) -> None:
            if touched:
                self._commit(session, "auto_progress",
                             ["manifest", "audit", "warnings"], touched)
                touched.clear()
            logger.debug("auto flush (%s): %d collected", reason, len(incremental.entries))

        while len(incremental.entries) < budget:
            if budget_seconds is not None and time.monotonic() - started > budget_seconds:
                break
            candidates = session.candidates()
            if not candidates:
                try:
                    if self._refill(session) == 0:
                        session.warnings.append("auto mode exhausted all sources")
                        break
                except (AdapterUnavailable, BackendUnavailable) as exc:
                    session.warnings.append(f"auto mode paused: {exc}")
                    break
                continue
            try:
                outcome = filter_batch(
                    candidates, session.table, session.templates,
                    session.config, self.gateway,
                )
            except (AdapterUnavailable, BackendUnavailable) as exc:
                session.warnings.append(f"auto mode paused: {exc}")
                break
            for item, decision in outcome.discarded:
                session.pool[item.id] = item
                touched.append(item.id)
            for item, decision in outcome.uncertain:
                session.pool[item.id] = item
                touched.append(item.id)
                session.audit.append(
                    {"video_id": item.id, "note": "uncertain in auto mode",
                     "decision": decision.to_dict()}
                )
            for item in outcome.kept:
                if len(incremental.entries) >= budget:
                    break  # leave the rest as candidates for the next call
                session.pool[item.id] = item
                touched.append(item.id)
                if self._add_manifest_entry(session, item, PROVENANCE_POLICY):
                    incremental.entries.append(session.manifest.entries[-1])
                if len(touched) >= AUTO_EVENT_CHUNK:
                    flush("chunk")
            if len(touched) >= AUTO_EVENT_CHUNK:
                flush("chunk")

        flush("final")
        assert session.table.version == frozen_version, "policy changed during auto mode"
        assert [t.text for t in session.templates] == frozen_templates
        return incremental

    def finalize(self, session: Session) -> Session:
        self._set_phase(session, Phase.DONE)
        self._commit(session, "finalized", ["phase"])
        return session

    # -- reset and export ----------------------------------------------------

    def reset_session(self, session: Session) -> Session:
        """Archive history and start over with fresh policy state and
        the same query."""
        session.archived_rounds.extend(session.rounds)
        session.rounds = []
        session.table = type(session.table)()
        session.templates = []
        session.uncertain_buffer = []
        session.pending_batches = []
        session.current_round = None
        session.manifest = DatasetManifest(session_id=session.id)
        session.pool = {}
        session.demand_summary = ""
        session.keywords = None
        self._set_phase(session, Phase.PROPOSING)
        self._commit(
            session, "reset",
            ["archived_rounds", "rounds", "table", "templates", "uncertain_buffer",
             "pending_batches", "current_round", "manifest", "pool", "demand_summary",
             "keywords", "phase"],
        )
        return session

    def export_manifest(self, session: Session, path: str | Path,
                        force: bool = False) -> Path:
        """Write the manifest as JSONL: a header line, then one entry
        per line in collection order, bit-stable field order."""
        if not session.manifest.entries and not force:
            raise PreconditionError("manifest is empty; pass force to export anyway")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "session_id": session.id,
            "created_at": session.manifest.created_at or session.last_event_at,
            "policy_version_at_export": session.table.version,
            "entry_count": len(session.manifest.entries),
        }
        with path.open("w", encoding="utf-8") as fh:
            fh.write(jsonl_line(header))
            for entry in session.manifest.entries:
                fh.write(jsonl_line(entry.to_dict()))
        return path

    def manifest_bytes(self, session: Session) -> bytes:
        """The exact bytes export_manifest would write."""
        header = {
            "session_id": session.id,
            "created_at": session.manifest.created_at or session.last_event_at,
            "policy_version_at_export": session.table.version,
            "entry_count": len(session.manifest.entries),
        }
        lines = [jsonl_line(header)] + [jsonl_line(e.to_dict()) for e in session.manifest.entries]
        return "".join(lines).encode("utf-8")

    def status(self, session: Session) -> dict[str, Any]:
        return {
            "phase": session.phase.value,
            "rounds": len(session.rounds),
            "buffer_len": len(session.uncertain_buffer),
            "manifest_count": len(session.manifest.entries),
            "policy_version": session.table.version,
        }
