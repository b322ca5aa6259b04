"""Attribute-aware rejection and template-based acceptance policies.

The rejection policy stores unwanted (attribute, value) phrases mined
from rejection comments; a candidate is rejected when its
attribute-specific description is similar to any stored negative value.
The acceptance policy stores positive description templates aggregated
from accepted videos; a survivor of the rejection pass is kept when its
overall description is similar enough to some template. Both policies
update after every round, and low-similarity-margin decisions flow into
a double-check buffer for user re-verification.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .domain import (
    Comment,
    CriterionTemplate,
    Decision,
    DoubleCheckBatch,
    RoundKind,
    RoundRecord,
    Session,
    SessionConfig,
    Stage,
    StandardTable,
    TableEntry,
    Verdict,
    VideoItem,
    transition_stage,
)
from .errors import PreconditionError, ProtocolError, UnknownBatch
from .gateway import ModelGateway

DOUBLE_CHECK_PROMPT = (
    "Please double-check whether the {attribute} meets the requirements "
    "for this sample and provide additional feedback."
)

# Reserved attribute name for whole-video descriptions; also the
# double-check hint for uncertainty that arose in the acceptance pass.
OVERALL = "overall"


@dataclass
class FilterOutcome:
    """Partition of a filtered batch; the three lists cover every input item."""

    kept: list[VideoItem] = field(default_factory=list)
    discarded: list[tuple[VideoItem, Decision]] = field(default_factory=list)
    uncertain: list[tuple[VideoItem, Decision]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "kept": [v.id for v in self.kept],
            "discarded": [v.id for v, _ in self.discarded],
            "uncertain": [v.id for v, _ in self.uncertain],
        }


def apply_rejection(item: VideoItem, table: StandardTable,
                    band: tuple[float, float], gateway: ModelGateway) -> Decision:
    """Score an item against the negative standard table.

    For every attribute the item is described attribute-specifically
    and compared with each stored negative value; the worst (highest)
    similarity decides. At or above the band's high edge the item is
    rejected on the offending attribute; inside the open band it is
    uncertain; otherwise it passes. An empty table accepts vacuously.
    """
    low, high = band
    if not table.entries:
        return Decision(verdict=Verdict.ACCEPT, confidence=1.0, evidence="no negative criteria")
    worst_score = -1.0
    worst_attribute = None
    worst_value = None
    for attribute in table.attributes():
        description = gateway.describe_attribute(item, attribute)
        for value in table.values_for(attribute):
            score = gateway.similarity(description, value)
            # strictly-greater keeps the alphabetically first attribute on ties
            if score > worst_score:
                worst_score, worst_attribute, worst_value = score, attribute, value
    evidence = f"{worst_attribute} matched negative value {worst_value!r} at {worst_score:.3f}"
    if worst_score >= high:
        return Decision(
            verdict=Verdict.REJECT,
            confidence=worst_score,
            triggering_attribute=worst_attribute,
            evidence=evidence,
        )
    if low < worst_score < high:
        return Decision(
            verdict=Verdict.UNCERTAIN,
            confidence=worst_score,
            triggering_attribute=worst_attribute,
            evidence=evidence,
        )
    return Decision(
        verdict=Verdict.ACCEPT,
        confidence=1.0 - max(worst_score, 0.0),
        evidence=f"no negative value similar (max {worst_score:.3f})",
    )


def apply_acceptance(item: VideoItem, templates: Sequence[CriterionTemplate],
                     threshold: float, band: tuple[float, float],
                     gateway: ModelGateway) -> Decision:
    """Score an item against the positive criterion templates.

    The best template similarity decides: at or above the threshold the
    item is accepted, inside the open band it is uncertain, otherwise
    rejected. With no templates yet there is no positive evidence, so
    the item is uncertain at the band midpoint.
    """
    low, high = band
    if not templates:
        return Decision(
            verdict=Verdict.UNCERTAIN,
            confidence=(low + high) / 2,
            evidence="no acceptance templates yet",
        )
    description = gateway.describe_attribute(item, OVERALL)
    best = max(gateway.similarity(description, t.text) for t in templates)
    if best >= threshold:
        return Decision(
            verdict=Verdict.ACCEPT,
            confidence=best,
            evidence=f"matches template at {best:.3f}",
        )
    if low < best < high:
        return Decision(
            verdict=Verdict.UNCERTAIN,
            confidence=best,
            evidence=f"borderline template match {best:.3f}",
        )
    return Decision(
        verdict=Verdict.REJECT,
        confidence=1.0 - best,
        triggering_attribute=OVERALL,
        evidence=f"best template match only {best:.3f}",
    )


def filter_batch(items: Sequence[VideoItem], table: StandardTable,
                 templates: Sequence[CriterionTemplate], config: SessionConfig,
                 gateway: ModelGateway) -> FilterOutcome:
    """Run the rejection pass, then the acceptance pass on survivors.

    Returns transitioned copies; callers decide whether the outcome is
    committed to a session pool or stays provisional.
    """
    outcome = FilterOutcome()
    band = config.uncertain_band
    for item in items:
        if item.stage is not Stage.CANDIDATE:
            raise PreconditionError(f"item {item.id} is {item.stage.value}, not candidate")
        # detach the description cache: enrichment from provisional
        # filtering must not leak into un-committed pool state
        item = replace(item, description_cache=dict(item.description_cache))
        rejection = apply_rejection(item, table, band, gateway)
        if rejection.verdict is Verdict.REJECT:
            outcome.discarded.append((transition_stage(item, Stage.DISCARDED), rejection))
            continue
        if rejection.verdict is Verdict.UNCERTAIN:
            outcome.uncertain.append((transition_stage(item, Stage.UNCERTAIN), rejection))
            continue
        acceptance = apply_acceptance(item, templates, config.accept_threshold, band, gateway)
        if acceptance.verdict is Verdict.ACCEPT:
            outcome.kept.append(transition_stage(item, Stage.KEPT))
        elif acceptance.verdict is Verdict.UNCERTAIN:
            outcome.uncertain.append((transition_stage(item, Stage.UNCERTAIN), acceptance))
        else:
            outcome.discarded.append((transition_stage(item, Stage.DISCARDED), acceptance))
    return outcome


def update_rejection(table: StandardTable, rejected: Sequence[VideoItem],
                     comments: Sequence[Comment], gateway: ModelGateway,
                     round_index: int = 0) -> tuple[StandardTable, list[dict]]:
    """Fold rejection comments into a new standard table.

    Comments whose attribute extraction fails are returned in the audit
    list instead of aborting the update. The table version bumps only
    when entries actually changed.
    """
    rejected_ids = {v.id for v in rejected}
    for comment in comments:
        if comment.video_id not in rejected_ids:
            raise PreconditionError(f"comment targets non-rejected video {comment.video_id}")
    updated = table.copy()
    audit: list[dict] = []
    changed = False
    for comment in comments:
        try:
            extraction = gateway.extract_attributes(comment)
        except ProtocolError as exc:
            audit.append({"video_id": comment.video_id, "text": comment.text, "error": str(exc)})
            continue
        for attribute, value in extraction.pairs:
            attribute = attribute.strip().casefold()
            if not attribute or updated.has_pair(attribute, value):
                continue
            updated.entries.setdefault(attribute, []).append(
                TableEntry(negative_value=value, source_comment_id=comment.video_id,
                           round_added=round_index)
            )
            changed = True
    if changed:
        updated.version += 1
    return updated, audit


def update_acceptance(templates: Sequence[CriterionTemplate], accepted: Sequence[VideoItem],
                      max_templates: int, gateway: ModelGateway,
                      round_index: int = 0) -> list[CriterionTemplate]:
    """Regenerate criterion templates from prior templates plus newly
    accepted videos.

    Every prior template's support and every accepted video id is
    attached to the output template most similar to its text, so the
    union of supports always covers all contributing videos.
    """
    if not accepted:
        raise PreconditionError("update_acceptance needs at least one accepted video")
    sources: list[tuple[str, list[str]]] = [(t.text, list(t.support)) for t in templates]
    for item in accepted:
        sources.append((gateway.describe_attribute(item, OVERALL), [item.id]))
    texts = [text for text, _ in sources]
    aggregated = gateway.aggregate_templates(texts, max_templates)

    supports: list[list[str]] = [[] for _ in aggregated]
    for text, ids in sources:
        best_index = max(
            range(len(aggregated)),
            key=lambda i: (gateway.similarity(text, aggregated[i]), -i),
        )
        for vid in ids:
            if vid not in supports[best_index]:
                supports[best_index].append(vid)

    previous_rounds = {t.text.casefold(): t.round_added for t in templates}
    result = []
    for text, support in zip(aggregated, supports):
        if not support:
            continue
        result.append(
            CriterionTemplate(
                text=text,
                support=support,
                round_added=previous_rounds.get(text.casefold(), round_index),
            )
        )
    return result


def buffer_push(session: Session, item: VideoItem, decision: Decision) -> Optional[DoubleCheckBatch]:
    """Append a low-confidence decision to the double-check buffer.

    When the buffer length reaches the configured trigger, a random
    subset (seeded draw) leaves the buffer as a DoubleCheckBatch whose
    per-item prompt names the ambiguous attribute.
    """
    if decision.verdict is not Verdict.UNCERTAIN:
        raise PreconditionError("only uncertain decisions enter the double-check buffer")
    session.uncertain_buffer.append((item.id, decision))
    if len(session.uncertain_buffer) < session.config.buffer_trigger:
        return None
    return draw_double_check_batch(session)


def draw_double_check_batch(session: Session) -> DoubleCheckBatch:
    """Draw a seeded random sample out of the buffer into a batch."""
    count = min(session.config.double_check_sample, len(session.uncertain_buffer))
    rng = random.Random(session.next_rng_seed())
    chosen = sorted(rng.sample(range(len(session.uncertain_buffer)), count))
    items = [session.uncertain_buffer[i] for i in chosen]
    for i in reversed(chosen):
        del session.uncertain_buffer[i]
    batch = DoubleCheckBatch(batch_id=session.batches_issued, items=items)
    session.batches_issued += 1
    for vid, decision in items:
        attribute = decision.triggering_attribute or OVERALL
        batch.prompts[vid] = DOUBLE_CHECK_PROMPT.replace("{attribute}", attribute)
    session.pending_batches.append(batch)
    return batch


def incorporate_double_check(session: Session, record: RoundRecord,
                             gateway: ModelGateway) -> None:
    """Fold double-check feedback into both policies.

    The record must cover exactly the oldest pending batch; confirmed
    items strengthen the acceptance templates, rejected items' comments
    extend the standard table.
    """
    if record.kind is not RoundKind.DOUBLE_CHECK:
        raise PreconditionError("record is not double-check feedback")
    if not session.pending_batches:
        raise UnknownBatch("no double-check batch is pending")
    batch = session.pending_batches[0]
    if set(record.sampled) != set(batch.video_ids()):
        raise UnknownBatch("feedback does not match the issued double-check batch")
    session.pending_batches.pop(0)

    accepted_items = [session.pool[vid] for vid in record.accepted]
    rejected_items = [session.pool[vid] for vid in record.rejected]
    if accepted_items:
        session.templates = update_acceptance(
            session.templates, accepted_items, session.config.max_templates,
            gateway, record.round_index,
        )
    # double-check rounds allow comments on any sampled item, but only
    # comments on rejected ones are rejection reasons
    rejection_comments = [c for c in record.comments if c.video_id in set(record.rejected)]
    if rejection_comments:
        session.table, audit = update_rejection(
            session.table, rejected_items, rejection_comments, gateway, record.round_index,
        )
        session.audit.extend(audit)
    for vid in record.accepted:
        session.pool[vid] = transition_stage(session.pool[vid], Stage.USER_ACCEPTED)
    for vid in record.rejected:
        session.pool[vid] = transition_stage(session.pool[vid], Stage.USER_REJECTED)
