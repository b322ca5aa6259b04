"""Data model invariants: lifecycle DAG, round validation, serialization."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from vidcurate.domain import (
    Comment,
    Decision,
    KeywordSet,
    Query,
    RoundKind,
    RoundRecord,
    STAGE_DAG,
    SessionConfig,
    Stage,
    StandardTable,
    TableEntry,
    Verdict,
    VideoItem,
    transition_stage,
    validate_round,
)
from vidcurate.errors import IllegalTransition


def make_item(stage=Stage.SOURCED, **kwargs):
    defaults = dict(id="v1", source_url="https://videos.example/v1", stage=stage)
    defaults.update(kwargs)
    return VideoItem(**defaults)


class TestStageMachine:
    def test_candidate_to_kept(self):
        item = transition_stage(make_item(Stage.CANDIDATE), Stage.KEPT)
        assert item.stage is Stage.KEPT

    def test_sourced_to_kept_is_illegal(self):
        with pytest.raises(IllegalTransition):
            transition_stage(make_item(Stage.SOURCED), Stage.KEPT)

    def test_uncertain_to_user_accepted(self):
        item = transition_stage(make_item(Stage.UNCERTAIN), Stage.USER_ACCEPTED)
        assert item.stage is Stage.USER_ACCEPTED

    def test_transition_preserves_other_fields(self):
        item = make_item(Stage.GROUNDED, clip_span=(1.0, 3.0), duration_s=9.0)
        moved = transition_stage(item, Stage.CANDIDATE)
        assert (moved.id, moved.source_url, moved.clip_span, moved.duration_s) == (
            item.id, item.source_url, item.clip_span, item.duration_s,
        )

    def test_exhaustive_edges(self):
        # every pair is either a declared DAG edge or rejected
        for src in Stage:
            for dst in Stage:
                item = make_item(src)
                if dst in STAGE_DAG[src]:
                    assert transition_stage(item, dst).stage is dst
                else:
                    with pytest.raises(IllegalTransition):
                        transition_stage(item, dst)

    def test_dag_is_acyclic(self):
        # DFS from each node never revisits it
        def reachable(start):
            seen, frontier = set(), [start]
            while frontier:
                node = frontier.pop()
                for nxt in STAGE_DAG[node]:
                    if nxt not in seen:
                        seen.add(nxt)
                        frontier.append(nxt)
            return seen

        for stage in Stage:
            assert stage not in reachable(stage)


class TestValidateRound:
    def test_valid_partition(self):
        record = RoundRecord(
            round_index=1, sampled=["a", "b"], accepted=["a"], rejected=["b"],
            comments=[Comment(video_id="b", text="wrong color")],
        )
        assert validate_round(record) == []

    def test_partition_incomplete(self):
        record = RoundRecord(round_index=1, sampled=["a", "b"], accepted=["a"], rejected=[])
        assert validate_round(record) == ["partition incomplete"]

    def test_partition_overlap(self):
        record = RoundRecord(round_index=1, sampled=["a"], accepted=["a"], rejected=["a"])
        assert "partition overlap" in validate_round(record)

    def test_orphan_comment_normal_round(self):
        record = RoundRecord(
            round_index=1, sampled=["a", "b"], accepted=["a"], rejected=["b"],
            comments=[Comment(video_id="a", text="why commented?")],
        )
        assert validate_round(record) == ["orphan comment"]

    def test_double_check_round_allows_comments_on_any_sampled(self):
        record = RoundRecord(
            round_index=2, sampled=["a", "b"], accepted=["a"], rejected=["b"],
            comments=[Comment(video_id="a", text="confirmed, nice color")],
            kind=RoundKind.DOUBLE_CHECK,
        )
        assert validate_round(record) == []

    def test_validation_never_raises(self):
        assert validate_round(RoundRecord(round_index=1, sampled=[], accepted=[], rejected=[])) == []


class TestInvariants:
    def test_query_requires_text(self):
        with pytest.raises(ValueError):
            Query("   ")

    def test_keywordset_dedupes_casefold(self):
        ks = KeywordSet(["Cat", " kitten ", "cat", ""])
        assert ks.keywords == ("Cat", "kitten")

    def test_keywordset_requires_one(self):
        with pytest.raises(ValueError):
            KeywordSet(["", "  "])

    def test_clip_span_ordering(self):
        with pytest.raises(ValueError):
            make_item(clip_span=(5.0, 2.0))

    def test_decision_bounds(self):
        with pytest.raises(ValueError):
            Decision(verdict=Verdict.ACCEPT, confidence=1.5)

    def test_reject_needs_attribute(self):
        with pytest.raises(ValueError):
            Decision(verdict=Verdict.REJECT, confidence=0.8)

    def test_config_band_ordering(self):
        with pytest.raises(ValueError):
            SessionConfig(uncertain_band=(0.7, 0.6))

    def test_table_dedupe_is_casefold(self):
        table = StandardTable(entries={"appearance": [
            TableEntry(negative_value="Black", source_comment_id="c1", round_added=1)
        ]})
        assert table.has_pair("APPEARANCE", "black")
        assert not table.has_pair("appearance", "white")


# strategies for round-trip checks
_ids = st.text(alphabet="abcdef0123456789", min_size=1, max_size=8)
_words = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd")), min_size=1, max_size=10
)


@given(
    st.builds(
        VideoItem,
        id=_ids,
        source_url=_words,
        asset_path=_words,
        clip_span=st.one_of(
            st.none(),
            st.tuples(st.floats(0, 10), st.floats(11, 20)),
        ),
        duration_s=st.one_of(st.none(), st.floats(1, 100)),
        description_cache=st.dictionaries(_words, _words, max_size=3),
        stage=st.sampled_from(Stage),
    )
)
def test_video_item_roundtrip(item):
    assert VideoItem.from_dict(item.to_dict()) == item


@given(
    st.builds(
        RoundRecord,
        round_index=st.integers(1, 50),
        sampled=st.lists(_ids, max_size=5),
        accepted=st.lists(_ids, max_size=5),
        rejected=st.lists(_ids, max_size=5),
        comments=st.lists(st.builds(Comment, video_id=_ids, text=_words), max_size=3),
        kind=st.sampled_from(RoundKind),
    )
)
def test_round_record_roundtrip(record):
    assert RoundRecord.from_dict(record.to_dict()) == record


@given(
    st.builds(
        Decision,
        verdict=st.sampled_from([Verdict.ACCEPT, Verdict.UNCERTAIN]),
        confidence=st.floats(0, 1),
        evidence=_words,
    )
)
def test_decision_roundtrip(decision):
    assert Decision.from_dict(decision.to_dict()) == decision


def test_session_config_roundtrip():
    config = SessionConfig(top_k=50, uncertain_band=(0.3, 0.7), seed=11)
    assert SessionConfig.from_dict(config.to_dict()) == config
