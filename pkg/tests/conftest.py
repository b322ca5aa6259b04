"""Shared fixtures: scripted gateways, synthetic corpora, orchestrators."""

from __future__ import annotations

import pytest

from vidcurate.bench import default_synthetic_domain
from vidcurate.domain import SessionConfig
from vidcurate.gateway import ModelGateway, ScriptedBackend, ScriptedRule
from vidcurate.orchestrator import Orchestrator
from vidcurate.proposal import LocalCorpusAdapter, PassThroughGrounder
from vidcurate.store import SessionStore


class FakeGateway:
    """Gateway stand-in with table-driven descriptions and similarities.

    ``descriptions`` maps (video_id, attribute) -> text; ``scores`` maps
    frozenset({a, b}) -> similarity. Unlisted pairs fall back to the
    real Jaccard, so oracle tests can mix controlled and real scoring.
    ``extractions`` maps comment text -> attribute/value pair list.
    """

    def __init__(self, descriptions=None, scores=None, demand="demand text",
                 extractions=None):
        self.descriptions = descriptions or {}
        self.scores = scores or {}
        self.demand = demand
        self.extractions = extractions or {}

    def describe_attribute(self, item, attribute):
        key = (item.id, attribute)
        if key in self.descriptions:
            return self.descriptions[key]
        cached = item.description_cache.get(attribute)
        if cached is not None:
            return cached
        return item.description_cache.get("overall", item.id)

    def similarity(self, a, b):
        key = frozenset((a, b))
        if key in self.scores:
            return self.scores[key]
        from vidcurate.gateway import jaccard

        return jaccard(a, b)

    def summarize_demand(self, query, comments=()):
        return self.demand

    def extract_attributes(self, comment):
        from vidcurate.errors import ProtocolError
        from vidcurate.gateway import AttributeExtraction

        pairs = self.extractions.get(comment.text)
        if not pairs:
            raise ProtocolError(f"no pairs for {comment.text!r}")
        return AttributeExtraction(pairs=list(pairs))

    def aggregate_templates(self, descriptions, max_templates):
        unique = []
        for d in descriptions:
            if d.strip() and d.casefold() not in {u.casefold() for u in unique}:
                unique.append(d.strip())
        return unique[:max_templates]


@pytest.fixture
def fake_gateway():
    return FakeGateway()


@pytest.fixture
def synthetic_domain():
    return default_synthetic_domain(total=200)


@pytest.fixture
def scripted_gateway(synthetic_domain):
    return ModelGateway(ScriptedBackend(synthetic_domain.scripted_rules()))


def make_orchestrator(tmp_path, domain, subdir="run"):
    corpus = domain.write_corpus(tmp_path / subdir / "corpus")
    gateway = ModelGateway(ScriptedBackend(domain.scripted_rules()))
    return Orchestrator(
        gateway=gateway,
        adapter=LocalCorpusAdapter(corpus),
        grounder=PassThroughGrounder(),
        store=SessionStore(tmp_path / subdir / "data"),
    )


@pytest.fixture
def orchestrator(tmp_path, synthetic_domain):
    return make_orchestrator(tmp_path, synthetic_domain)


def session_config(**overrides) -> SessionConfig:
    base = dict(
        top_k=200,
        round_sample_size=8,
        min_rounds=3,
        consecutive_clean_rounds=2,
        uncertain_band=(0.40, 0.60),
        buffer_trigger=100,
        double_check_sample=8,
        accept_threshold=0.9,
        seed=7,
    )
    base.update(overrides)
    return SessionConfig(**base)
