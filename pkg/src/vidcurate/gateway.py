"""Single chokepoint for model calls.

Every LLM/MLLM interaction in the system goes through ``ModelGateway``,
which renders prompts, enforces the in-flight limit, retries malformed
replies with the identical prompt, and parses responses. Two backends
ship: a deterministic scripted backend (rule file, used by every test
and offline run) and a remote adapter speaking a chat-completion style
HTTP API. No model inference happens locally.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from . import prompts
from .domain import Comment, Decision, KeywordSet, Query, Verdict, VideoItem
from .errors import (
    BackendUnavailable,
    EmptyPayload,
    MalformedVerdict,
    MissingAsset,
    MissingDelimiters,
    ProtocolError,
)

_PARSE_ERRORS = (MissingDelimiters, EmptyPayload, MalformedVerdict, ValueError)

# Internal prompt kinds that have no entry in the prompt-protocol
# templates; their grammars are owned by the gateway.
KIND_ATTRIBUTE_EXTRACT = "attribute_extract"
KIND_TEMPLATE_AGGREGATE = "template_aggregate"

_ATTRIBUTE_EXTRACT_PROMPT = (
    "Read the user's rejection comment about a video and list every attribute "
    "the user is concerned about together with the unwanted value, one per line, "
    "formatted as 'attribute: value'."
)
_TEMPLATE_AGGREGATE_PROMPT = (
    "Cluster the following video descriptions and summarize them into at most "
    "{max_templates} short description templates, one per line."
)

_ASSERTIVE_MARKERS = frozenset({"clearly", "definitely", "certainly"})
_HEDGE_MARKERS = frozenset({"possibly", "might", "unclear", "partially"})

_WORD_RE = re.compile(r"[a-z0-9]+")


def word_tokens(text: str) -> frozenset[str]:
    return frozenset(_WORD_RE.findall(text.casefold()))


def jaccard(a: str, b: str) -> float:
    """Token-set Jaccard similarity over case-folded words."""
    ta, tb = word_tokens(a), word_tokens(b)
    if not ta and not tb:
        return 1.0
    union = ta | tb
    return len(ta & tb) / len(union)


@dataclass(frozen=True)
class BackendRef:
    """Configuration handle for a backend instance."""

    kind: str  # "scripted" | "remote"
    script_path: Optional[str] = None
    endpoint_url: Optional[str] = None
    model_name: Optional[str] = None
    auth_token_env: Optional[str] = None
    max_inflight: int = 4
    retry_limit: int = 2

    def __post_init__(self):
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")


class Backend(Protocol):
    def complete(self, kind: str, prompt: str) -> str:
        """Produce a response for a rendered prompt; may raise BackendUnavailable."""


@dataclass(frozen=True)
class ScriptedRule:
    """One canned response. ``contains`` substrings must all appear in the prompt."""

    response: str
    kind: Optional[str] = None
    contains: tuple[str, ...] = ()

    def matches(self, kind: str, prompt: str) -> bool:
        if self.kind is not None and self.kind != kind:
            return False
        return all(c in prompt for c in self.contains)

    @property
    def is_catch_all(self) -> bool:
        return self.kind is None and not self.contains


class ScriptedBackend:
    """Deterministic lookup backend: ordered rules, first match wins.

    The rule list must end in (or contain) a catch-all so every call
    resolves; offline runs and CI rely on that totality.
    """

    def __init__(self, rules: Sequence[ScriptedRule]):
        rules = list(rules)
        if not any(r.is_catch_all for r in rules):
            raise ValueError("scripted backend requires a catch-all rule")
        self.rules = rules
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls([rule_from_dict(r) for r in raw])

    def complete(self, kind: str, prompt: str) -> str:
        self.calls.append((kind, prompt))
        for rule in self.rules:
            if rule.matches(kind, prompt):
                return rule.response
        raise AssertionError("unreachable: catch-all rule guaranteed")


def rule_from_dict(d: dict) -> ScriptedRule:
    match = d.get("match", {})
    contains = match.get("contains", [])
    if isinstance(contains, str):
        contains = [contains]
    return ScriptedRule(response=d["response"], kind=match.get("kind"), contains=tuple(contains))


def rule_to_dict(rule: ScriptedRule) -> dict:
    match: dict = {}
    if rule.kind is not None:
        match["kind"] = rule.kind
    if rule.contains:
        match["contains"] = list(rule.contains)
    return {"match": match, "response": rule.response}


class RemoteBackend:
    """Adapter for a chat-completion style JSON HTTP endpoint."""

    def __init__(self, endpoint_url: str, model_name: str, auth_token_env: Optional[str] = None,
                 timeout: float = 60.0, client=None):
        import httpx

        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.auth_token_env = auth_token_env
        self._client = client or httpx.Client(timeout=timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_token_env:
            token = os.environ.get(self.auth_token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, kind: str, prompt: str) -> str:
        import httpx

        body = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = self._client.post(self.endpoint_url, json=body, headers=self._headers())
            resp.raise_for_status()
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise BackendUnavailable(f"remote backend failed: {exc}") from exc


def build_backend(ref: BackendRef) -> Backend:
    if ref.kind == "scripted":
        if not ref.script_path:
            raise ValueError("scripted backend needs script_path")
        return ScriptedBackend.from_file(ref.script_path)
    if ref.kind == "remote":
        if not (ref.endpoint_url and ref.model_name):
            raise ValueError("remote backend needs endpoint_url and model_name")
        return RemoteBackend(ref.endpoint_url, ref.model_name, ref.auth_token_env)
    raise ValueError(f"unknown backend kind {ref.kind!r}")


@dataclass
class AttributeExtraction:
    """Attribute/value pairs pulled out of one rejection comment."""

    pairs: list[tuple[str, str]] = field(default_factory=list)


class ModelGateway:
    """Semantic model operations built on the prompt protocol.

    Thread-safe: concurrent callers share one in-flight semaphore so at
    most ``max_inflight`` backend calls run at a time. Retries re-issue
    the identical prompt (no mutation) so scripted runs stay
    reproducible.
    """

    def __init__(self, backend: Backend, retry_limit: int = 2, max_inflight: int = 4):
        self.backend = backend
        self.retry_limit = retry_limit
        self._sem = threading.BoundedSemaphore(max_inflight)

    @classmethod
    def from_ref(cls, ref: BackendRef) -> "ModelGateway":
        return cls(build_backend(ref), retry_limit=ref.retry_limit, max_inflight=ref.max_inflight)

    def _complete(self, kind: str, prompt: str) -> str:
        with self._sem:
            return self.backend.complete(kind, prompt)

    def _complete_parsed(self, kind: str, prompt: str, parser):
        """Call the backend, parse; on parse failure retry the same prompt.

        Backend availability errors propagate immediately; only parse
        failures are retried.
        """
        last_error: Exception | None = None
        for _ in range(self.retry_limit + 1):
            response = self._complete(kind, prompt)
            try:
                return parser(response)
            except _PARSE_ERRORS as exc:
                last_error = exc
        raise ProtocolError(f"backend reply stayed malformed after {self.retry_limit} retries: {last_error}")

    def generate_keywords(self, query: Query) -> KeywordSet:
        prompt = prompts.render_prompt(prompts.CrawlerKeywords(), query.text)
        return self._complete_parsed(prompts.CrawlerKeywords.kind_name, prompt, prompts.parse_keywords)

    def grounding_phrase(self, query: Query) -> str:
        prompt = prompts.render_prompt(prompts.GroundingPhrase(), query.text)
        return self._complete_parsed(
            prompts.GroundingPhrase.kind_name, prompt, prompts.parse_grounding_phrase
        )

    def summarize_demand(self, query: Query, comments: Sequence[Comment] = ()) -> str:
        context = query.text
        if comments:
            context += "\n" + "\n".join(c.text for c in comments)
        prompt = prompts.render_prompt(prompts.DemandSummary(), context)
        return self._complete_parsed(
            prompts.DemandSummary.kind_name, prompt, prompts.parse_demand_summary
        )

    def describe_attribute(self, video: VideoItem, attribute: str) -> str:
        """Attribute-focused description of a video, cached on the item."""
        cached = video.description_cache.get(attribute)
        if cached is not None:
            return cached
        base = video.description_cache.get("overall")
        if base is None and not video.asset_path:
            raise MissingAsset(f"video {video.id} has no asset and no cached description")
        context = base if base is not None else f"video asset at {video.asset_path}"
        prompt = prompts.render_prompt(prompts.DescriptionSummary(attribute), context)
        description = self._complete(prompts.DescriptionSummary.kind_name, prompt).strip()
        video.description_cache[attribute] = description
        return description

    def judge(self, video: VideoItem, criterion: str,
              band: Optional[tuple[float, float]] = None) -> Decision:
        """Yes/no judgement of a video against a criterion.

        Confidence calibration: base 0.7, +0.2 for assertive evidence
        wording, -0.2 for hedged wording, clamped to [0, 1]. With a
        ``band`` given, confidences inside the open band downgrade the
        verdict to Uncertain.
        """
        if not criterion.strip():
            raise ValueError("criterion must be non-empty")
        context = video.description_cache.get("overall") or f"video asset at {video.asset_path}"
        prompt = prompts.render_prompt(prompts.VideoDescriptor(criterion), context)
        verdict = self._complete_parsed(
            prompts.VideoDescriptor.kind_name, prompt, prompts.parse_descriptor_verdict
        )
        confidence = confidence_from_evidence(verdict.evidence)
        kind = Verdict.ACCEPT if verdict.answer else Verdict.REJECT
        attribute = None if verdict.answer else "overall"
        if band is not None and band[0] < confidence < band[1]:
            kind = Verdict.UNCERTAIN
            attribute = None
        return Decision(
            verdict=kind,
            confidence=confidence,
            triggering_attribute=attribute,
            evidence=verdict.evidence,
        )

    def extract_attributes(self, comment: Comment) -> AttributeExtraction:
        """Pull (attribute, unwanted value) pairs from a rejection comment."""
        if not comment.text.strip():
            raise ValueError("comment text must be non-empty")
        prompt = f"{_ATTRIBUTE_EXTRACT_PROMPT}\n\n{comment.text}"
        response = self._complete(KIND_ATTRIBUTE_EXTRACT, prompt)
        pairs: list[tuple[str, str]] = []
        for line in response.splitlines():
            if ":" not in line:
                continue
            name, _, value = line.partition(":")
            name, value = name.strip().casefold(), value.strip()
            if name and value:
                pairs.append((name, value))
        if not pairs:
            raise ProtocolError(f"no attribute pairs parsed from {response!r}")
        return AttributeExtraction(pairs=pairs)

    def aggregate_templates(self, descriptions: Sequence[str], max_templates: int) -> list[str]:
        """Cluster descriptions into at most ``max_templates`` template texts.

        Exact duplicates (case-fold) collapse first; backend
        summarization is only consulted when the deduped set is still
        too large.
        """
        if not descriptions:
            raise ValueError("descriptions must be non-empty")
        if max_templates < 1:
            raise ValueError("max_templates must be >= 1")
        unique: list[str] = []
        seen: set[str] = set()
        for d in descriptions:
            d = d.strip()
            if d and d.casefold() not in seen:
                seen.add(d.casefold())
                unique.append(d)
        if not unique:
            raise ProtocolError("all descriptions empty")
        if len(unique) <= max_templates:
            return unique
        header = _TEMPLATE_AGGREGATE_PROMPT.replace("{max_templates}", str(max_templates))
        prompt = header + "\n\n" + "\n".join(unique)
        response = self._complete(KIND_TEMPLATE_AGGREGATE, prompt)
        templates = [line.strip() for line in response.splitlines() if line.strip()]
        if not templates:
            raise ProtocolError("backend produced no templates")
        return templates[:max_templates]

    def similarity(self, a: str, b: str) -> float:
        """Symmetric text similarity in [0, 1] (token-set Jaccard)."""
        if not a or not b:
            raise ValueError("similarity inputs must be non-empty")
        return jaccard(a, b)


def confidence_from_evidence(evidence: str) -> float:
    """Deterministic confidence for a yes/no judgement from its evidence text."""
    tokens = word_tokens(evidence)
    confidence = 0.7
    if tokens & _ASSERTIVE_MARKERS:
        confidence += 0.2
    if tokens & _HEDGE_MARKERS:
        confidence -= 0.2
    return min(1.0, max(0.0, confidence))
