"""Prompt rendering and response grammars.

This is the single place where model-facing text formats live. Prompt
templates are versioned text resources under ``resources/prompts``;
response grammars (the bracketed spans and the numbered descriptor
fields) are parsed here and nowhere else. All parsers are pure: they
either return a value satisfying the type invariants or raise one of
the declared errors, never anything else.

Grammar reference: docs/prompt-grammar.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Union

from .domain import KeywordSet
from .errors import EmptyPayload, MalformedVerdict, MissingDelimiters

PROMPT_VERSION = "v1"


def _load_template(name: str) -> str:
    path = resources.files("vidcurate").joinpath("resources").joinpath(
        "prompts").joinpath(PROMPT_VERSION).joinpath(f"{name}.txt")
    return path.read_text(encoding="utf-8").rstrip("\n")


_TEMPLATES = {
    name: _load_template(name)
    for name in (
        "crawler_keywords",
        "grounding_phrase",
        "demand_summary",
        "description_summary",
        "video_descriptor",
    )
}


@dataclass(frozen=True)
class CrawlerKeywords:
    kind_name = "crawler_keywords"


@dataclass(frozen=True)
class GroundingPhrase:
    kind_name = "grounding_phrase"


@dataclass(frozen=True)
class DemandSummary:
    kind_name = "demand_summary"


@dataclass(frozen=True)
class DescriptionSummary:
    attribute: str
    kind_name = "description_summary"

    def __post_init__(self):
        if not self.attribute.strip():
            raise ValueError("description summary needs an attribute name")


@dataclass(frozen=True)
class VideoDescriptor:
    question: str
    kind_name = "video_descriptor"

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError("video descriptor needs a question")


PromptKind = Union[CrawlerKeywords, GroundingPhrase, DemandSummary, DescriptionSummary, VideoDescriptor]


@dataclass(frozen=True)
class DescriptorVerdict:
    """Parsed yes/no judgement with its evidence and summary fields."""

    answer: bool
    evidence: str
    summary: str


def render_prompt(kind: PromptKind, context: str) -> str:
    """Return the full prompt for ``kind`` with ``context`` appended.

    Templates are byte-stable: the same kind always yields the same
    leading text.
    """
    if not context.strip():
        raise ValueError("prompt context must be non-empty")
    template = _TEMPLATES[kind.kind_name]
    if isinstance(kind, DescriptionSummary):
        template = template.replace("{attribute}", kind.attribute)
    elif isinstance(kind, VideoDescriptor):
        template = template.replace("{question}", kind.question)
    return f"{template}\n\n{context}"


def _first_span(response: str, open_tag: str, close_tag: str) -> str:
    """Extract the payload of the first well-formed tag span."""
    start = response.find(open_tag)
    if start < 0:
        raise MissingDelimiters(f"no {open_tag} tag in response")
    end = response.find(close_tag, start + len(open_tag))
    if end < 0:
        raise MissingDelimiters(f"unterminated {open_tag} span")
    return response[start + len(open_tag) : end]


def parse_keywords(response: str) -> KeywordSet:
    """Parse the first [KEY] ... [/KEY] span into a keyword set.

    Splits on commas only, trims whitespace, drops empties and
    case-fold duplicates (first spelling wins).
    """
    payload = _first_span(response, "[KEY]", "[/KEY]")
    parts = [p.strip() for p in payload.split(",")]
    parts = [p for p in parts if p]
    if not parts:
        raise EmptyPayload("keyword span contains no keywords")
    return KeywordSet(parts)


def parse_grounding_phrase(response: str) -> str:
    """Parse the first [GRN] ... [/GRN] span into a trimmed phrase."""
    payload = _first_span(response, "[GRN]", "[/GRN]").strip()
    if not payload:
        raise EmptyPayload("grounding span is empty")
    return payload


def parse_demand_summary(response: str) -> str:
    """Parse the first [TXT] ... [/TXT] span into a trimmed summary."""
    payload = _first_span(response, "[TXT]", "[/TXT]").strip()
    if not payload:
        raise EmptyPayload("demand summary span is empty")
    return payload


# Labels may be numbered ("1. Yes/No:") or bare ("Yes/No -"), in any case,
# at line starts or after sentence punctuation.
_FIELD_LABEL = re.compile(
    r"(?:^|[\n.;])\s*(?:\d+\s*[.)]\s*)?(yes\s*/\s*no|evidence|summary)\s*[:\-]\s*",
    re.IGNORECASE,
)

_FIRST_TOKEN = re.compile(r"[a-z]+")


def parse_descriptor_verdict(response: str) -> DescriptorVerdict:
    """Parse the numbered Yes/No, Evidence, Summary fields.

    Labels are matched case-insensitively; the first occurrence of each
    field wins. The answer is true iff the Yes/No field's first word
    case-folds to "yes".
    """
    matches = list(_FIELD_LABEL.finditer(response))
    fields: dict[str, str] = {}
    for i, m in enumerate(matches):
        label = re.sub(r"\s", "", m.group(1)).casefold()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(response)
        value = response[m.end() : end].strip().strip(".;,").strip()
        fields.setdefault(label, value)

    answer_text = fields.get("yes/no")
    if answer_text is None:
        raise MalformedVerdict("no yes/no field in response")
    token = _FIRST_TOKEN.search(answer_text.casefold())
    if token is None or token.group(0) not in ("yes", "no"):
        raise MalformedVerdict(f"unparseable yes/no answer: {answer_text!r}")
    evidence = fields.get("evidence", "")
    summary = fields.get("summary", "")
    if not evidence:
        raise MalformedVerdict("missing or empty evidence field")
    if not summary:
        raise MalformedVerdict("missing or empty summary field")
    return DescriptorVerdict(answer=token.group(0) == "yes", evidence=evidence, summary=summary)
