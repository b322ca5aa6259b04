"""Candidate proposal: keyword search, grounding, Top-K initialization.

Source adapters turn keywords into Sourced items; grounding adapters
trim each item to its relevant clip (external model territory, hidden
behind the adapter protocol); ``init_candidates`` scores the grounded
clips against the summarized demand and keeps the Top-K.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .domain import KeywordSet, Query, Stage, VideoItem, transition_stage
from .errors import AdapterUnavailable
from .gateway import ModelGateway

logger = logging.getLogger(__name__)


def item_id_for_url(url: str) -> str:
    return hashlib.sha256(url.encode("utf-8")).hexdigest()[:16]


class SourceAdapter(Protocol):
    page_size: int

    def search(self, keywords: KeywordSet, limit: int) -> list[VideoItem]:
        """Return up to ``limit`` Sourced items for the keywords."""


class LocalCorpusAdapter:
    """Corpus of local files with one JSON sidecar per video.

    Sidecar schema: {"tags": [...], "duration_s": float, "caption": str,
    "url": optional str}. A sidecar named ``x.mp4.json`` describes the
    asset ``x.mp4``; when no sibling asset exists the sidecar path
    itself is recorded (asset bytes are never inspected here). Captions
    prime the item's "overall" description cache so fully offline runs
    need no vision model.
    """

    def __init__(self, root_dir: str | Path, page_size: int = 50):
        if page_size < 1:
            raise ValueError("page_size must be >= 1")
        self.root_dir = Path(root_dir)
        self.page_size = page_size

    def _records(self):
        if not self.root_dir.is_dir():
            raise AdapterUnavailable(f"corpus directory {self.root_dir} does not exist")
        for sidecar in sorted(self.root_dir.glob("*.json")):
            try:
                meta = json.loads(sidecar.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                logger.warning("skipping unreadable sidecar %s: %s", sidecar, exc)
                continue
            asset = sidecar.with_suffix("")  # strip .json -> original filename
            yield sidecar, asset if asset.exists() else sidecar, meta

    def search(self, keywords: KeywordSet, limit: int) -> list[VideoItem]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        folded = [k.casefold() for k in keywords]
        items: list[VideoItem] = []
        seen_urls: set[str] = set()
        for sidecar, asset, meta in self._records():
            caption = str(meta.get("caption", ""))
            tags = {str(t).casefold() for t in meta.get("tags", [])}
            haystack = caption.casefold()
            if not any(k in haystack or k in tags for k in folded):
                continue
            url = str(meta.get("url") or asset.as_uri())
            if url in seen_urls:
                continue
            seen_urls.add(url)
            cache = {"overall": caption} if caption else {}
            items.append(
                VideoItem(
                    id=item_id_for_url(url),
                    source_url=url,
                    asset_path=str(asset),
                    duration_s=meta.get("duration_s"),
                    description_cache=cache,
                    stage=Stage.SOURCED,
                )
            )
            if len(items) >= limit:
                break
        return items


class RemoteCrawlerAdapter:
    """HTTP crawler: GET {endpoint}/search?q=...&page=n -> {items: [...]}."""

    def __init__(self, endpoint_url: str, page_size: int = 50, client=None):
        import httpx

        if page_size < 1:
            raise ValueError("page_size must be >= 1")
        self.endpoint_url = endpoint_url.rstrip("/")
        self.page_size = page_size
        self._client = client or httpx.Client(timeout=30.0)

    def search(self, keywords: KeywordSet, limit: int) -> list[VideoItem]:
        import httpx

        if limit < 1:
            raise ValueError("limit must be >= 1")
        q = " ".join(keywords)
        items: list[VideoItem] = []
        seen_urls: set[str] = set()
        page = 1
        while len(items) < limit:
            try:
                resp = self._client.get(
                    f"{self.endpoint_url}/search", params={"q": q, "page": page}
                )
                resp.raise_for_status()
                payload = resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                raise AdapterUnavailable(f"crawler search failed: {exc}") from exc
            batch = payload.get("items", [])
            if not batch:
                break
            for entry in batch:
                url = entry["url"]
                if url in seen_urls:
                    continue
                seen_urls.add(url)
                cache = {"overall": entry["title"]} if entry.get("title") else {}
                items.append(
                    VideoItem(
                        id=item_id_for_url(url),
                        source_url=url,
                        duration_s=entry.get("duration_s"),
                        description_cache=cache,
                        stage=Stage.SOURCED,
                    )
                )
                if len(items) >= limit:
                    break
            page += 1
        return items


def download_assets(items: Sequence[VideoItem], data_dir: str | Path, client=None) -> list[VideoItem]:
    """Fetch remote assets into ``data_dir`` under content-hash filenames.

    Items that already carry an asset path pass through untouched.
    """
    import httpx

    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    client = client or httpx.Client(timeout=60.0)
    out: list[VideoItem] = []
    for item in items:
        if item.asset_path:
            out.append(item)
            continue
        try:
            resp = client.get(item.source_url)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise AdapterUnavailable(f"asset download failed for {item.source_url}: {exc}") from exc
        digest = hashlib.sha256(resp.content).hexdigest()
        path = data_dir / digest
        if not path.exists():
            path.write_bytes(resp.content)
        item.asset_path = str(path)
        out.append(item)
    return out


class Grounder(Protocol):
    provides_spatial: bool

    def ground(self, item: VideoItem, phrase: str) -> Optional[tuple[float, float]]:
        """Clip span for the phrase, or None to drop the item."""


class PassThroughGrounder:
    """Keeps every item with a full-duration span; for tests and dry runs."""

    provides_spatial = False

    def __init__(self, default_duration: float = 10.0):
        self.default_duration = default_duration

    def ground(self, item: VideoItem, phrase: str) -> Optional[tuple[float, float]]:
        return (0.0, item.duration_s or self.default_duration)


class PhraseGrounder:
    """Scripted stand-in for a temporal grounding model.

    Keeps an item when every phrase token appears in its overall
    description; span is the full duration. With ``provides_spatial``
    set, a whole-frame bounding box is attached as the spatial metadata
    capability.
    """

    provides_spatial = False

    def __init__(self, default_duration: float = 10.0, spatial: bool = False):
        self.default_duration = default_duration
        self.provides_spatial = spatial

    def ground(self, item: VideoItem, phrase: str) -> Optional[tuple[float, float]]:
        from .gateway import word_tokens

        caption = item.description_cache.get("overall", "")
        if not word_tokens(phrase) <= word_tokens(caption):
            return None
        if self.provides_spatial:
            item.bounding = [0.0, 0.0, 1.0, 1.0]
        return (0.0, item.duration_s or self.default_duration)


@dataclass
class CandidatePool:
    """Top-K grounded clips ordered by (score desc, id asc)."""

    items: list[VideoItem] = field(default_factory=list)
    demand_text: str = ""


def search(keywords: KeywordSet, adapter: SourceAdapter, limit: int) -> list[VideoItem]:
    """Keyword search through an adapter; deduplicated by source URL."""
    return adapter.search(keywords, limit)


def ground(items: Sequence[VideoItem], query: Query, gateway: ModelGateway,
           grounder: Grounder) -> list[VideoItem]:
    """Trim each Sourced item to its query-relevant clip; drops rejects."""
    if not items:
        return []
    phrase = gateway.grounding_phrase(query)
    grounded: list[VideoItem] = []
    for item in items:
        span = grounder.ground(item, phrase)
        if span is None:
            continue
        advanced = transition_stage(item, Stage.GROUNDED)
        advanced.clip_span = span
        grounded.append(advanced)
    return grounded


def init_candidates(items: Sequence[VideoItem], query: Query, k: int,
                    gateway: ModelGateway) -> CandidatePool:
    """Top-K candidate initialization.

    Scores each grounded clip's overall description against the
    summarized demand; keeps the k best, ties broken by ascending id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    demand_text = gateway.summarize_demand(query)
    scored = [
        (gateway.similarity(gateway.describe_attribute(item, "overall"), demand_text), item)
        for item in items
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].id))
    top = [transition_stage(item, Stage.CANDIDATE) for _, item in scored[:k]]
    return CandidatePool(items=top, demand_text=demand_text)
