"""Benchmark harness: nested-requirement evaluation with IoU reporting.

A benchmark is a JSONL file (header record with the requirement list,
then one record per video with per-requirement boolean labels; see
docs/benchmark-format.md). Evaluation is stage-wise: stage n runs a
selector on stage n-1's output and scores it against the conjunction of
the first n requirement labels. Selectors range from trivial baselines
to the full interactive agent driven by a deterministic simulated user.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .domain import (
    Comment,
    KeywordSet,
    Query,
    RoundKind,
    RoundRecord,
    Session,
    SessionConfig,
    Stage,
    VideoItem,
)
from .errors import SchemaError
from .gateway import (
    KIND_ATTRIBUTE_EXTRACT,
    KIND_TEMPLATE_AGGREGATE,
    ModelGateway,
    ScriptedBackend,
    ScriptedRule,
)
from .orchestrator import Orchestrator
from .proposal import PassThroughGrounder, item_id_for_url
from .store import SessionStore, jsonl_line

logger = logging.getLogger(__name__)

Selector = Callable[[set[str], str], set[str]]


@dataclass
class BenchmarkSet:
    """One domain: ordered requirements and per-video boolean labels."""

    domain_name: str
    requirements: list[str]
    videos: list[dict[str, Any]]  # {"video_id", "labels", optional "caption"}

    def truth_at(self, stage: int) -> set[str]:
        """Videos meeting all of the first ``stage`` requirements."""
        return {
            v["video_id"] for v in self.videos if all(v["labels"][:stage])
        }

    def all_ids(self) -> set[str]:
        return {v["video_id"] for v in self.videos}


@dataclass
class StageResult:
    stage: int
    selected: set[str]
    truth: set[str]
    iou: float

    def label(self) -> str:
        return "R.1" if self.stage == 1 else "R.1&" + "&".join(
            str(i) for i in range(2, self.stage + 1)
        )


def load_benchmark(path: str | Path) -> BenchmarkSet:
    """Parse the JSONL annotation format; raises SchemaError with the
    offending line number."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    lines = [l for l in lines if l.strip()]
    if not lines:
        raise SchemaError("benchmark file is empty", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", line=1) from exc
    requirements = header.get("requirements")
    if not isinstance(requirements, list) or not requirements:
        raise SchemaError("header must carry a non-empty requirements list", line=1)
    videos = []
    seen: set[str] = set()
    for number, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", line=number) from exc
        vid = record.get("video_id")
        labels = record.get("labels")
        if not vid:
            raise SchemaError("missing video_id", line=number)
        if vid in seen:
            raise SchemaError(f"duplicate video_id {vid}", line=number)
        if not isinstance(labels, list) or len(labels) != len(requirements):
            raise SchemaError(
                f"expected {len(requirements)} labels, got {labels!r}", line=number
            )
        seen.add(vid)
        videos.append(
            {"video_id": vid, "labels": [bool(b) for b in labels],
             "caption": record.get("caption", "")}
        )
    if not videos:
        raise SchemaError("benchmark has no video records", line=1)
    return BenchmarkSet(
        domain_name=header.get("domain_name", path.stem),
        requirements=[str(r) for r in requirements],
        videos=videos,
    )


def compute_iou(selected: set[str], truth: set[str]) -> float:
    """|selected ∩ truth| / |selected ∪ truth|; 1.0 when both are empty."""
    union = selected | truth
    if not union:
        return 1.0
    return len(selected & truth) / len(union)


def iterative_evaluate(selector: Selector, benchmark: BenchmarkSet) -> list[StageResult]:
    """Stage-wise selection: stage n narrows stage n-1's output by the
    n-th requirement; truth at stage n is the label conjunction."""
    results: list[StageResult] = []
    pool = benchmark.all_ids()
    for stage, requirement in enumerate(benchmark.requirements, start=1):
        selected = set(selector(set(pool), requirement))
        truth = benchmark.truth_at(stage)
        results.append(
            StageResult(stage=stage, selected=selected, truth=truth,
                        iou=compute_iou(selected, truth))
        )
        pool = selected
    return results


def select_all(pool: set[str], requirement: str) -> set[str]:
    return set(pool)


def select_none(pool: set[str], requirement: str) -> set[str]:
    return set()


def oracle_selector(benchmark: BenchmarkSet) -> Selector:
    """Cheating baseline: returns exactly the pool members meeting the
    requirement's own label."""

    def select(pool: set[str], requirement: str) -> set[str]:
        index = benchmark.requirements.index(requirement)
        meets = {v["video_id"] for v in benchmark.videos if v["labels"][index]}
        return pool & meets

    return select


# -- synthetic corpora and the simulated user --------------------------------


@dataclass(frozen=True)
class AttributePredicate:
    """One acceptance rule over a metadata attribute."""

    attribute: str
    op: str  # "eq" | "neq"
    value: str

    def holds(self, metadata: dict[str, str]) -> bool:
        observed = metadata.get(self.attribute)
        return (observed == self.value) if self.op == "eq" else (observed != self.value)


@dataclass
class SimulatedUser:
    """Deterministic stand-in for a human reviewer.

    Accepts a video iff every predicate holds; rejections carry a
    templated comment naming the first violated attribute and the
    observed value, which the scripted extraction rules understand.
    """

    predicates: list[AttributePredicate]
    metadata: dict[str, dict[str, str]]  # video_id -> attribute -> value
    comment_template: str = "the {attribute} should not be {value}"

    def accepts(self, video_id: str) -> bool:
        meta = self.metadata[video_id]
        return all(p.holds(meta) for p in self.predicates)

    def comment_for(self, video_id: str) -> Optional[Comment]:
        meta = self.metadata[video_id]
        for predicate in self.predicates:
            if not predicate.holds(meta):
                text = self.comment_template.format(
                    attribute=predicate.attribute,
                    value=meta.get(predicate.attribute, "missing"),
                )
                return Comment(video_id=video_id, text=text)
        return None

    def answer_round(self, skeleton: dict[str, Any]) -> RoundRecord:
        accepted, rejected, comments = [], [], []
        for vid in skeleton["sampled"]:
            if self.accepts(vid):
                accepted.append(vid)
            else:
                rejected.append(vid)
                comment = self.comment_for(vid)
                if comment:
                    comments.append(comment)
        return RoundRecord(
            round_index=skeleton["round_index"],
            sampled=list(skeleton["sampled"]),
            accepted=accepted,
            rejected=rejected,
            comments=comments,
            kind=RoundKind(skeleton["kind"]),
        )


@dataclass
class SyntheticDomain:
    """A generated corpus with attribute-token captions plus everything
    needed to run the agent on it offline: scripted gateway rules, the
    simulated user, and benchmark labels."""

    name: str
    attributes: dict[str, list[str]]  # attribute -> value vocabulary
    predicates: list[AttributePredicate]
    records: list[dict[str, Any]] = field(default_factory=list)

    def caption_for(self, values: dict[str, str]) -> str:
        return " ".join(f"{a}:{values[a]}" for a in self.attributes)

    def add_video(self, name: str, values: dict[str, str], duration_s: float = 12.0) -> None:
        url = f"https://videos.example/{self.name}/{name}"
        self.records.append(
            {
                "name": name,
                "url": url,
                "video_id": item_id_for_url(url),
                "values": dict(values),
                "caption": self.caption_for(values),
                "duration_s": duration_s,
            }
        )

    def metadata(self) -> dict[str, dict[str, str]]:
        return {r["video_id"]: r["values"] for r in self.records}

    def simulated_user(self, predicates: Optional[list[AttributePredicate]] = None) -> SimulatedUser:
        return SimulatedUser(
            predicates=list(predicates or self.predicates), metadata=self.metadata()
        )

    def truth_ids(self, predicates: Optional[list[AttributePredicate]] = None) -> set[str]:
        predicates = list(predicates or self.predicates)
        return {
            r["video_id"] for r in self.records
            if all(p.holds(r["values"]) for p in predicates)
        }

    def write_corpus(self, directory: str | Path) -> Path:
        """One JSON sidecar per video, consumable by LocalCorpusAdapter."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for record in self.records:
            sidecar = directory / f"{record['name']}.mp4.json"
            sidecar.write_text(
                json.dumps(
                    {
                        "tags": [self.name] + list(record["values"].values()),
                        "duration_s": record["duration_s"],
                        "caption": record["caption"],
                        "url": record["url"],
                    }
                )
                + "\n",
                encoding="utf-8",
            )
        return directory

    def scripted_rules(self, keywords: Sequence[str] = ()) -> list[ScriptedRule]:
        """Gateway rules for this vocabulary: keyword/grounding/demand
        prompts plus attribute descriptions and comment extraction."""
        keywords = list(keywords) or [self.name]
        rules: list[ScriptedRule] = [
            ScriptedRule(kind="crawler_keywords",
                         response=f"[KEY] {', '.join(keywords)} [/KEY]"),
            ScriptedRule(kind="grounding_phrase", response=f"[GRN] {self.name} [/GRN]"),
            ScriptedRule(kind="demand_summary", response=f"[TXT] {self.name} dataset [/TXT]"),
        ]
        for attribute, values in self.attributes.items():
            for value in values:
                rules.append(
                    ScriptedRule(
                        kind="description_summary",
                        contains=(f"related to {attribute}", f"{attribute}:{value}"),
                        response=value,
                    )
                )
                # full comment phrase avoids substring collisions such as
                # the value "cat" matching inside the word "category"
                rules.append(
                    ScriptedRule(
                        kind=KIND_ATTRIBUTE_EXTRACT,
                        contains=(f"{attribute} should not be {value}",),
                        response=f"{attribute}: {value}",
                    )
                )
        rules.append(ScriptedRule(kind=KIND_TEMPLATE_AGGREGATE, response=""))
        rules.append(ScriptedRule(response="[unmatched]"))
        return rules

    def write_rules(self, path: str | Path, keywords: Sequence[str] = ()) -> Path:
        from .gateway import rule_to_dict

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps([rule_to_dict(r) for r in self.scripted_rules(keywords)], indent=2)
            + "\n",
            encoding="utf-8",
        )
        return path

    def benchmark_set(self) -> BenchmarkSet:
        requirements = [
            f"{p.attribute} {'is' if p.op == 'eq' else 'is not'} {p.value}"
            for p in self.predicates
        ]
        videos = [
            {
                "video_id": r["video_id"],
                "labels": [p.holds(r["values"]) for p in self.predicates],
                "caption": r["caption"],
            }
            for r in self.records
        ]
        return BenchmarkSet(domain_name=self.name, requirements=requirements, videos=videos)

    def write_benchmark(self, path: str | Path) -> Path:
        bench = self.benchmark_set()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(jsonl_line(
                {"domain_name": bench.domain_name, "requirements": bench.requirements}
            ))
            for v in bench.videos:
                fh.write(jsonl_line(v))
        return path


def default_synthetic_domain(name: str = "cats", total: int = 200) -> SyntheticDomain:
    """The standard 5-attribute corpus: one all-good combination, spread
    of single-violation videos, a few all-bad ones."""
    attributes = {
        "category": ["cat", "dog"],
        "action": ["lying", "standing"],
        "appearance": ["white", "black"],
        "shot": ["closeup", "wide"],
        "content": ["single", "multiple"],
    }
    predicates = [
        AttributePredicate("category", "eq", "cat"),
        AttributePredicate("action", "eq", "lying"),
        AttributePredicate("appearance", "neq", "black"),
        AttributePredicate("shot", "eq", "closeup"),
        AttributePredicate("content", "eq", "single"),
    ]
    domain = SyntheticDomain(name=name, attributes=attributes, predicates=predicates)
    good = {"category": "cat", "action": "lying", "appearance": "white",
            "shot": "closeup", "content": "single"}
    bad_variants = []
    for attribute in attributes:
        values = dict(good)
        values[attribute] = attributes[attribute][1]
        bad_variants.append(values)
    all_bad = {a: vs[1] for a, vs in attributes.items()}

    bad_total = max(total // 4, len(bad_variants))
    good_total = total - bad_total - max(total // 40, 1)
    index = 0
    for _ in range(good_total):
        domain.add_video(f"v{index:04d}", good)
        index += 1
    for i in range(bad_total):
        domain.add_video(f"v{index:04d}", bad_variants[i % len(bad_variants)])
        index += 1
    while index < total:
        domain.add_video(f"v{index:04d}", all_bad)
        index += 1
    return domain


# -- the agent as a selector --------------------------------------------------


@dataclass
class AgentSelectorResult:
    results: list[StageResult]
    transcript: list[dict[str, Any]]


def run_agent_session(orchestrator: Orchestrator, query: Query, config: SessionConfig,
                      user: SimulatedUser, auto_budget: int,
                      max_rounds: int = 20,
                      transcript: Optional[list[dict[str, Any]]] = None,
                      session_id: Optional[str] = None) -> tuple[Session, set[str]]:
    """One full interactive session answered by the simulated user,
    then automatic scale-up; returns the session and the collected ids."""
    from .errors import PoolExhausted

    session = orchestrator.start_session(query, config, session_id=session_id)
    rounds = 0
    while rounds < max_rounds:
        try:
            skeleton = orchestrator.next_round(session)
        except PoolExhausted:
            # the user has reviewed everything reviewable: the session is
            # fully supervised and the collected set is final
            return session, session.manifest.video_ids()
        record = user.answer_round(skeleton)
        terminated = orchestrator.submit_feedback(session, record)
        rounds += 1
        if transcript is not None:
            transcript.append(
                {
                    "session_id": session.id,
                    "round": record.to_dict(),
                    "policy_version": session.table.version,
                    "terminated": terminated,
                }
            )
        if terminated:
            break
    if rounds == 0:
        # no interaction budget: the selection is the policy-free
        # proposal pool itself
        return session, set(session.pool)
    if orchestrator.check_termination(session):
        orchestrator.run_auto(session, budget=auto_budget)
    return session, session.manifest.video_ids()


def run_agent_selector(benchmark: BenchmarkSet, domain: SyntheticDomain,
                       store_dir: str | Path, config: Optional[SessionConfig] = None,
                       seed: int = 0, max_rounds: int = 20) -> AgentSelectorResult:
    """Evaluate the interactive agent under the stage-wise protocol.

    Each stage runs a fresh session over the previous stage's selection
    with a simulated user enforcing only that stage's requirement; the
    stage selection is the session's final collected set.
    """
    from .proposal import LocalCorpusAdapter

    # Stage sessions enforce a single attribute, so acceptance stays
    # permissive (any same-domain caption passes once a template exists)
    # and the attribute-precise rejection table does the filtering.
    base_config = config or SessionConfig(
        top_k=max(len(benchmark.videos), 1),
        accept_threshold=0.35,
        max_templates=32,
        round_sample_size=12,
        seed=seed,
    )
    transcript: list[dict[str, Any]] = []
    results: list[StageResult] = []
    pool = benchmark.all_ids()
    store = SessionStore(store_dir)
    records_by_id = {r["video_id"]: r for r in domain.records}

    for stage, requirement in enumerate(benchmark.requirements, start=1):
        stage_dir = Path(store_dir) / f"stage{stage}"
        stage_domain = SyntheticDomain(
            name=domain.name, attributes=domain.attributes, predicates=domain.predicates
        )
        for vid in sorted(pool):
            record = records_by_id[vid]
            stage_domain.records.append(record)
        corpus = stage_domain.write_corpus(stage_dir / "corpus")
        backend = ScriptedBackend(stage_domain.scripted_rules())
        gateway = ModelGateway(backend)
        orchestrator = Orchestrator(
            gateway=gateway,
            adapter=LocalCorpusAdapter(corpus),
            grounder=PassThroughGrounder(),
            store=store,
        )
        predicate = domain.predicates[stage - 1]
        user = SimulatedUser(predicates=[predicate], metadata=domain.metadata())
        stage_config = SessionConfig(**{
            **base_config.to_dict(),
            "uncertain_band": tuple(base_config.uncertain_band),
            "top_k": max(len(pool), 1),
            "seed": base_config.seed + stage,
        })
        try:
            _, selected = run_agent_session(
                orchestrator, Query(requirement), stage_config, user,
                auto_budget=len(pool), max_rounds=max_rounds,
                transcript=transcript, session_id=f"bench-{domain.name}-s{stage}",
            )
        except Exception as exc:  # selector errors propagate per stage
            logger.warning("agent selector failed at stage %d: %s", stage, exc)
            raise
        truth = benchmark.truth_at(stage)
        results.append(
            StageResult(stage=stage, selected=selected, truth=truth,
                        iou=compute_iou(selected, truth))
        )
        pool = selected
    return AgentSelectorResult(results=results, transcript=transcript)


# -- reporting ----------------------------------------------------------------


def report(domain_results: dict[str, list[StageResult]]) -> tuple[str, str]:
    """Render results as (csv_text, aligned_text); multi-domain input
    gains an average row."""
    if not domain_results:
        raise ValueError("no results to report")
    stage_counts = {len(rs) for rs in domain_results.values()}
    if len(stage_counts) != 1:
        raise ValueError("domains report different stage counts")
    stages = next(iter(domain_results.values()))
    headers = ["domain"] + [r.label() for r in stages]

    rows: list[list[str]] = []
    for name in sorted(domain_results):
        rows.append([name] + [f"{r.iou * 100:.2f}" for r in domain_results[name]])
    if len(domain_results) > 1:
        count = len(domain_results)
        averages = [
            sum(domain_results[name][i].iou for name in domain_results) / count
            for i in range(len(stages))
        ]
        rows.append(["average"] + [f"{v * 100:.2f}" for v in averages])

    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(headers)
    writer.writerows(rows)
    csv_text = buffer.getvalue()

    widths = [max(len(str(cell)) for cell in column) for column in zip(headers, *rows)]
    lines = [
        "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in [headers] + rows
    ]
    return csv_text, "\n".join(lines) + "\n"


def write_report(domain_results: dict[str, list[StageResult]], out_dir: str | Path,
                 transcript: Optional[list[dict[str, Any]]] = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_text, table_text = report(domain_results)
    (out / "results.csv").write_text(csv_text, encoding="utf-8")
    (out / "results.txt").write_text(table_text, encoding="utf-8")
    if transcript is not None:
        with (out / "transcript.jsonl").open("w", encoding="utf-8") as fh:
            for entry in transcript:
                fh.write(jsonl_line(entry))
    return out
