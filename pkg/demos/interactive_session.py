"""Walk one full collection session offline, narrating each step.

Builds a synthetic 200-video corpus with scripted gateway rules, plays
a simulated reviewer against the agent for a few rounds, then lets the
frozen policy collect 50 clips automatically.

Run: python demos/interactive_session.py
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from vidcurate.bench import default_synthetic_domain
from vidcurate.domain import Query, SessionConfig
from vidcurate.gateway import ModelGateway, ScriptedBackend
from vidcurate.orchestrator import Orchestrator
from vidcurate.proposal import LocalCorpusAdapter, PassThroughGrounder
from vidcurate.store import SessionStore


def main() -> None:
    workspace = Path(tempfile.mkdtemp(prefix="vidcurate-demo-"))
    print(f"workspace: {workspace}")

    domain = default_synthetic_domain(total=200)
    corpus = domain.write_corpus(workspace / "corpus")
    print(f"corpus: {len(domain.records)} videos, "
          f"{len(domain.truth_ids())} satisfy all five requirements")

    orchestrator = Orchestrator(
        gateway=ModelGateway(ScriptedBackend(domain.scripted_rules())),
        adapter=LocalCorpusAdapter(corpus),
        grounder=PassThroughGrounder(),
        store=SessionStore(workspace / "data"),
    )
    user = domain.simulated_user()

    config = SessionConfig(top_k=200, accept_threshold=0.9, seed=7)
    session = orchestrator.start_session(Query("cat videos"), config, session_id="demo")
    print(f"\nproposal done: {len(session.pool)} candidates, phase={session.phase.value}")
    print(f"keywords: {list(session.keywords)}")
    print(f"demand summary: {session.demand_summary!r}")

    terminated = False
    while not terminated:
        skeleton = orchestrator.next_round(session)
        record = user.answer_round(skeleton)
        terminated = orchestrator.submit_feedback(session, record)
        print(f"\nround {record.round_index} ({skeleton['kind']}): "
              f"{len(record.accepted)} accepted, {len(record.rejected)} rejected")
        for comment in record.comments:
            print(f"  comment on {comment.video_id[:8]}: {comment.text!r}")
        print(f"  standard table v{session.table.version}: "
              f"{ {a: session.table.values_for(a) for a in session.table.attributes()} }")
        print(f"  templates: {[t.text for t in session.templates]}")
        print(f"  terminated: {terminated}")

    incremental = orchestrator.run_auto(session, budget=50)
    metadata = domain.metadata()
    clean = sum(
        1 for e in incremental.entries
        if all(p.holds(metadata[e.video_id]) for p in domain.predicates)
    )
    print(f"\nauto mode collected {len(incremental.entries)} clips, "
          f"{clean} satisfy every requirement")

    manifest_path = orchestrator.export_manifest(session, workspace / "manifest.jsonl")
    print(f"manifest: {manifest_path} "
          f"({len(session.manifest.entries)} entries incl. user-confirmed)")

    replayed = orchestrator.store.replay(session.id)
    identical = replayed.to_dict() == session.to_dict()
    print(f"event-log replay reconstructs the session: {identical}")


if __name__ == "__main__":
    main()
