"""Headless command line for driving sessions, auto collection and the
benchmark harness.

Configuration file (JSON)::

    {
      "backend": {"kind": "scripted", "script_path": "rules.json"},
      "adapter": {"kind": "local_corpus", "root_dir": "corpus/"},
      "session": {"round_sample_size": 8, ...},
      "data_dir": "data/"
    }

Remote variants: backend {"kind": "remote", "endpoint_url", "model_name",
"auth_token_env"}; adapter {"kind": "remote_crawler", "endpoint_url"}.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    default_synthetic_domain,
    iterative_evaluate,
    load_benchmark,
    oracle_selector,
    run_agent_selector,
    select_all,
    select_none,
    write_report,
)
from .domain import Query, RoundRecord, SessionConfig
from .gateway import BackendRef, ModelGateway
from .orchestrator import Orchestrator
from .proposal import LocalCorpusAdapter, PassThroughGrounder, RemoteCrawlerAdapter
from .store import SessionStore


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def build_orchestrator(config: dict, data_dir: str, seed: int | None) -> Orchestrator:
    backend_cfg = config.get("backend", {})
    kind = backend_cfg.get("kind", "scripted")
    ref = BackendRef(
        kind=kind,
        script_path=backend_cfg.get("script_path"),
        endpoint_url=backend_cfg.get("endpoint_url"),
        model_name=backend_cfg.get("model_name"),
        auth_token_env=backend_cfg.get("auth_token_env"),
        max_inflight=backend_cfg.get("max_inflight", 4),
        retry_limit=backend_cfg.get("retry_limit", 2),
    )
    gateway = ModelGateway.from_ref(ref)

    adapter_cfg = config.get("adapter", {})
    if adapter_cfg.get("kind", "local_corpus") == "local_corpus":
        adapter = LocalCorpusAdapter(adapter_cfg.get("root_dir", "corpus"))
    else:
        adapter = RemoteCrawlerAdapter(adapter_cfg["endpoint_url"])
    store = SessionStore(data_dir)
    return Orchestrator(gateway, adapter, PassThroughGrounder(), store)


def session_config(config: dict, seed: int | None) -> SessionConfig:
    session_cfg = dict(config.get("session", {}))
    if seed is not None:
        session_cfg["seed"] = seed
    return SessionConfig.from_dict(session_cfg) if session_cfg else SessionConfig()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="agent", description=__doc__)
    parser.add_argument("--config", help="path to JSON config file")
    parser.add_argument("--data-dir", default="data", help="session storage directory")
    parser.add_argument("--seed", type=int, default=None, help="deterministic RNG seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_new = sub.add_parser("new", help="start a session from a query")
    p_new.add_argument("--query", required=True)
    p_new.add_argument("--session", default=None, help="explicit session id")

    p_round = sub.add_parser("round", help="print the current round to review")
    p_round.add_argument("--session", required=True)

    p_feedback = sub.add_parser("feedback", help="submit a reviewed round")
    p_feedback.add_argument("--session", required=True)
    p_feedback.add_argument("--file", required=True, help="round record JSON file")

    p_auto = sub.add_parser("auto", help="run automatic collection")
    p_auto.add_argument("--session", required=True)
    p_auto.add_argument("--budget", type=int, required=True)

    p_export = sub.add_parser("export", help="export the dataset manifest")
    p_export.add_argument("--session", required=True)
    p_export.add_argument("--out", default=None)
    p_export.add_argument("--force", action="store_true")

    p_reset = sub.add_parser("reset", help="archive history and start over")
    p_reset.add_argument("--session", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8008)

    p_bench = sub.add_parser("bench", help="benchmark harness")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)
    p_bench_run = bench_sub.add_parser("run", help="evaluate a selector on a benchmark")
    p_bench_run.add_argument("--benchmark", required=True)
    p_bench_run.add_argument("--selector", choices=["agent", "all", "none", "oracle"],
                             default="all")
    p_bench_run.add_argument("--seed", type=int, default=0)
    p_bench_run.add_argument("--out", required=True)
    p_bench_make = bench_sub.add_parser("synth", help="generate a synthetic domain fixture")
    p_bench_make.add_argument("--out", required=True)
    p_bench_make.add_argument("--total", type=int, default=200)

    args = parser.parse_args(argv)
    config = load_config(args.config)

    if args.command == "bench":
        return _bench(args, config)

    orchestrator = build_orchestrator(config, args.data_dir, args.seed)

    if args.command == "new":
        session = orchestrator.start_session(
            Query(args.query), session_config(config, args.seed), session_id=args.session
        )
        print(json.dumps({"session_id": session.id, "phase": session.phase.value}))
        return 0

    if args.command == "serve":
        import uvicorn

        from .api import create_app

        app = create_app(orchestrator, default_config=session_config(config, args.seed))
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    session = orchestrator.load(args.session)

    if args.command == "round":
        print(json.dumps(orchestrator.next_round(session), indent=2))
    elif args.command == "feedback":
        record = RoundRecord.from_dict(json.loads(Path(args.file).read_text(encoding="utf-8")))
        terminated = orchestrator.submit_feedback(session, record)
        print(json.dumps({"terminated": terminated, **orchestrator.status(session)}))
    elif args.command == "auto":
        incremental = orchestrator.run_auto(session, args.budget)
        print(json.dumps({"collected": len(incremental.entries), **orchestrator.status(session)}))
    elif args.command == "export":
        out = args.out or str(
            orchestrator.store.session_dir(session.id) / "manifest.jsonl"
        )
        path = orchestrator.export_manifest(session, out, force=args.force)
        print(str(path))
    elif args.command == "reset":
        orchestrator.reset_session(session)
        print(json.dumps(orchestrator.status(session)))
    return 0


def _bench(args, config: dict) -> int:
    if args.bench_command == "synth":
        domain = default_synthetic_domain(total=args.total)
        out = Path(args.out)
        domain.write_corpus(out / "corpus")
        domain.write_rules(out / "rules.json")
        domain.write_benchmark(out / "benchmark.jsonl")
        print(str(out))
        return 0

    benchmark = load_benchmark(args.benchmark)
    out = Path(args.out)
    if args.selector == "agent":
        domain = default_synthetic_domain(total=len(benchmark.videos))
        outcome = run_agent_selector(benchmark, domain, out / "sessions", seed=args.seed)
        write_report({benchmark.domain_name: outcome.results}, out, outcome.transcript)
        results = outcome.results
    else:
        selector = {
            "all": select_all,
            "none": select_none,
            "oracle": oracle_selector(benchmark),
        }[args.selector]
        results = iterative_evaluate(selector, benchmark)
        write_report({benchmark.domain_name: results}, out, transcript=[])
    for result in results:
        print(f"{result.label()}: IoU {result.iou:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
