"""HTTP facade over the orchestrator.

JSON over HTTP for the review UI and external automation; schemas are
documented in docs/api.md. Handlers are stateless over the per-session
single-writer contract: writes to one session serialize on its lock,
reads are served from the latest snapshot. 4xx responses never mutate
state; POSTs honor an Idempotency-Key header.
"""

from __future__ import annotations

import logging
import threading
import uuid
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .domain import Phase, Query, RoundRecord, Session, SessionConfig
from .errors import (
    PhaseError,
    PoolExhausted,
    PreconditionError,
    StaleRound,
    UnknownBatch,
    ValidationFailed,
    VidcurateError,
)
from .orchestrator import Orchestrator

logger = logging.getLogger(__name__)

_STATUS_BY_CODE = {
    "bad_request": 400,
    "not_found": 404,
    "conflict": 409,
    "upstream": 502,
    "internal": 500,
}


def api_error(code: str, message: str, detail: Any = None) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_BY_CODE[code],
        content={"code": code, "message": message, "detail": detail},
    )


class SessionRegistry:
    """In-memory session handles with per-session write locks."""

    def __init__(self, orchestrator: Orchestrator):
        self.orchestrator = orchestrator
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self.assets: dict[str, str] = {}

    def add(self, session: Session) -> None:
        with self._registry_lock:
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self.index_assets(session)

    def get(self, session_id: str) -> Optional[Session]:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None and self.orchestrator.store.exists(session_id):
            session = self.orchestrator.load(session_id)
            self.add(session)
        return session

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def index_assets(self, session: Session) -> None:
        for item in session.pool.values():
            if item.asset_path:
                self.assets[item.id] = item.asset_path


def create_app(orchestrator: Orchestrator, default_config: Optional[SessionConfig] = None,
               cors_origins: Optional[list[str]] = None) -> FastAPI:
    app = FastAPI(title="vidcurate", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    base_config = (default_config or SessionConfig()).to_dict()
    registry = SessionRegistry(orchestrator)
    app.state.registry = registry
    idempotency_cache: dict[tuple[str, str], tuple[int, Any]] = {}

    def cached(request: Request) -> Optional[JSONResponse]:
        key = request.headers.get("Idempotency-Key")
        if not key:
            return None
        hit = idempotency_cache.get((request.url.path, key))
        if hit is None:
            return None
        status, body = hit
        return JSONResponse(status_code=status, content=body)

    def remember(request: Request, status: int, body: Any) -> JSONResponse:
        key = request.headers.get("Idempotency-Key")
        if key:
            idempotency_cache[(request.url.path, key)] = (status, body)
        return JSONResponse(status_code=status, content=body)

    @app.exception_handler(VidcurateError)
    async def on_domain_error(request: Request, exc: VidcurateError):
        if isinstance(exc, (PhaseError, StaleRound, UnknownBatch, PoolExhausted)):
            return api_error("conflict", str(exc))
        if isinstance(exc, (ValidationFailed, PreconditionError)):
            detail = exc.violations if isinstance(exc, ValidationFailed) else None
            return api_error("bad_request", str(exc), detail)
        return api_error("upstream", str(exc))

    @app.exception_handler(ValueError)
    async def on_value_error(request: Request, exc: ValueError):
        return api_error("bad_request", str(exc))

    @app.post("/sessions", status_code=201)
    def create_session(body: dict, request: Request, response: Response):
        hit = cached(request)
        if hit:
            return hit
        query_text = (body.get("query") or "").strip()
        if not query_text:
            return api_error("bad_request", "query must be non-empty")
        # per-request knobs overlay the service-level session defaults
        config = SessionConfig.from_dict({**base_config, **body.get("config", {})})
        session = Session(
            id=body.get("session_id") or uuid.uuid4().hex[:12],
            query=Query(query_text),
            config=config,
        )
        event = orchestrator.store.append_event(
            session.id, "created",
            {"id": session.id, "query": session.query.to_dict(), "config": config.to_dict()},
        )
        session.created_at = event["at"]
        session.last_event_at = event["at"]
        orchestrator.store.write_snapshot(session)
        registry.add(session)

        def propose():
            with registry.lock(session.id):
                try:
                    orchestrator.propose(session)
                except VidcurateError as exc:
                    session.warnings.append(f"proposal failed: {exc}")
                    logger.warning("proposal for %s failed: %s", session.id, exc)
                registry.index_assets(session)

        threading.Thread(target=propose, daemon=True).start()
        return remember(request, 201, {"session_id": session.id, "phase": session.phase.value})

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        session = registry.get(session_id)
        if session is None:
            return api_error("not_found", f"unknown session {session_id}")
        return orchestrator.status(session)

    @app.get("/sessions/{session_id}/round")
    def get_round(session_id: str):
        session = registry.get(session_id)
        if session is None:
            return api_error("not_found", f"unknown session {session_id}")
        if session.phase is not Phase.INTERACTIVE:
            return api_error("conflict", f"session is {session.phase.value}, not interactive")
        with registry.lock(session_id):
            skeleton = orchestrator.next_round(session)
        public = {k: v for k, v in skeleton.items() if k not in ("via", "filter_summary")}
        return public

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: dict, request: Request):
        hit = cached(request)
        if hit:
            return hit
        session = registry.get(session_id)
        if session is None:
            return api_error("not_found", f"unknown session {session_id}")
        current = session.current_round
        kind = current["kind"] if current else "normal"
        record = RoundRecord.from_dict(
            {
                "round_index": body.get("round_index", -1),
                "sampled": body.get("sampled", current["sampled"] if current else []),
                "accepted": body.get("accepted", []),
                "rejected": body.get("rejected", []),
                "comments": body.get("comments", []),
                "kind": body.get("kind", kind),
            }
        )
        with registry.lock(session_id):
            terminated = orchestrator.submit_feedback(session, record)
        return remember(
            request, 200, {"phase": session.phase.value, "terminated": terminated}
        )

    @app.post("/sessions/{session_id}/auto")
    def post_auto(session_id: str, body: dict, request: Request):
        hit = cached(request)
        if hit:
            return hit
        session = registry.get(session_id)
        if session is None:
            return api_error("not_found", f"unknown session {session_id}")
        if session.phase is Phase.INTERACTIVE and not orchestrator.check_termination(session):
            return api_error("conflict", "session has not reached termination")
        if session.phase not in (Phase.INTERACTIVE, Phase.AUTO):
            return api_error("conflict", f"auto unavailable in phase {session.phase.value}")
        budget = int(body.get("budget", 0))

        def collect():
            with registry.lock(session_id):
                try:
                    orchestrator.run_auto(session, budget)
                except VidcurateError as exc:
                    session.warnings.append(f"auto run failed: {exc}")
                registry.index_assets(session)

        threading.Thread(target=collect, daemon=True).start()
        return remember(request, 200, {"accepted": True})

    @app.get("/sessions/{session_id}/manifest")
    def get_manifest(session_id: str):
        session = registry.get(session_id)
        if session is None:
            return api_error("not_found", f"unknown session {session_id}")
        return PlainTextResponse(
            orchestrator.manifest_bytes(session), media_type="application/x-ndjson"
        )

    @app.post("/sessions/{session_id}/reset")
    def post_reset(session_id: str, request: Request):
        hit = cached(request)
        if hit:
            return hit
        session = registry.get(session_id)
        if session is None:
            return api_error("not_found", f"unknown session {session_id}")
        with registry.lock(session_id):
            orchestrator.reset_session(session)
        return remember(request, 200, {"phase": session.phase.value})

    @app.get("/assets/{asset_id}")
    def get_asset(asset_id: str, request: Request):
        path = registry.assets.get(asset_id)
        if path is None or not Path(path).exists():
            return api_error("not_found", f"unknown asset {asset_id}")
        data = Path(path).read_bytes()
        range_header = request.headers.get("range")
        if range_header and range_header.startswith("bytes="):
            try:
                start_s, _, end_s = range_header[len("bytes="):].partition("-")
                start = int(start_s or 0)
                end = int(end_s) if end_s else len(data) - 1
            except ValueError:
                return api_error("bad_request", f"malformed range {range_header!r}")
            end = min(end, len(data) - 1)
            if start > end:
                return api_error("bad_request", "unsatisfiable range")
            chunk = data[start : end + 1]
            return Response(
                content=chunk,
                status_code=206,
                media_type="application/octet-stream",
                headers={
                    "Content-Range": f"bytes {start}-{end}/{len(data)}",
                    "Accept-Ranges": "bytes",
                },
            )
        return Response(
            content=data,
            media_type="application/octet-stream",
            headers={"Accept-Ranges": "bytes"},
        )

    return app
