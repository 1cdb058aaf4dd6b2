"""HTTP and SSE surface over the engine.

One process hosts one catalog, one order inventory, and many sessions.
Every mutation flows through the same engine operations the harness uses,
so the wire surface cannot reach states the stage machine forbids.
Responses carry schemaVersion so clients can detect drift.
"""

from __future__ import annotations

import asyncio
import json
import tempfile
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .backends import BackendConfig, make_backend
from .catalog import load_catalog
from .engine import CoCreationEngine
from .errors import (
    BackendError,
    CocreationError,
    EmptyIntent,
    InvalidDate,
    InvalidSelection,
    NoGroundedLookup,
    NotConfirmed,
    NotFound,
    PolicyDenied,
    StageError,
    TerminalStage,
)
from .gateway import OrderInventory, ToolGateway
from .harness import bundled_catalog_path
from .memory import MemoryStore

API_SCHEMA_VERSION = "1"

_CONFLICTS = (StageError, TerminalStage, InvalidSelection, InvalidDate,
              NotConfirmed, NoGroundedLookup, PolicyDenied)

_ACTIONS = ("ground", "propose", "select", "temporal", "draft", "review",
            "confirm", "abort")


def _error_body(err: Exception) -> dict:
    return {"schemaVersion": API_SCHEMA_VERSION,
            "error": {"type": type(err).__name__, "message": str(err)}}


def create_app(catalog_path=None, store_root=None,
               default_backend: str = "oracle", ui_dir=None) -> FastAPI:
    """Build the service; heavy state lives on app.state for test access."""
    catalog = load_catalog(catalog_path or bundled_catalog_path())
    root = Path(store_root) if store_root else Path(tempfile.mkdtemp(
        prefix="cocreation-"))
    root.mkdir(parents=True, exist_ok=True)
    inventory = OrderInventory(root / "orders.ndjson")
    gateway = ToolGateway(catalog, inventory=inventory)
    store = MemoryStore(root / "memory")
    engine = CoCreationEngine(catalog, gateway, store)

    app = FastAPI(title="cocreation", version=API_SCHEMA_VERSION)
    app.state.engine = engine
    app.state.catalog = catalog
    app.state.gateway = gateway
    app.state.backends = {}
    app.state.default_backend = default_backend

    @app.exception_handler(NotFound)
    async def _not_found(request: Request, err: NotFound):
        return JSONResponse(_error_body(err), status_code=404)

    for conflict_type in _CONFLICTS:
        @app.exception_handler(conflict_type)
        async def _conflict(request: Request, err: CocreationError):
            return JSONResponse(_error_body(err), status_code=409)

    @app.exception_handler(EmptyIntent)
    async def _empty(request: Request, err: EmptyIntent):
        return JSONResponse(_error_body(err), status_code=422)

    @app.exception_handler(BackendError)
    async def _backend_failed(request: Request, err: BackendError):
        return JSONResponse(_error_body(err), status_code=502)

    def _backend_for(session_id: str, spec: Optional[dict]):
        if session_id in app.state.backends:
            return app.state.backends[session_id]
        spec = spec or {}
        kind = spec.get("kind") or app.state.default_backend
        config = BackendConfig(
            kind=kind,
            profile=spec.get("profile"),
            endpoint_url=spec.get("endpointUrl"),
            model_name=spec.get("modelName"),
        )
        backend = make_backend(config)
        app.state.backends[session_id] = backend
        return backend

    def _session(session_id: str):
        return engine.get_session(session_id)

    def _envelope(session, extra: Optional[dict] = None) -> dict:
        body = {"schemaVersion": API_SCHEMA_VERSION,
                "session": session.as_dict()}
        if extra:
            body.update(extra)
        return body

    def _last_reply(session) -> Optional[str]:
        for turn in reversed(session.transcript):
            if turn.role == "Assistant" and turn.content.strip():
                return turn.content
        return None

    # -- sessions ----------------------------------------------------------------

    @app.post("/sessions", status_code=201)
    async def open_session(body: dict):
        intent = body.get("intentText", "")
        session = await asyncio.to_thread(
            engine.open_session,
            intent,
            body.get("trajectory"),
            None,
            body.get("defaultParameters"),
        )
        _backend_for(session.session_id, body.get("backend"))
        return _envelope(session)

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return _envelope(_session(session_id))

    @app.delete("/sessions/{session_id}")
    async def close_session(session_id: str):
        session = _session(session_id)
        if not session.is_terminal():
            await asyncio.to_thread(engine.abort, session, "closed by client")
        return _envelope(session)

    @app.post("/sessions/{session_id}/messages")
    async def post_message(session_id: str, body: dict):
        session = _session(session_id)
        action = body.get("action")
        if action not in _ACTIONS:
            return JSONResponse(
                {"schemaVersion": API_SCHEMA_VERSION,
                 "error": {"type": "UnknownAction",
                           "message": f"action must be one of {_ACTIONS}"}},
                status_code=422)
        backend = _backend_for(session_id, body.get("backend"))
        result = await asyncio.to_thread(
            _apply_action, engine, session, backend, action, body)
        return _envelope(session, {"reply": _last_reply(session),
                                   "result": result})

    # -- read surfaces --------------------------------------------------------------

    @app.get("/catalog/offerings")
    async def catalog_offerings():
        return {
            "schemaVersion": API_SCHEMA_VERSION,
            "offerings": [
                {"id": o.id, "name": o.name, "tier": o.tier,
                 "unitCostCents": o.unit_cost_cents, "billing": o.billing,
                 "parameters": list(o.parameter_names)}
                for o in catalog.offerings
            ],
        }

    @app.get("/orders")
    async def orders():
        return {
            "schemaVersion": API_SCHEMA_VERSION,
            "orders": [record.as_dict() for record in inventory.records()],
        }

    # -- events (SSE) ------------------------------------------------------------------

    @app.get("/sessions/{session_id}/events")
    async def session_events(session_id: str, request: Request):
        session = _session(session_id)

        async def stream():
            cursor = 0
            idle = 0.0
            while True:
                events = list(session.events)
                while cursor < len(events):
                    event = events[cursor]
                    cursor += 1
                    idle = 0.0
                    yield (f"id: {event.seq}\n"
                           f"event: {event.event_type}\n"
                           f"data: {json.dumps(event.as_dict())}\n\n")
                if session.is_terminal() and cursor >= len(session.events):
                    yield "event: end\ndata: {}\n\n"
                    return
                if await request.is_disconnected():
                    return
                await asyncio.sleep(0.1)
                idle += 0.1
                if idle >= 15.0:
                    yield ": keep-alive\n\n"
                    idle = 0.0

        return StreamingResponse(stream(), media_type="text/event-stream")

    if ui_dir:
        # mounted last so API routes keep precedence
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _apply_action(engine: CoCreationEngine, session, backend,
                  action: str, body: dict):
    """Engine dispatch for one structured client action."""
    if action == "ground":
        return engine.ground_intent(session, backend).as_dict()
    if action == "propose":
        proposals = engine.propose_alternatives(
            session, backend, user_text=body.get("text"))
        return [p.as_dict() for p in proposals]
    if action == "select":
        if "index" in body:
            engine.select_combination(session, int(body["index"]))
        elif body.get("bundle"):
            engine.select_combination(session, list(body["bundle"]))
        else:
            raise InvalidSelection("select needs an index or a bundle")
        return {"selected": list(session.selected)}
    if action == "temporal":
        if body.get("text"):
            engine.relay_temporal(session, backend, body["text"])
        else:
            engine.set_temporal(session, {
                "startDate": body.get("startDate"),
                "durationDays": body.get("durationDays"),
            })
        spec = session.temporal
        return {"temporal": spec.as_dict() if spec else None,
                "budgetWarning": session.budget_warning}
    if action == "draft":
        return engine.build_order_draft(session).canonical_dict()
    if action == "review":
        turn = engine.review_draft(session, backend,
                                   user_text=body.get("text"))
        return {"reply": turn.content}
    if action == "confirm":
        record = engine.confirm(session, body.get("confirmation", ""))
        return record.as_dict()
    if action == "abort":
        engine.abort(session, body.get("reason", "aborted by client"))
        return {"stage": session.stage}
    raise ValueError(f"unhandled action: {action}")
