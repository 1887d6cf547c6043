"""HTTP service exposing community queries and interactive sessions.

Thin delegation over the library: every endpoint resolves external node ids,
calls the corresponding session or graph operation, and shapes the JSON
response. Per-session locks serialize requests within a session; the
meta-model update on finalize holds an exclusive lock. Idle sessions are
evicted lazily after a configurable timeout (finalize stays explicit).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .errors import ArgumentError, StateError
from .graph import TemporalGraph, khop_nodes
from .interactive import MetaModel, Session, finalize_session, session_feedback, session_query, start_session


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ServiceConfig:
    eta_default: float = 0.5
    alpha: float = 0.5
    feedback_epochs: int = 5
    node_budget: int = 500
    idle_timeout_s: float = 1800.0
    ui_dir: str | None = None   # built frontend to serve at /ui


@dataclass
class ServiceState:
    """Everything the endpoints need; graph and meta must be set before
    serving traffic."""

    graph: TemporalGraph = None
    meta: MetaModel = None
    config: ServiceConfig = field(default_factory=ServiceConfig)
    sessions: dict = field(default_factory=dict)      # id -> _SessionEntry
    finalized: set = field(default_factory=set)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def ready(self) -> bool:
        return self.graph is not None and self.meta is not None


class _SessionEntry:
    def __init__(self, session: Session):
        self.session = session
        self.lock = threading.Lock()
        self.last_access = time.monotonic()
        self.last_result = None


def _evict_idle(state: ServiceState) -> None:
    now = time.monotonic()
    with state.lock:
        expired = [
            sid
            for sid, entry in state.sessions.items()
            if now - entry.last_access > state.config.idle_timeout_s
        ]
        for sid in expired:
            del state.sessions[sid]


def _get_entry(state: ServiceState, session_id: str) -> _SessionEntry:
    _evict_idle(state)
    with state.lock:
        entry = state.sessions.get(session_id)
    if entry is None:
        raise ApiError(404, "unknown_session", f"no session {session_id!r}")
    entry.last_access = time.monotonic()
    return entry


def _resolve_nodes(graph: TemporalGraph, node_ids) -> set:
    unknown = [str(n) for n in node_ids if str(n) not in graph.node_ids]
    if unknown:
        raise ApiError(400, "unknown_node", f"unknown node ids: {', '.join(sorted(unknown))}")
    return {graph.node_ids[str(n)] for n in node_ids}


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="temporal community search")

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    def require_ready():
        if not state.ready:
            raise ApiError(503, "not_ready", "graph and model are not loaded yet")

    @app.get("/health")
    def health():
        require_ready()
        return {"status": "ready", "nodes": state.graph.num_nodes,
                "snapshots": state.graph.num_snapshots}

    @app.post("/sessions")
    def create_session():
        require_ready()
        with state.lock:
            session = start_session(state.meta, epochs_per_round=state.config.feedback_epochs)
            state.sessions[session.id] = _SessionEntry(session)
        return {"session_id": session.id}

    @app.post("/sessions/{session_id}/query")
    def query(session_id: str, body: dict):
        require_ready()
        entry = _get_entry(state, session_id)
        node_ids = body.get("node_ids") or []
        if not node_ids:
            raise ApiError(400, "bad_request", "node_ids must be a non-empty list")
        eta = body.get("eta")
        eta = state.config.eta_default if eta is None else float(eta)
        if not 0.0 <= eta <= 1.0:
            raise ApiError(400, "bad_request", f"eta must be in [0, 1], got {eta}")
        nodes = _resolve_nodes(state.graph, node_ids)
        g = state.graph
        with entry.lock:
            result = session_query(entry.session, g, nodes, eta)
            entry.last_result = result
            interaction = entry.session.interactions
        members = sorted(result.members)
        frontier = sorted(
            {v for u in members for v in g.snapshot(result.t).adjacency[u]} - set(members)
        )
        psi = {g.external_id(u): float(result.psi[u]) for u in members + frontier}
        return {
            "members": [g.external_id(u) for u in members],
            "psi": psi,
            "interaction_index": interaction,
            "eta": eta,
            "t": result.t,
        }

    @app.post("/sessions/{session_id}/feedback")
    def feedback(session_id: str, body: dict):
        require_ready()
        entry = _get_entry(state, session_id)
        labels = body.get("labels") or {}
        if not labels:
            raise ApiError(400, "bad_request", "labels must be a non-empty map")
        epochs = body.get("epochs")
        if epochs is not None and (not isinstance(epochs, int) or epochs < 0):
            raise ApiError(400, "bad_request", "epochs must be a non-negative integer")
        resolved = {}
        for name, value in labels.items():
            if value not in (0, 1):
                raise ApiError(400, "bad_label", f"label for {name!r} must be 0 or 1")
            idx = state.graph.node_ids.get(str(name))
            if idx is None:
                raise ApiError(400, "unknown_node", f"unknown node ids: {name}")
            resolved[idx] = int(value)
        with entry.lock:
            try:
                trace = session_feedback(entry.session, state.graph, resolved, epochs)
            except (ArgumentError, StateError) as exc:
                raise ApiError(400, "bad_request", str(exc)) from None
        return {"loss_trace": [float(x) for x in trace]}

    @app.post("/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        require_ready()
        with state.lock:
            entry = state.sessions.get(session_id)
            if entry is None:
                if session_id in state.finalized:
                    raise ApiError(409, "session_closed",
                                   f"session {session_id!r} already finalized")
                raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        with entry.lock:
            with state.lock:
                if session_id in state.finalized:
                    raise ApiError(409, "session_closed",
                                   f"session {session_id!r} already finalized")
                try:
                    finalize_session(state.meta, entry.session)
                except StateError as exc:
                    raise ApiError(409, "session_closed", str(exc)) from None
                state.finalized.add(session_id)
                state.sessions.pop(session_id, None)
                norm = state.meta.last_update_norm
        return {"meta_update_norm": norm}

    @app.get("/graph")
    def graph_view(t: int = None, center: str = None, radius: int = None):
        require_ready()
        g = state.graph
        t = g.num_snapshots if t is None else t
        if not 1 <= t <= g.num_snapshots:
            raise ApiError(400, "bad_request", f"t must be in 1..{g.num_snapshots}, got {t}")
        snap = g.snapshot(t)
        if center is not None:
            seeds = _resolve_nodes(g, [center])
            kept = sorted(khop_nodes(snap, seeds, radius if radius is not None else 2))
        else:
            kept = list(range(g.num_nodes))
        truncated = len(kept) > state.config.node_budget
        kept = kept[: state.config.node_budget]
        kept_set = set(kept)
        edges = [
            [g.external_id(u), g.external_id(v)]
            for u in kept
            for v in snap.adjacency[u]
            if u < v and v in kept_set
        ]
        return {
            "t": t,
            "nodes": [g.external_id(u) for u in kept],
            "edges": edges,
            "attrs_summary": {
                "attr_dim": g.attr_dim,
                "num_nodes": g.num_nodes,
                "num_edges": snap.num_edges,
            },
            "truncated": truncated,
        }

    if state.config.ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=state.config.ui_dir, html=True), name="ui")

    return app


def serve(state: ServiceState, host: str = "127.0.0.1", port: int = 8472) -> None:
    """Run the service until interrupted; port 0 binds an ephemeral port and
    prints the actual address."""
    import socket

    import uvicorn

    app = create_app(state)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    actual = sock.getsockname()[1]
    print(f"serving on http://{host}:{actual}", flush=True)
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    server.run(sockets=[sock])
