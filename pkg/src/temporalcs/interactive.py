"""Human-in-the-loop refinement: per-user sessions forked from a meta-model.

A session deep-copies the meta parameters, answers queries against the latest
snapshot, and treats every interaction as one step of the temporal history,
so the attention window spans the user's recent queries. Feedback fine-tunes
the session's own parameters with a masked loss over the labeled nodes plus
the query. On close, the meta-model moves toward the session parameters by a
convex combination with smoothing factor alpha.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, StateError
from .graph import TemporalGraph, encode_query
from .model import Model, ModelConfig, ModelParams, StateHistory, forward
from .search import CommunityResult, identify_community
from .tensor import Tape
from .training import Adam, masked_bce_loss


@dataclass
class MetaModel:
    """Shared initialization for sessions, updated by a moving average."""

    params: ModelParams
    config: ModelConfig
    alpha: float = 0.5
    update_count: int = 0
    last_update_norm: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass
class Session:
    """One user's working copy of the model plus its interaction history."""

    id: str
    params: ModelParams
    config: ModelConfig
    history: StateHistory
    epochs_per_round: int = 5
    lr: float = 0.01
    interactions: int = 0
    closed: bool = False
    feedback_log: list = field(default_factory=list)
    _optimizer: Adam = None
    _pending: tuple = None   # (query, interaction index) awaiting history commit

    def __post_init__(self):
        if self._optimizer is None:
            self._optimizer = Adam(self.lr)


def start_session(meta: MetaModel, epochs_per_round: int = 5, lr: float = 0.01) -> Session:
    """Fork a fresh session from the meta-model (deep parameter copy)."""
    return Session(
        id=uuid.uuid4().hex,
        params=meta.params.copy(),
        config=meta.config,
        history=StateHistory(meta.config.layers, meta.config.window),
        epochs_per_round=epochs_per_round,
        lr=lr,
    )


def _require_open(s: Session) -> None:
    if s.closed:
        raise StateError(f"session {s.id} is already finalized")


def _commit_pending(s: Session, g: TemporalGraph) -> None:
    """Write the previous interaction's states into history, computed with the
    session's current (post-feedback) parameters."""
    if s._pending is None:
        return
    query, index = s._pending
    s.params.bind(None)
    res = forward(g, g.num_snapshots, query, s.history, s.params, s.config,
                  query_key=None, history_t=index)
    s.history.commit_snapshot(index, [st.data for st in res.snap_states])
    s.history.commit_query(index, None, [st.data for st in res.query_states])
    s._pending = None


def session_query(s: Session, g: TemporalGraph, query_nodes, eta: float = 0.5) -> CommunityResult:
    """Answer one query with the session model; counts as a new interaction.

    The base graph's latest snapshot supplies structure; the session history
    advances by interaction index.
    """
    _require_open(s)
    query = query_nodes if hasattr(query_nodes, "onehot") else encode_query(query_nodes, g.num_nodes)
    _commit_pending(s, g)
    s.interactions += 1
    model = Model(params=s.params, config=s.config, history=s.history)
    result = identify_community(
        g, g.num_snapshots, query, model, eta, history_t=s.interactions
    )
    s._pending = (query, s.interactions)
    return result


def session_feedback(s: Session, g: TemporalGraph, labels: dict, epochs: int | None = None):
    """Fine-tune the session on user labels for the last query.

    ``labels`` maps node index to 0/1. The loss covers labeled nodes plus the
    query nodes (which count as members); everything else is masked out.
    Returns the per-epoch loss trace.
    """
    _require_open(s)
    if s._pending is None:
        raise StateError("feedback requires a preceding query")
    if not labels:
        raise ArgumentError("at least one node must be labeled")
    for u, value in labels.items():
        if not 0 <= int(u) < g.num_nodes:
            raise ArgumentError(f"labeled node {u} outside 0..{g.num_nodes - 1}")
        if value not in (0, 1):
            raise ArgumentError(f"label for node {u} must be 0 or 1, got {value!r}")
    epochs = s.epochs_per_round if epochs is None else epochs
    if epochs < 0:
        raise ArgumentError(f"epochs must be >= 0, got {epochs}")

    query, index = s._pending
    y = np.zeros(g.num_nodes, dtype=np.float64)
    for u, value in labels.items():
        y[int(u)] = float(value)
    for u in query.nodes:
        y[u] = 1.0
    mask = sorted({int(u) for u in labels} | query.nodes)

    trace = []
    for _ in range(epochs):
        tape = Tape()
        s.params.bind(tape)
        res = forward(g, g.num_snapshots, query, s.history, s.params, s.config,
                      history_t=index)
        loss = masked_bce_loss(res.psi, y, mask)
        trace.append(loss.item())
        tape.backward(loss)
        s._optimizer.step(s.params)
    s.params.bind(None)
    s.feedback_log.append({"query": sorted(query.nodes), "labels": dict(labels), "epochs": epochs})
    return trace


def param_distance(a: ModelParams, b: ModelParams) -> float:
    """Euclidean distance across all parameter tensors."""
    total = 0.0
    for name, t in a.items():
        diff = t.data - b[name].data
        total += float(np.sum(diff * diff))
    return float(np.sqrt(total))


def finalize_session(meta: MetaModel, s: Session) -> MetaModel:
    """Fold the session into the meta-model: meta <- (1-alpha) meta + alpha
    session, entrywise; the session closes and cannot be reused."""
    _require_open(s)
    alpha = meta.alpha
    total = 0.0
    for name, t in meta.params.items():
        # direct convex form: bitwise-exact at alpha = 0 and alpha = 1
        new = (1.0 - alpha) * t.data + alpha * s.params[name].data
        delta = new - t.data
        total += float(np.sum(delta * delta))
        t.data = new
    meta.update_count += 1
    meta.last_update_norm = float(np.sqrt(total))
    s.closed = True
    return meta
