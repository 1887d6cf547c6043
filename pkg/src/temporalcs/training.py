"""Per-query training over chronological snapshots, with early stopping.

Each snapshot sweep feeds the training queries one at a time in a seeded
shuffled order, taking one optimizer step per query. After the sweep, a final
inference pass with the settled parameters commits that snapshot's states
into history, so everything stored is mutually consistent. History resets at
the start of every epoch and is replayed from the first snapshot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, ShapeError, TrainingError
from .evaluation import f1_score
from .graph import TemporalGraph, candidate_subgraph, encode_query
from .model import Model, ModelConfig, ModelParams, StateHistory, forward
from .tensor import Tape, Tensor, gather_rows

# Queries train on their 2-hop candidate subgraphs once the graph exceeds
# this many nodes, bounding memory on large inputs.
CANDIDATE_NODE_THRESHOLD = 5000
CANDIDATE_HOPS = 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 0.01
    dropout: float = 0.5
    seed: int = 7
    window: int = 2
    eta: float = 0.5
    patience: int = 10
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ArgumentError(f"learning rate must be positive, got {self.lr}")
        if self.patience < 1:
            raise ArgumentError(f"patience must be >= 1, got {self.patience}")


def bce_loss(psi: Tensor, y) -> Tensor:
    """Mean binary cross entropy over all nodes, with predictions clamped to
    [1e-7, 1 - 1e-7] before the logs."""
    y = np.asarray(y, dtype=np.float64)
    if psi.shape != y.shape:
        raise ShapeError(f"psi shape {psi.shape} does not match labels {y.shape}")
    p = psi.clip(1e-7, 1.0 - 1e-7)
    yt = Tensor(y)
    return (-1.0 * (yt * p.log() + (1.0 - yt) * (1.0 - p).log())).mean()


def masked_bce_loss(psi: Tensor, y, indices) -> Tensor:
    """BCE averaged over a subset of nodes only (partial feedback)."""
    idx = np.asarray(sorted(indices), dtype=np.intp)
    if idx.size == 0:
        raise ArgumentError("masked loss needs at least one index")
    return bce_loss(gather_rows(psi, idx), np.asarray(y, dtype=np.float64)[idx])


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ModelParams) -> None:
        for _, t in params.items():
            t.data -= self.lr * t.grad


class Adam:
    """Adaptive-moment steps (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict = {}
        self._v: dict = {}
        self._t = 0

    def step(self, params: ModelParams) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for name, t in params.items():
            g = t.grad
            m = self._m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self._m[name] = m
                self._v[name] = np.zeros_like(g)
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self._t)
            v_hat = v / (1 - b2**self._t)
            t.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return Sgd(lr)
    raise ArgumentError(f"unknown optimizer {name!r}; valid: adam, sgd")


@dataclass
class SnapshotResult:
    per_query_losses: list
    total_loss: float

    @property
    def mean_loss(self) -> float:
        return self.total_loss / len(self.per_query_losses) if self.per_query_losses else 0.0


def train_snapshot(params: ModelParams, g: TemporalGraph, t: int, samples,
                   history: StateHistory, model_cfg: ModelConfig,
                   optimizer, rng) -> SnapshotResult:
    """One sweep over the training queries at snapshot ``t``: per-query
    forward, loss, backward, optimizer step; then commit this snapshot's
    states with the post-sweep parameters."""
    losses = [0.0] * len(samples)
    for i in rng.permutation(len(samples)) if samples else []:
        sample = samples[i]
        tape = Tape()
        params.bind(tape)
        res = forward(g, t, sample.query, history, params, model_cfg,
                      training=True, rng=rng, query_key=sample.key)
        loss = bce_loss(res.psi, sample.labels_at(t))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(
                f"non-finite loss at snapshot {t}, query {sample.key!r} (lr={optimizer.lr})"
            )
        tape.backward(loss)
        optimizer.step(params)
        losses[i] = value
    params.bind(None)

    snap_states = None
    for sample in samples:
        res = forward(g, t, sample.query, history, params, model_cfg, query_key=sample.key)
        if snap_states is None:
            snap_states = [s.data for s in res.snap_states]
        history.commit_query(t, sample.key, [s.data for s in res.query_states])
    if snap_states is None:
        snap_states = [s.data for s in _snapshot_only_states(g, t, params, model_cfg, history)]
    history.commit_snapshot(t, snap_states)
    return SnapshotResult(per_query_losses=losses, total_loss=float(np.sum(losses)))


def _snapshot_only_states(g, t, params, model_cfg, history):
    from .model import _update, snapshot_layer

    snap = g.snapshot(t)
    windows = history.snap_windows()
    h_in = Tensor(snap.attrs)
    states = []
    for layer in range(1, model_cfg.layers + 1):
        h = snapshot_layer(snap, h_in, layer, params, model_cfg)
        states.append(h)
        h_in = _update(h, windows[layer - 1], "snap", layer, params, model_cfg)
    return states


@dataclass
class TrainResult:
    params: ModelParams          # best-validation parameters (a detached copy)
    model_config: ModelConfig
    train_config: TrainConfig
    best_val_f1: float
    best_epoch: int
    trace: list = field(default_factory=list)

    def best_model(self) -> Model:
        return Model(params=self.params, config=self.model_config, seed=self.train_config.seed)


def train_temporal(params: ModelParams, g: TemporalGraph, train, val,
                   model_cfg: ModelConfig, train_cfg: TrainConfig) -> TrainResult:
    """Epoch loop: reset history, sweep snapshots chronologically, validate on
    the last snapshot with dropout off, keep the best checkpoint, and stop
    after ``patience`` epochs without improvement."""
    if not train or not val:
        raise ArgumentError("train and validation query sets must be non-empty")
    model_cfg = replace(model_cfg, dropout=train_cfg.dropout, window=train_cfg.window)
    rng = np.random.default_rng(train_cfg.seed)
    optimizer = make_optimizer(train_cfg.optimizer, train_cfg.lr)

    contexts = _training_contexts(g, train)
    val_contexts = _training_contexts(g, val)

    trace = []
    best = params.copy()
    best_f1 = -1.0
    best_epoch = 0
    stale = 0
    for epoch in range(1, train_cfg.epochs + 1):
        for ctx in contexts:
            ctx.reset(model_cfg)
        for t in range(1, g.num_snapshots + 1):
            mean_losses = []
            for ctx in contexts:
                result = train_snapshot(
                    params, ctx.graph, t, ctx.samples, ctx.history, model_cfg, optimizer, rng
                )
                mean_losses.append(result.mean_loss)
            trace.append(
                {
                    "epoch": epoch,
                    "snapshot": t,
                    "mean_loss": float(np.mean(mean_losses)),
                    "val_f1": None,
                }
            )

        val_f1 = _validate(params, val_contexts, model_cfg, train_cfg)
        trace[-1]["val_f1"] = val_f1
        if val_f1 > best_f1:
            best = params.copy()
            best_f1 = val_f1
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                break

    return TrainResult(
        params=best,
        model_config=model_cfg,
        train_config=train_cfg,
        best_val_f1=best_f1,
        best_epoch=best_epoch,
        trace=trace,
    )


class _Context:
    """A training scope: the full graph for everyone, or one candidate
    subgraph (with remapped queries) per sample on large graphs."""

    def __init__(self, graph, samples):
        self.graph = graph
        self.samples = samples
        self.history = None

    def reset(self, model_cfg: ModelConfig) -> None:
        self.history = StateHistory(model_cfg.layers, model_cfg.window)


def _training_contexts(g: TemporalGraph, samples):
    if g.num_nodes <= CANDIDATE_NODE_THRESHOLD:
        return [_Context(g, list(samples))]
    contexts = []
    for sample in samples:
        sub, mapping = candidate_subgraph(g, sample.query, CANDIDATE_HOPS)
        remapped = _remap_sample(sample, sub, mapping)
        contexts.append(_Context(sub, [remapped]))
    return contexts


def _remap_sample(sample, sub, mapping):
    from .evaluation import QuerySample

    labels = np.zeros(sub.num_nodes, dtype=np.float64)
    for old, new in mapping.items():
        labels[new] = sample.labels[old]
    community = frozenset(
        mapping[u] for u in (sample.community or ()) if u in mapping
    ) or None
    return QuerySample(
        query=encode_query({mapping[u] for u in sample.query.nodes}, sub.num_nodes),
        labels=labels,
        key=sample.key,
        community=community,
    )


def _validate(params, val_contexts, model_cfg, train_cfg) -> float:
    """Mean F1 of extracted communities over the validation queries on the
    last snapshot, with the current parameters and dropout off. Uses the same
    replayed-query protocol as test evaluation, so early stopping selects on
    the deployment metric."""
    from .search import identify_community

    params.bind(None)
    scores = []
    base = Model(params=params, config=model_cfg)
    for ctx in val_contexts:
        t = ctx.graph.num_snapshots
        for sample in ctx.samples:
            model = base.replayed(ctx.graph, sample.query, up_to=t - 1)
            result = identify_community(ctx.graph, t, sample.query, model, train_cfg.eta)
            _, _, f1 = f1_score(result.members, sample.community)
            scores.append(f1)
    return float(np.mean(scores))


def write_trace(trace, path) -> None:
    """Line-delimited metric records, stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in trace:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
