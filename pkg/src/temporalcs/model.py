"""The temporal community-search network.

Two graph-convolution stacks run over each snapshot: a query-independent
snapshot encoder over node attributes, and a query encoder whose first-layer
input is the query one-hot vector and whose deeper layers consume the sum of
both encoders' previous outputs. After every layer, an attention pool over a
window of that node's past embeddings produces a short state, and a GRU cell
merges it with the current embedding. A small feedforward head maps the
concatenated final states of both encoders to a per-node membership
probability.

Aggregation uses a dense normalized adjacency (entry 1/sqrt(p_u p_v), p =
degree + 1), which is the matrix form of summing neighbor contributions; the
test suite checks it against an explicit-loop oracle.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, CheckpointError, ShapeError, StateError
from .graph import QueryVector, Snapshot, TemporalGraph
from .tensor import Tape, Tensor, concat, dropout, matmul, slice_cols, softmax

VARIANTS = ("full", "no_gru", "sum_update")

_GRU_KEYS = ("xz", "hz", "bz", "xr", "hr", "br", "xh", "hh", "bh")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and regularization settings."""

    layers: int = 2
    hidden: int = 32
    window: int = 2
    dropout: float = 0.5
    variant: str = "full"
    fnn_hidden: int = 0       # 0 -> hidden
    attention_dim: int = 0    # 0 -> hidden
    bias_outside_sum: bool = False

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1 or self.window < 1:
            raise ArgumentError("layers, hidden, and window must all be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ArgumentError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.variant not in VARIANTS:
            raise ArgumentError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def d_fnn(self) -> int:
        return self.fnn_hidden or self.hidden

    @property
    def d_att(self) -> int:
        return self.attention_dim or self.hidden


class ModelParams:
    """All trainable tensors, addressable by name, in a fixed order."""

    def __init__(self, tensors: dict):
        self._tensors = dict(tensors)

    @staticmethod
    def init(config: ModelConfig, attr_dim: int, seed: int) -> "ModelParams":
        """Fresh parameters: uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights,
        zero biases, drawn in a fixed name order from the run seed."""
        rng = np.random.default_rng(seed)
        h, a = config.hidden, config.d_att
        tensors: dict = {}

        def weight(name, shape, fan_in):
            bound = np.sqrt(1.0 / fan_in)
            tensors[name] = Tensor(rng.uniform(-bound, bound, size=shape))

        def bias(name, dim):
            tensors[name] = Tensor(np.zeros(dim))

        for encoder, d0 in (("snap", attr_dim), ("query", 1)):
            for layer in range(1, config.layers + 1):
                d_in = d0 if layer == 1 else h
                p = f"{encoder}.{layer}"
                weight(f"{p}.w_self", (d_in, h), d_in)
                weight(f"{p}.w_neigh", (d_in, h), d_in)
                bias(f"{p}.bias", h)
                weight(f"{p}.att_q", (a, h), h)
                weight(f"{p}.att_r", (1, a), a)
                for key in _GRU_KEYS:
                    if key.startswith("b"):
                        bias(f"{p}.gru_{key}", h)
                    else:
                        weight(f"{p}.gru_{key}", (h, h), h)
        weight("head.w1", (2 * h, config.d_fnn), 2 * h)
        bias("head.b1", config.d_fnn)
        weight("head.w2", (config.d_fnn, 1), config.d_fnn)
        bias("head.b2", 1)
        return ModelParams(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    @property
    def attr_dim(self) -> int:
        return self._tensors["snap.1.w_self"].shape[0]

    def gru(self, encoder: str, layer: int) -> dict:
        return {k: self._tensors[f"{encoder}.{layer}.gru_{k}"] for k in _GRU_KEYS}

    def bind(self, tape: Tape | None) -> None:
        """Attach every tensor to ``tape`` (or detach when None)."""
        for t in self._tensors.values():
            if tape is None:
                t.detach_()
            else:
                tape.watch(t)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.detach() for k, v in self._tensors.items()})

    def num_values(self) -> int:
        return sum(t.size for t in self._tensors.values())


class StateHistory:
    """Per-layer windows of past node embeddings for both encoders.

    The snapshot encoder has one stream; the query encoder keeps one stream
    per query key. Entries are (t, state) pairs, oldest to newest; reads
    return at most ``window`` states. One extra entry is retained internally
    so an ``as_of`` view can still produce a full window.
    """

    def __init__(self, layers: int, window: int):
        if layers < 1 or window < 1:
            raise ArgumentError("layers and window must be >= 1")
        self.layers = layers
        self.window = window
        self._snap = [deque(maxlen=window + 1) for _ in range(layers)]
        self._snap_t = 0
        self._query: dict = {}  # key -> [last_t, list of deques]

    @property
    def snap_t(self) -> int:
        return self._snap_t

    def query_t(self, key) -> int:
        entry = self._query.get(key)
        return entry[0] if entry else 0

    def _read(self, d, before_t):
        states = [s for tt, s in d if before_t is None or tt < before_t]
        return states[-self.window:]

    def snap_windows(self, before_t: int | None = None):
        return [self._read(d, before_t) for d in self._snap]

    def query_windows(self, key, before_t: int | None = None):
        entry = self._query.get(key)
        if entry is None:
            return [[] for _ in range(self.layers)]
        return [self._read(d, before_t) for d in entry[1]]

    def _check(self, t: int, last_t: int, states) -> None:
        if len(states) != self.layers:
            raise ArgumentError(f"expected {self.layers} per-layer states, got {len(states)}")
        if t <= last_t:
            raise StateError(f"commit for t={t} but history already holds t={last_t}")

    def commit_snapshot(self, t: int, states) -> None:
        self._check(t, self._snap_t, states)
        for d, s in zip(self._snap, states):
            d.append((t, s))
        self._snap_t = t

    def commit_query(self, t: int, key, states) -> None:
        entry = self._query.setdefault(
            key, [0, [deque(maxlen=self.window + 1) for _ in range(self.layers)]]
        )
        self._check(t, entry[0], states)
        for d, s in zip(entry[1], states):
            d.append((t, s))
        entry[0] = t

    def as_of(self, t: int) -> "StateHistory":
        """View containing only states strictly before ``t``."""
        view = StateHistory(self.layers, self.window)
        for dst, src in zip(view._snap, self._snap):
            dst.extend(e for e in src if e[0] < t)
            if dst:
                view._snap_t = max(view._snap_t, dst[-1][0])
        for key, (_, deques) in self._query.items():
            kept = [
                deque((e for e in d if e[0] < t), maxlen=self.window + 1) for d in deques
            ]
            last = max((d[-1][0] for d in kept if d), default=0)
            if any(kept_d for kept_d in kept):
                view._query[key] = [last, kept]
        return view


# -- layer operations ----------------------------------------------------------


def _propagate(snap: Snapshot, h_in: Tensor, encoder: str, layer: int,
               params: ModelParams, config: ModelConfig, *,
               training: bool, rng, activation=None) -> Tensor:
    prefix = f"{encoder}.{layer}"
    w_self = params[f"{prefix}.w_self"]
    w_neigh = params[f"{prefix}.w_neigh"]
    bias = params[f"{prefix}.bias"]
    if h_in.shape[0] != snap.num_nodes:
        raise ShapeError(f"input has {h_in.shape[0]} rows for {snap.num_nodes} nodes")
    agg = matmul(Tensor(snap.norm_adjacency()), h_in)
    pre = matmul(h_in, w_self) + matmul(agg, w_neigh)
    if config.bias_outside_sum:
        pre = pre + bias
    else:
        # the bias sits inside the neighbor sum: one copy per neighbor,
        # none for isolated nodes
        pre = pre + Tensor(snap.degrees().reshape(-1, 1)) * bias
    out = pre.relu() if activation is None else activation(pre)
    return dropout(out, config.dropout, training, rng)


def snapshot_layer(snap, h_in, layer, params, config, *, training=False, rng=None, activation=None):
    """One snapshot-encoder propagation layer: self term plus degree-normalized
    neighbor aggregation, nonlinearity, dropout."""
    return _propagate(snap, h_in, "snap", layer, params, config,
                      training=training, rng=rng, activation=activation)


def query_layer(snap, hq_in, h_snap_same_layer, layer, params, config, *,
                training=False, rng=None, activation=None):
    """One query-encoder layer. Layers past the first consume the elementwise
    sum of both encoders' previous outputs; layer 1 takes the raw one-hot."""
    if layer == 1:
        fused = hq_in
    else:
        if hq_in.shape != h_snap_same_layer.shape:
            raise ShapeError(
                f"cannot fuse shapes {hq_in.shape} and {h_snap_same_layer.shape}"
            )
        fused = hq_in + h_snap_same_layer
    return _propagate(snap, fused, "query", layer, params, config,
                      training=training, rng=rng, activation=activation)


def _attention_pool(window, q_att: Tensor, r_att: Tensor):
    """Convex combination of window entries per node.

    ``window`` is a list of (n, d) matrices, oldest to newest. Scores are
    r . tanh(Q . C^T) per node over window slots; the softmax weights combine
    the entries row-wise. Returns (short, weights)."""
    mats = [m if isinstance(m, Tensor) else Tensor(m) for m in window]
    qt = q_att.transpose()
    rt = r_att.transpose()
    cols = [matmul(matmul(m, qt).tanh(), rt) for m in mats]
    weights = softmax(concat(cols, axis=1), axis=1)
    short = None
    for j, m in enumerate(mats):
        part = slice_cols(weights, j, j + 1) * m
        short = part if short is None else short + part
    return short, weights


def attention_short_state(window, q_att, r_att):
    """Short state of one node's window (a w_eff x d matrix of past
    embeddings). Returns a length-d tensor inside the window's convex hull."""
    window = window.data if isinstance(window, Tensor) else np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[0] < 1:
        raise ArgumentError(f"window must be (w_eff, d) with w_eff >= 1, got {window.shape}")
    rows = [window[j:j + 1] for j in range(window.shape[0])]
    short, _ = _attention_pool(rows, q_att, r_att)
    return short.reshape((window.shape[1],))


def gru_update(h_current: Tensor, short, gru_params: dict, variant: str = "full") -> Tensor:
    """Merge the current embedding with the short state through a GRU cell.

    The current embedding is the cell input; the short state acts as the
    previous hidden state (zero when the history is empty). Variants:
    ``no_gru`` passes the embedding through, ``sum_update`` adds the two.
    """
    vec = h_current.ndim == 1
    h = h_current.reshape((1, h_current.shape[0])) if vec else h_current
    if variant == "no_gru":
        return h_current
    if short is not None and short.ndim == 1:
        short = short.reshape((1, short.shape[0]))
    if variant == "sum_update":
        out = h if short is None else h + short
        return out.reshape((h_current.shape[0],)) if vec else out
    if variant != "full":
        raise ArgumentError(f"unknown variant {variant!r}")
    s = Tensor(np.zeros(h.shape)) if short is None else short
    if s.shape != h.shape:
        raise ShapeError(f"short state shape {s.shape} does not match {h.shape}")
    z = (matmul(h, gru_params["xz"]) + matmul(s, gru_params["hz"]) + gru_params["bz"]).sigmoid()
    r = (matmul(h, gru_params["xr"]) + matmul(s, gru_params["hr"]) + gru_params["br"]).sigmoid()
    cand = (matmul(h, gru_params["xh"]) + matmul(r * s, gru_params["hh"]) + gru_params["bh"]).tanh()
    out = (1.0 - z) * s + z * cand
    return out.reshape((h_current.shape[0],)) if vec else out


def classify(zeta_snap: Tensor, zeta_query: Tensor, params: ModelParams) -> Tensor:
    """Membership probability from the concatenated final-layer states."""
    vec = zeta_snap.ndim == 1
    if vec:
        zeta_snap = zeta_snap.reshape((1, zeta_snap.shape[0]))
        zeta_query = zeta_query.reshape((1, zeta_query.shape[0]))
    x = concat([zeta_snap, zeta_query], axis=1)
    hidden = (matmul(x, params["head.w1"]) + params["head.b1"]).relu()
    logits = matmul(hidden, params["head.w2"]) + params["head.b2"]
    psi = logits.sigmoid().reshape((x.shape[0],))
    return psi


def _update(h: Tensor, window, encoder: str, layer: int,
            params: ModelParams, config: ModelConfig) -> Tensor:
    if config.variant == "no_gru":
        return h
    short = None
    if window:
        short, _ = _attention_pool(
            window, params[f"{encoder}.{layer}.att_q"], params[f"{encoder}.{layer}.att_r"]
        )
    if config.variant == "sum_update":
        return h if short is None else h + short
    return gru_update(h, short, params.gru(encoder, layer), "full")


@dataclass
class ForwardResult:
    psi: Tensor          # (n,) membership probabilities
    snap_states: list    # per-layer pre-update embeddings, (n, h) each
    query_states: list


def forward(g: TemporalGraph, t: int, query: QueryVector, history: StateHistory,
            params: ModelParams, config: ModelConfig, *,
            training: bool = False, rng=None, query_key=None,
            history_t: int | None = None) -> ForwardResult:
    """Full pipeline at snapshot ``t``: both encoder stacks with per-layer
    attention/GRU updates, then the classification head.

    ``history_t`` overrides the temporal position used for the history
    contract (interactive sessions count interactions, not snapshots).
    The returned per-layer states are what a caller commits into history.
    """
    snap = g.snapshot(t)
    if query.num_nodes != g.num_nodes:
        raise ShapeError(f"query encodes {query.num_nodes} nodes, graph has {g.num_nodes}")
    pos = history_t if history_t is not None else t
    if history.snap_t >= pos or history.query_t(query_key) >= pos:
        raise StateError(f"history holds states at or after t={pos}")

    snap_windows = history.snap_windows()
    query_windows = history.query_windows(query_key)

    h_in = Tensor(snap.attrs)
    hq_in = Tensor(query.onehot.reshape(-1, 1))
    zeta_s_prev = zeta_q_prev = None
    snap_states, query_states = [], []
    for layer in range(1, config.layers + 1):
        src = h_in if layer == 1 else zeta_s_prev
        h = snapshot_layer(snap, src, layer, params, config, training=training, rng=rng)
        hq = query_layer(
            snap,
            hq_in if layer == 1 else zeta_q_prev,
            None if layer == 1 else zeta_s_prev,
            layer,
            params,
            config,
            training=training,
            rng=rng,
        )
        snap_states.append(h)
        query_states.append(hq)
        zeta_s_prev = _update(h, snap_windows[layer - 1], "snap", layer, params, config)
        zeta_q_prev = _update(hq, query_windows[layer - 1], "query", layer, params, config)

    psi = classify(zeta_s_prev, zeta_q_prev, params)
    return ForwardResult(psi=psi, snap_states=snap_states, query_states=query_states)


# -- model bundle ---------------------------------------------------------------


@dataclass
class Model:
    """Parameters, configuration, and accumulated history, ready to answer
    queries. Immutable parameters during inference; one owner during training."""

    params: ModelParams
    config: ModelConfig
    history: StateHistory = None
    seed: int = 0

    def __post_init__(self):
        if self.history is None:
            self.history = StateHistory(self.config.layers, self.config.window)

    @staticmethod
    def init(config: ModelConfig, attr_dim: int, seed: int) -> "Model":
        return Model(params=ModelParams.init(config, attr_dim, seed), config=config, seed=seed)

    def fresh_history(self) -> None:
        self.history = StateHistory(self.config.layers, self.config.window)

    def predict(self, g: TemporalGraph, t: int, query: QueryVector, query_key=None,
                history_t: int | None = None) -> np.ndarray:
        """Inference-mode membership probabilities at snapshot ``t``."""
        self.params.bind(None)
        res = forward(g, t, query, self.history, self.params, self.config,
                      training=False, query_key=query_key, history_t=history_t)
        return res.psi.data

    def replayed(self, g: TemporalGraph, query: QueryVector, query_key=None,
                 up_to: int | None = None) -> "Model":
        """Model view whose history comes from replaying ``query`` over
        snapshots 1..up_to (default T-1) in inference mode.

        A previously unseen query has no stored query-encoder states; the
        replay builds them from graph structure alone, letting the temporal
        update path integrate the query's neighborhood across snapshots.
        """
        self.params.bind(None)
        history = StateHistory(self.config.layers, self.config.window)
        last = (g.num_snapshots - 1) if up_to is None else up_to
        for t in range(1, last + 1):
            res = forward(g, t, query, history, self.params, self.config,
                          training=False, query_key=query_key)
            history.commit_snapshot(t, [s.data for s in res.snap_states])
            history.commit_query(t, query_key, [s.data for s in res.query_states])
        return Model(params=self.params, config=self.config, history=history, seed=self.seed)

    def rebuild_history(self, g: TemporalGraph, up_to: int | None = None) -> None:
        """Recompute snapshot-encoder history from scratch with the current
        parameters, committing states for t = 1..up_to (default T-1)."""
        self.params.bind(None)
        self.fresh_history()
        last = (g.num_snapshots - 1) if up_to is None else up_to
        for t in range(1, last + 1):
            snap = g.snapshot(t)
            windows = self.history.snap_windows()
            h_in = Tensor(snap.attrs)
            states = []
            for layer in range(1, self.config.layers + 1):
                h = snapshot_layer(snap, h_in, layer, self.params, self.config)
                states.append(h.data)
                h_in = _update(h, windows[layer - 1], "snap", layer, self.params, self.config)
            self.history.commit_snapshot(t, states)


# -- checkpointing ----------------------------------------------------------------

_MAGIC = b"TCSCKPT\x01"


def save_checkpoint(params: ModelParams, config: ModelConfig, path, seed: int = 0) -> None:
    """Single-file checkpoint: magic, JSON header (config, seed, tensor names
    and shapes), then raw little-endian float64 buffers in header order."""
    header = {
        "version": 1,
        "seed": int(seed),
        "config": asdict(config),
        "tensors": [[name, list(t.shape)] for name, t in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (params, config, seed)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_MAGIC) + 4 or raw[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (blob_len,) = struct.unpack_from("<I", raw, len(_MAGIC))
    start = len(_MAGIC) + 4
    if len(raw) < start + blob_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start : start + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    if header.get("version") != 1:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    config = ModelConfig(**header["config"])
    offset = start + blob_len
    tensors = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated tensor data at {name!r}")
        data = np.frombuffer(raw[offset : offset + nbytes], dtype="<f8").reshape(shape)
        tensors[name] = Tensor(data.astype(np.float64, copy=True))
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return ModelParams(tensors), config, header.get("seed", 0)
