import numpy as np
import pytest

from temporalcs.errors import ArgumentError, CheckpointError, ShapeError, StateError
from temporalcs.graph import build_temporal_graph, encode_query
from temporalcs.model import (
    Model,
    ModelConfig,
    ModelParams,
    StateHistory,
    _attention_pool,
    attention_short_state,
    classify,
    forward,
    gru_update,
    load_checkpoint,
    query_layer,
    save_checkpoint,
    snapshot_layer,
)
from temporalcs.tensor import Tensor, grad_check


def identity(x):
    return x


def zero_params(config, attr_dim=1):
    params = ModelParams.init(config, attr_dim, seed=0)
    for _, t in params.items():
        t.data[:] = 0.0
    return params


def random_graph(rng, n, num_snapshots=1, p=0.3):
    edges_per_snapshot = []
    for _ in range(num_snapshots):
        edges = [
            (u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p
        ]
        edges_per_snapshot.append(edges)
    return build_temporal_graph(n, edges_per_snapshot)


def layer_oracle(snap, H, w_self, w_neigh, b, bias_outside=False):
    """Explicit-loop evaluation of one propagation layer (relu, no dropout)."""
    n = snap.num_nodes
    deg = [len(snap.adjacency[u]) for u in range(n)]
    out = np.zeros((n, w_self.shape[1]))
    for u in range(n):
        acc = H[u] @ w_self
        for v in snap.adjacency[u]:
            scale = 1.0 / np.sqrt((deg[v] + 1.0) * (deg[u] + 1.0))
            acc = acc + (H[v] * scale) @ w_neigh
            if not bias_outside:
                acc = acc + b
        if bias_outside:
            acc = acc + b
        out[u] = np.maximum(acc, 0.0)
    return out


# -- snapshot layer -------------------------------------------------------------


def test_snapshot_layer_isolated_node_gets_no_bias():
    g = build_temporal_graph(3, [[(1, 2)]])
    cfg = ModelConfig(layers=1, hidden=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=2, seed=1)
    params["snap.1.bias"].data[:] = 5.0
    h_in = Tensor(np.arange(6.0).reshape(3, 2))
    out = snapshot_layer(g.snapshot(1), h_in, 1, params, cfg, activation=identity)
    expected = h_in.data[0] @ params["snap.1.w_self"].data
    assert np.allclose(out.data[0], expected, atol=1e-14)


def test_snapshot_layer_single_edge_hand_value():
    g = build_temporal_graph(2, [[(0, 1)]])
    cfg = ModelConfig(layers=1, hidden=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=2, seed=1)
    params["snap.1.w_self"].data[:] = 0.0
    params["snap.1.w_neigh"].data[:] = np.eye(2)
    params["snap.1.bias"].data[:] = 0.0
    h_in = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    out = snapshot_layer(g.snapshot(1), h_in, 1, params, cfg, activation=identity)
    # p_a = p_b = 2, so each node sees the other's features halved
    assert np.allclose(out.data[0], [1.5, 2.0])
    assert np.allclose(out.data[1], [0.5, 1.0])


@pytest.mark.parametrize("bias_outside", [False, True])
def test_snapshot_layer_matches_explicit_loop_oracle(bias_outside):
    rng = np.random.default_rng(23)
    for _ in range(10):
        n = int(rng.integers(2, 31))
        g = random_graph(rng, n, p=0.25)
        cfg = ModelConfig(layers=1, hidden=4, dropout=0.0, bias_outside_sum=bias_outside)
        params = ModelParams.init(cfg, attr_dim=3, seed=int(rng.integers(1000)))
        params["snap.1.bias"].data[:] = rng.normal(size=4)
        H = rng.normal(size=(n, 3))
        out = snapshot_layer(g.snapshot(1), Tensor(H), 1, params, cfg)
        expected = layer_oracle(
            g.snapshot(1), H,
            params["snap.1.w_self"].data, params["snap.1.w_neigh"].data,
            params["snap.1.bias"].data, bias_outside,
        )
        assert np.max(np.abs(out.data - expected)) <= 1e-10


def test_snapshot_layer_deterministic_without_dropout():
    g = build_temporal_graph(3, [[(0, 1), (1, 2)]])
    cfg = ModelConfig(layers=1, hidden=3, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=3)
    h_in = Tensor(g.snapshot(1).attrs)
    a = snapshot_layer(g.snapshot(1), h_in, 1, params, cfg, training=False)
    b = snapshot_layer(g.snapshot(1), h_in, 1, params, cfg, training=False)
    assert np.array_equal(a.data, b.data)


def test_snapshot_layer_shape_mismatch():
    g = build_temporal_graph(3, [[(0, 1)]])
    cfg = ModelConfig(layers=1, hidden=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=2, seed=1)
    with pytest.raises(ShapeError):
        snapshot_layer(g.snapshot(1), Tensor(np.zeros((5, 2))), 1, params, cfg)


# -- query layer ----------------------------------------------------------------


def test_query_layer_fuse_with_zero_is_identity_input():
    g = build_temporal_graph(2, [[(0, 1)]])
    cfg = ModelConfig(layers=2, hidden=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=2)
    x = Tensor(np.array([[0.3, -0.1], [0.7, 0.2]]))
    zeros = Tensor(np.zeros((2, 2)))
    a = query_layer(g.snapshot(1), x, zeros, 2, params, cfg, activation=identity)
    b = query_layer(g.snapshot(1), x + zeros, zeros, 2, params, cfg, activation=identity)
    assert np.array_equal(a.data, b.data)


def test_query_layer_propagates_query_mass_one_hop():
    g = build_temporal_graph(2, [[(0, 1)]])
    cfg = ModelConfig(layers=1, hidden=1, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=2)
    params["query.1.w_self"].data[:] = 0.0
    params["query.1.w_neigh"].data[:] = 1.0
    params["query.1.bias"].data[:] = 0.0
    c = Tensor(np.array([[1.0], [0.0]]))  # query {a}
    out = query_layer(g.snapshot(1), c, None, 1, params, cfg, activation=identity)
    assert np.allclose(out.data[1, 0], 0.5)  # c_a / sqrt(p_a p_b)


def test_query_layer_shape_mismatch_on_fuse():
    g = build_temporal_graph(2, [[(0, 1)]])
    cfg = ModelConfig(layers=2, hidden=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=2)
    with pytest.raises(ShapeError):
        query_layer(g.snapshot(1), Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))), 2, params, cfg)


# -- attention -------------------------------------------------------------------


def test_attention_identical_rows_reproduce_row():
    rng = np.random.default_rng(4)
    v = rng.normal(size=4)
    window = np.stack([v, v, v])
    q = Tensor(rng.normal(size=(4, 4)))
    r = Tensor(rng.normal(size=(1, 4)))
    short = attention_short_state(window, q, r)
    assert np.max(np.abs(short.data - v)) <= 1e-9


def test_attention_singleton_window_identity_exact():
    rng = np.random.default_rng(5)
    v = rng.normal(size=6)
    short = attention_short_state(v.reshape(1, 6), Tensor(rng.normal(size=(6, 6))), Tensor(rng.normal(size=(1, 6))))
    assert np.array_equal(short.data, v)


def test_attention_zero_weights_average_rows():
    v1 = np.array([1.0, 2.0, 3.0])
    v2 = np.array([5.0, 6.0, 7.0])
    short = attention_short_state(
        np.stack([v1, v2]), Tensor(np.zeros((3, 3))), Tensor(np.zeros((1, 3)))
    )
    assert np.allclose(short.data, (v1 + v2) / 2, atol=1e-14)


def test_attention_weights_simplex_and_envelope():
    rng = np.random.default_rng(6)
    for _ in range(20):
        n, d, w_eff = 5, 3, int(rng.integers(1, 5))
        window = [rng.normal(size=(n, d)) for _ in range(w_eff)]
        q = Tensor(rng.normal(size=(d, d)))
        r = Tensor(rng.normal(size=(1, d)))
        short, weights = _attention_pool(window, q, r)
        assert np.all(weights.data >= 0)
        assert np.allclose(weights.data.sum(axis=1), 1.0, atol=1e-9)
        stack = np.stack([m for m in window])
        assert np.all(short.data <= stack.max(axis=0) + 1e-12)
        assert np.all(short.data >= stack.min(axis=0) - 1e-12)


def test_attention_rejects_empty_window():
    with pytest.raises(ArgumentError):
        attention_short_state(np.zeros((0, 3)), Tensor(np.zeros((3, 3))), Tensor(np.zeros((1, 3))))


# -- GRU update ------------------------------------------------------------------


def zero_gru(d):
    return {
        k: Tensor(np.zeros((d, d)) if not k.startswith("b") else np.zeros(d))
        for k in ("xz", "hz", "bz", "xr", "hr", "br", "xh", "hh", "bh")
    }


def test_gru_all_zero_weights_give_zero():
    h = Tensor(np.array([0.3, -0.8, 1.2]))
    out = gru_update(h, None, zero_gru(3), "full")
    assert np.allclose(out.data, 0.0, atol=1e-15)


def test_gru_no_gru_variant_passthrough():
    h = Tensor(np.array([0.3, -0.8, 1.2]))
    out = gru_update(h, Tensor(np.ones(3)), zero_gru(3), "no_gru")
    assert np.array_equal(out.data, h.data)


def test_gru_sum_variant_empty_history():
    h = Tensor(np.array([0.3, -0.8, 1.2]))
    out = gru_update(h, None, zero_gru(3), "sum_update")
    assert np.array_equal(out.data, h.data)


def test_gru_sum_variant_adds_short():
    h = Tensor(np.array([1.0, 2.0]))
    s = Tensor(np.array([0.5, -0.5]))
    out = gru_update(h, s, zero_gru(2), "sum_update")
    assert np.allclose(out.data, [1.5, 1.5])


def test_gru_shape_mismatch():
    with pytest.raises(ShapeError):
        gru_update(Tensor(np.zeros(3)), Tensor(np.zeros(2)), zero_gru(3), "full")


# -- classification head -----------------------------------------------------------


def test_classify_zero_head_gives_half():
    cfg = ModelConfig(layers=1, hidden=2, dropout=0.0)
    params = zero_params(cfg)
    psi = classify(Tensor(np.random.default_rng(0).normal(size=(5, 2))),
                   Tensor(np.random.default_rng(1).normal(size=(5, 2))), params)
    assert np.allclose(psi.data, 0.5)


def test_classify_deterministic():
    cfg = ModelConfig(layers=1, hidden=3, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=9)
    z = Tensor(np.linspace(-1, 1, 12).reshape(4, 3))
    a = classify(z, z, params)
    b = classify(z, z, params)
    assert np.array_equal(a.data, b.data)


def test_classify_bias_monotonicity():
    cfg = ModelConfig(layers=1, hidden=3, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=9)
    z = Tensor(np.linspace(-1, 1, 12).reshape(4, 3))
    lo = classify(z, z, params).data.copy()
    params["head.b2"].data[:] += 1.0
    hi = classify(z, z, params).data
    assert np.all(hi > lo)


# -- forward ----------------------------------------------------------------------


def test_forward_zero_weights_give_half_everywhere():
    g = build_temporal_graph(4, [[(0, 1), (1, 2), (2, 3)]])
    cfg = ModelConfig(layers=1, hidden=4, window=1, dropout=0.0)
    params = zero_params(cfg)
    hist = StateHistory(cfg.layers, cfg.window)
    res = forward(g, 1, encode_query({0}, 4), hist, params, cfg)
    assert np.allclose(res.psi.data, 0.5, atol=1e-15)


def test_forward_deterministic_bitwise():
    rng = np.random.default_rng(12)
    g = random_graph(rng, 8, num_snapshots=2)
    cfg = ModelConfig(layers=2, hidden=4, window=2, dropout=0.5)
    model = Model.init(cfg, attr_dim=1, seed=3)
    model.rebuild_history(g, up_to=1)
    q = encode_query({0, 3}, 8)
    a = model.predict(g, 2, q)
    b = model.predict(g, 2, q)
    assert np.array_equal(a, b)


def test_forward_full_query_set_well_defined():
    rng = np.random.default_rng(13)
    g = random_graph(rng, 6)
    cfg = ModelConfig(layers=2, hidden=4, window=1, dropout=0.0)
    model = Model.init(cfg, attr_dim=1, seed=4)
    psi = model.predict(g, 1, encode_query(set(range(6)), 6))
    assert psi.shape == (6,)
    assert np.all((psi > 0) & (psi < 1))


def test_forward_psi_strictly_inside_unit_interval():
    rng = np.random.default_rng(14)
    for seed in range(3):
        g = random_graph(rng, 10, num_snapshots=2)
        cfg = ModelConfig(layers=2, hidden=6, window=2, dropout=0.0)
        model = Model.init(cfg, attr_dim=1, seed=seed)
        model.rebuild_history(g, up_to=1)
        psi = model.predict(g, 2, encode_query({1}, 10))
        assert np.all((psi > 0.0) & (psi < 1.0))


def test_forward_rejects_stale_history():
    g = build_temporal_graph(3, [[(0, 1)], [(1, 2)]])
    cfg = ModelConfig(layers=1, hidden=2, window=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=0)
    hist = StateHistory(1, 2)
    hist.commit_snapshot(2, [np.zeros((3, 2))])
    with pytest.raises(StateError):
        forward(g, 2, encode_query({0}, 3), hist, params, cfg)


def test_no_gru_variant_ignores_history_contents():
    rng = np.random.default_rng(15)
    g = random_graph(rng, 7, num_snapshots=2)
    cfg = ModelConfig(layers=2, hidden=4, window=2, dropout=0.0, variant="no_gru")
    params = ModelParams.init(cfg, attr_dim=1, seed=5)
    q = encode_query({2}, 7)

    empty = StateHistory(2, 2)
    res_empty = forward(g, 2, q, empty, params, cfg)

    filled = StateHistory(2, 2)
    filled.commit_snapshot(1, [rng.normal(size=(7, 4)) for _ in range(2)])
    res_filled = forward(g, 2, q, filled, params, cfg)
    assert np.array_equal(res_empty.psi.data, res_filled.psi.data)


def test_end_to_end_gradient_small_instance():
    # Generic random point: biases randomized too, so no pre-activation sits
    # exactly on a relu kink where central differences are invalid.
    rng = np.random.default_rng(7)
    g = random_graph(rng, 5, num_snapshots=2, p=0.5)
    cfg = ModelConfig(layers=2, hidden=3, window=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=7)
    for _, t in params.items():
        t.data[:] = rng.uniform(-0.6, 0.6, size=t.data.shape)
    q = encode_query({0, 2}, 5)
    y = Tensor(rng.integers(0, 2, size=5).astype(np.float64))

    def loss_fn():
        hist = StateHistory(cfg.layers, cfg.window)
        total = None
        for t in (1, 2):
            res = forward(g, t, q, hist, params, cfg, query_key="q")
            hist.commit_snapshot(t, res.snap_states)
            hist.commit_query(t, "q", res.query_states)
            err = ((res.psi - y) ** 2.0).mean()
            total = err if total is None else total + err
        return total

    assert grad_check(loss_fn, params.tensors(), eps=1e-5) <= 1e-4


# -- state history ------------------------------------------------------------------


def test_history_window_caps_and_order():
    hist = StateHistory(layers=1, window=2)
    for t in (1, 2, 3):
        hist.commit_snapshot(t, [np.full((2, 2), float(t))])
    window = hist.snap_windows()[0]
    assert len(window) == 2
    assert window[0][0, 0] == 2.0 and window[1][0, 0] == 3.0


def test_history_rejects_out_of_order_commit():
    hist = StateHistory(layers=1, window=2)
    hist.commit_snapshot(2, [np.zeros((1, 1))])
    with pytest.raises(StateError):
        hist.commit_snapshot(2, [np.zeros((1, 1))])


def test_history_query_streams_are_independent():
    hist = StateHistory(layers=1, window=2)
    hist.commit_query(1, "a", [np.ones((1, 1))])
    assert hist.query_windows("b") == [[]]
    assert len(hist.query_windows("a")[0]) == 1


# -- checkpointing --------------------------------------------------------------------


def test_checkpoint_round_trip_bitwise(tmp_path):
    cfg = ModelConfig(layers=2, hidden=5, window=3, dropout=0.25, variant="sum_update")
    params = ModelParams.init(cfg, attr_dim=4, seed=77)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, cfg, path, seed=77)
    loaded, cfg2, seed = load_checkpoint(path)
    assert cfg2 == cfg
    assert seed == 77
    assert loaded.names() == params.names()
    for name in params.names():
        assert np.array_equal(loaded[name].data, params[name].data)


def test_checkpoint_truncated_rejected(tmp_path):
    cfg = ModelConfig(layers=1, hidden=2, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=1)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, cfg, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_forward_identical_after_checkpoint_reload(tmp_path):
    rng = np.random.default_rng(18)
    g = random_graph(rng, 6, num_snapshots=1)
    cfg = ModelConfig(layers=2, hidden=4, window=1, dropout=0.0)
    model = Model.init(cfg, attr_dim=1, seed=8)
    q = encode_query({1, 4}, 6)
    before = model.predict(g, 1, q)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model.params, cfg, path, seed=8)
    params2, cfg2, _ = load_checkpoint(path)
    model2 = Model(params=params2, config=cfg2)
    assert np.array_equal(model2.predict(g, 1, q), before)
