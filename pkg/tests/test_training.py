import json
import math

import numpy as np
import pytest

from temporalcs.errors import ArgumentError, ShapeError, TrainingError
from temporalcs.evaluation import generate_queries, split
from temporalcs.graph import build_temporal_graph, encode_query
from temporalcs.model import Model, ModelConfig, ModelParams, StateHistory
from temporalcs.synthetic import planted_partition_graph
from temporalcs import training
from temporalcs.tensor import Tape, Tensor
from temporalcs.training import (
    Adam,
    TrainConfig,
    bce_loss,
    make_optimizer,
    masked_bce_loss,
    train_snapshot,
    train_temporal,
    write_trace,
)


def toy_setup(seed=1, n_queries=12, **cfg_kw):
    g, comms = planted_partition_graph(2, 8, 2, 0.5, 0.05, seed=seed)
    samples = generate_queries(comms, n_queries, g.num_nodes, seed=seed)
    train, val, test = split(samples, seed=seed)
    model_cfg = ModelConfig(layers=2, hidden=8, window=2, dropout=0.5)
    train_cfg = TrainConfig(epochs=cfg_kw.pop("epochs", 5), seed=seed, **cfg_kw)
    params = ModelParams.init(model_cfg, g.attr_dim, seed)
    return g, samples, (train, val, test), model_cfg, train_cfg, params


# -- loss -------------------------------------------------------------------------


def test_bce_uniform_prediction_is_ln2():
    psi = Tensor(np.full(6, 0.5))
    y = np.array([1.0, 0, 1, 0, 1, 0])
    assert abs(bce_loss(psi, y).item() - math.log(2)) < 1e-12


def test_bce_perfect_prediction_near_zero():
    y = np.array([1.0, 0.0, 1.0])
    loss = bce_loss(Tensor(y.copy()), y).item()
    assert 0 < loss <= 1.1e-7


def test_bce_inverted_prediction_hits_clamp():
    y = np.array([1.0, 0.0])
    loss = bce_loss(Tensor(1.0 - y), y).item()
    assert abs(loss - (-math.log(1e-7))) < 1e-9


def test_bce_shape_mismatch():
    with pytest.raises(ShapeError):
        bce_loss(Tensor(np.zeros(3)), np.zeros(4))


def test_bce_gradient_flows():
    tape = Tape()
    psi = Tensor(np.array([0.3, 0.8]))
    tape.watch(psi)
    tape.backward(bce_loss(psi, np.array([1.0, 0.0])))
    # d/dp of -(log p)/2 at 0.3 and -(log(1-p))/2 at 0.8
    assert np.allclose(psi.grad, [-1 / (2 * 0.3), 1 / (2 * 0.2)], atol=1e-12)


def test_masked_bce_only_sees_selected_nodes():
    psi = Tensor(np.array([0.5, 0.99, 0.01]))
    y = np.array([1.0, 0.0, 0.0])
    loss = masked_bce_loss(psi, y, [0])
    assert abs(loss.item() - math.log(2)) < 1e-12
    with pytest.raises(ArgumentError):
        masked_bce_loss(psi, y, [])


# -- optimizers ---------------------------------------------------------------------


def test_make_optimizer_rejects_unknown():
    with pytest.raises(ArgumentError):
        make_optimizer("rmsprop", 0.1)


def test_vanishing_lr_leaves_params_unchanged():
    cfg = ModelConfig(layers=1, hidden=4, dropout=0.0)
    params = ModelParams.init(cfg, attr_dim=1, seed=0)
    before = {k: v.data.copy() for k, v in params.items()}
    tape = Tape()
    params.bind(tape)
    loss = sum(((t * t).sum() for t in params.tensors()), Tensor(np.zeros(())))
    tape.backward(loss)
    for name, opt in (("adam", Adam(1e-12)), ("sgd", make_optimizer("sgd", 1e-12))):
        opt.step(params)
        worst = max(np.max(np.abs(params[k].data - before[k])) for k in before)
        assert worst <= 1e-9, name


def test_adam_moves_toward_minimum():
    t = Tensor(np.array([4.0]))
    params = ModelParams({"x": t})
    opt = Adam(0.1)
    for _ in range(200):
        tape = Tape()
        params.bind(tape)
        tape.backward((t * t).sum())
        opt.step(params)
    assert abs(t.data[0]) < 1e-2


# -- train_snapshot -------------------------------------------------------------------


def test_zero_queries_leave_params_but_commit_history():
    g, _, _, model_cfg, train_cfg, params = toy_setup()
    history = StateHistory(model_cfg.layers, model_cfg.window)
    before = {k: v.data.copy() for k, v in params.items()}
    rng = np.random.default_rng(0)
    result = train_snapshot(params, g, 1, [], history, model_cfg, Adam(0.01), rng)
    assert result.per_query_losses == []
    assert history.snap_t == 1
    for k, v in before.items():
        assert np.array_equal(params[k].data, v)


def test_snapshot_total_equals_sum_of_query_losses():
    g, _, (train, _, _), model_cfg, train_cfg, params = toy_setup()
    history = StateHistory(model_cfg.layers, model_cfg.window)
    rng = np.random.default_rng(0)
    result = train_snapshot(params, g, 1, train, history, model_cfg, Adam(0.01), rng)
    assert abs(result.total_loss - sum(result.per_query_losses)) <= 1e-12
    assert all(l > 0 for l in result.per_query_losses)


def test_snapshot_determinism_same_seed():
    outcomes = []
    for _ in range(2):
        g, _, (train, _, _), model_cfg, _, params = toy_setup(seed=3)
        history = StateHistory(model_cfg.layers, model_cfg.window)
        rng = np.random.default_rng(11)
        result = train_snapshot(params, g, 1, train, history, model_cfg, Adam(0.01), rng)
        outcomes.append(result.per_query_losses)
    assert outcomes[0] == outcomes[1]


def test_non_finite_loss_aborts_with_diagnostics():
    g, _, (train, _, _), model_cfg, _, params = toy_setup()
    params["head.w2"].data[:] = np.inf
    history = StateHistory(model_cfg.layers, model_cfg.window)
    with pytest.raises(TrainingError, match="lr="):
        train_snapshot(params, g, 1, train, history, model_cfg, Adam(0.01), np.random.default_rng(0))


# -- train_temporal -------------------------------------------------------------------


def test_single_epoch_single_sweep():
    g, _, (train, val, _), model_cfg, _, params = toy_setup()
    cfg = TrainConfig(epochs=1, patience=1, seed=1)
    result = train_temporal(params, g, train, val, model_cfg, cfg)
    assert [r["epoch"] for r in result.trace] == [1, 1]
    assert result.best_epoch == 1
    assert result.trace[-1]["val_f1"] == result.best_val_f1


def test_empty_split_rejected():
    g, _, (train, val, _), model_cfg, train_cfg, params = toy_setup()
    with pytest.raises(ArgumentError):
        train_temporal(params, g, train, [], model_cfg, train_cfg)


def test_training_loss_trend_decreases():
    g, _, (train, val, _), model_cfg, _, params = toy_setup(epochs=10, seed=2)
    cfg = TrainConfig(epochs=10, patience=10, seed=2)
    result = train_temporal(params, g, train, val, model_cfg, cfg)
    per_epoch = {}
    for r in result.trace:
        per_epoch.setdefault(r["epoch"], []).append(r["mean_loss"])
    losses = [float(np.mean(v)) for _, v in sorted(per_epoch.items())]
    # allow 5% noise on a generally decreasing trace
    violations = sum(1 for a, b in zip(losses, losses[1:]) if b > a * 1.05)
    assert losses[-1] < losses[0]
    assert violations <= 2


def test_best_checkpoint_matches_best_observed_val_f1():
    g, _, (train, val, _), model_cfg, _, params = toy_setup(epochs=6, seed=4)
    cfg = TrainConfig(epochs=6, patience=2, seed=4)
    result = train_temporal(params, g, train, val, model_cfg, cfg)
    observed = [r["val_f1"] for r in result.trace if r["val_f1"] is not None]
    assert result.best_val_f1 == max(observed)


def test_early_stopping_halts_after_patience():
    g, _, (train, val, _), model_cfg, _, params = toy_setup(seed=5)
    cfg = TrainConfig(epochs=50, patience=2, seed=5)
    result = train_temporal(params, g, train, val, model_cfg, cfg)
    epochs_run = result.trace[-1]["epoch"]
    assert epochs_run < 50
    assert epochs_run >= result.best_epoch + 2 or result.best_epoch == epochs_run


def test_train_determinism_across_runs():
    traces = []
    for _ in range(2):
        g, _, (train, val, _), model_cfg, _, params = toy_setup(seed=6)
        cfg = TrainConfig(epochs=3, patience=3, seed=6)
        result = train_temporal(params, g, train, val, model_cfg, cfg)
        traces.append(json.dumps(result.trace))
    assert traces[0] == traces[1]


def test_candidate_subgraph_path_smoke(monkeypatch):
    monkeypatch.setattr(training, "CANDIDATE_NODE_THRESHOLD", 10)
    g, _, (train, val, _), model_cfg, _, params = toy_setup(seed=7)
    cfg = TrainConfig(epochs=2, patience=2, seed=7)
    result = train_temporal(params, g, train[:3], val[:2], model_cfg, cfg)
    assert result.trace
    assert result.best_val_f1 >= 0.0


def test_write_trace_jsonl(tmp_path):
    trace = [{"epoch": 1, "snapshot": 1, "mean_loss": 0.5, "val_f1": None}]
    path = tmp_path / "trace.jsonl"
    write_trace(trace, path)
    lines = path.read_text().strip().split("\n")
    assert json.loads(lines[0])["epoch"] == 1
