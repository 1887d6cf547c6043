"""Operator entry points: train, query, eval, experiment, serve, synth.

Exit codes: 0 success, 1 user error (bad arguments, missing files, malformed
input), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ArgumentError, CheckpointError, ParseError, TrainingError
from .evaluation import (
    EXPERIMENTS,
    evaluate_queries,
    format_table,
    generate_queries,
    run_experiment,
    split,
    write_reports,
)
from .graph import load_communities, load_temporal_graph, save_communities, save_edge_list
from .interactive import MetaModel
from .model import Model, ModelConfig, ModelParams, load_checkpoint, save_checkpoint
from .search import identify_community, write_results
from .service import ServiceConfig, ServiceState, serve
from .synthetic import planted_partition_graph
from .training import TrainConfig, train_temporal, write_trace

USER_ERRORS = (ArgumentError, ParseError, CheckpointError, TrainingError, FileNotFoundError)


def _add_graph_args(p):
    p.add_argument("--graph", required=True, help="edge list file: 'src dst timestamp' lines")
    p.add_argument("--attrs", default=None, help="optional node attribute CSV")
    p.add_argument("--snapshots", type=int, default=1, help="number of snapshot buckets")
    p.add_argument("--cumulative", action="store_true",
                   help="snapshot t holds all edges up to bucket t")


def _add_model_args(p):
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--variant", default="full", choices=("full", "no_gru", "sum_update"))
    p.add_argument("--bias-outside-sum", action="store_true",
                   help="apply the aggregation bias once instead of per neighbor")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="temporalcs",
        description="Temporal community search: train, query, evaluate, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write the best checkpoint")
    _add_graph_args(p)
    _add_model_args(p)
    p.add_argument("--communities", required=True, help="one community per line")
    p.add_argument("--queries", type=int, default=100, help="query-community pairs to sample")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("query", help="answer a community query with a trained model")
    _add_graph_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--nodes", required=True, help="comma-separated query node ids")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--t", type=int, default=0, help="snapshot to answer at (default: last)")
    p.add_argument("--out", default=None, help="optional JSONL output path")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a fresh test split")
    _add_graph_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--communities", required=True)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="out")

    p = sub.add_parser("experiment", help="run an ablation or hyperparameter study")
    _add_graph_args(p)
    _add_model_args(p)
    p.add_argument("--name", required=True,
                   help=f"one of: {', '.join(EXPERIMENTS)}")
    p.add_argument("--communities", required=True)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--eta-grid", default=None, help="comma-separated thresholds")
    p.add_argument("--hidden-grid", default=None, help="comma-separated hidden sizes")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="out")

    p = sub.add_parser("serve", help="serve queries and interactive sessions over HTTP")
    _add_graph_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=int(os.environ.get("TEMPORALCS_PORT", 8472)),
                   help="0 binds an ephemeral port")
    p.add_argument("--host", default=os.environ.get("TEMPORALCS_HOST", "127.0.0.1"))
    p.add_argument("--alpha", type=float, default=float(os.environ.get("TEMPORALCS_ALPHA", 0.5)))
    p.add_argument("--eta", type=float, default=float(os.environ.get("TEMPORALCS_ETA", 0.5)))
    p.add_argument("--feedback-epochs", type=int, default=5)
    p.add_argument("--node-budget", type=int, default=500)
    p.add_argument("--ui", default=None, help="serve a built frontend directory at /ui")

    p = sub.add_parser("synth", help="write a planted-partition dataset to files")
    p.add_argument("--out", default="synth")
    p.add_argument("--communities", type=int, default=2)
    p.add_argument("--community-size", type=int, default=20)
    p.add_argument("--snapshots", type=int, default=3)
    p.add_argument("--intra", type=float, default=0.3)
    p.add_argument("--inter", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=7)

    return parser


def _load_graph(args):
    return load_temporal_graph(
        args.graph, attr_path=args.attrs, num_snapshots=args.snapshots,
        cumulative=args.cumulative,
    )


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        layers=args.layers,
        hidden=args.hidden,
        window=args.window,
        dropout=args.dropout,
        variant=args.variant,
        bias_outside_sum=args.bias_outside_sum,
    )


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        dropout=args.dropout,
        seed=args.seed,
        window=args.window,
        eta=args.eta,
        patience=args.patience,
        optimizer=args.optimizer,
    )


def cmd_train(args) -> int:
    g = _load_graph(args)
    communities = load_communities(args.communities, g)
    samples = generate_queries(communities, args.queries, g.num_nodes, seed=args.seed)
    train, val, test = split(samples, seed=args.seed)
    model_cfg = _model_config(args)
    train_cfg = _train_config(args)
    params = ModelParams.init(model_cfg, g.attr_dim, args.seed)
    result = train_temporal(params, g, train, val, model_cfg, train_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    save_checkpoint(result.params, result.model_config, ckpt, seed=args.seed)
    write_trace(result.trace, out / "trace.jsonl")
    report = evaluate_queries(result.best_model(), g, test, eta=args.eta)
    print(f"best val F1 {result.best_val_f1:.4f} at epoch {result.best_epoch}; "
          f"test F1 {report.mean_f1:.4f} over {len(test)} queries")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_query(args) -> int:
    g = _load_graph(args)
    params, config, seed = load_checkpoint(args.checkpoint)
    model = Model(params=params, config=config, seed=seed)
    nodes = {g.resolve(name.strip()) for name in args.nodes.split(",") if name.strip()}
    if not nodes:
        raise ArgumentError("no query nodes given")
    from .graph import encode_query

    query = encode_query(nodes, g.num_nodes)
    t = args.t or g.num_snapshots
    replayed = model.replayed(g, query, up_to=t - 1)
    result = identify_community(g, t, query, replayed, args.eta)
    members = sorted(result.members)
    print(f"query {sorted(g.external_id(u) for u in nodes)} at t={t}, eta={args.eta}")
    print(f"community size {len(members)} "
          f"(psi range {result.psi[members].min():.3f}..{result.psi[members].max():.3f})")
    print(" ".join(g.external_id(u) for u in members))
    if args.out:
        write_results([result], args.out, g)
        print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    g = _load_graph(args)
    communities = load_communities(args.communities, g)
    params, config, seed = load_checkpoint(args.checkpoint)
    model = Model(params=params, config=config, seed=seed)
    samples = generate_queries(communities, args.queries, g.num_nodes, seed=args.seed)
    _, _, test = split(samples, seed=args.seed)
    if not test:
        raise ArgumentError("empty test split")
    report = evaluate_queries(model, g, test, eta=args.eta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reports([report], out / "eval.jsonl", out / "eval.csv")
    print(format_table([report]))
    return 0


def cmd_experiment(args) -> int:
    g = _load_graph(args)
    communities = load_communities(args.communities, g)
    samples = generate_queries(communities, args.queries, g.num_nodes, seed=args.seed)
    eta_grid = [float(x) for x in args.eta_grid.split(",")] if args.eta_grid else None
    hidden_grid = [int(x) for x in args.hidden_grid.split(",")] if args.hidden_grid else None
    reports = run_experiment(
        g, samples, _model_config(args), _train_config(args), args.name,
        eta_grid=eta_grid, hidden_grid=hidden_grid,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reports(
        reports,
        out / f"{args.name}.jsonl",
        out / f"{args.name}.csv",
        x_of=lambda r: r.config.get("eta", r.config.get("snapshots", r.label)),
    )
    print(format_table(reports))
    return 0


def cmd_serve(args) -> int:
    g = _load_graph(args)
    params, config, _ = load_checkpoint(args.checkpoint)
    meta = MetaModel(params=params, config=config, alpha=args.alpha)
    state = ServiceState(
        graph=g,
        meta=meta,
        config=ServiceConfig(
            eta_default=args.eta,
            alpha=args.alpha,
            feedback_epochs=args.feedback_epochs,
            node_budget=args.node_budget,
            ui_dir=args.ui,
        ),
    )
    serve(state, host=args.host, port=args.port)
    return 0


def cmd_synth(args) -> int:
    g, communities = planted_partition_graph(
        num_communities=args.communities,
        community_size=args.community_size,
        num_snapshots=args.snapshots,
        p_intra=args.intra,
        p_inter=args.inter,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_edge_list(g, out / "edges.txt")
    save_communities(communities, g, out / "communities.txt")
    print(f"wrote {out / 'edges.txt'} ({g.num_nodes} nodes, "
          f"{sum(s.num_edges for s in g.snapshots)} edges, {g.num_snapshots} snapshots)")
    print(f"wrote {out / 'communities.txt'} ({len(communities.communities)} communities)")
    return 0


COMMANDS = {
    "train": cmd_train,
    "query": cmd_query,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "serve": cmd_serve,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted; sessions discarded", file=sys.stderr)
        return 0
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
