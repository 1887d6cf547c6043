"""Metrics, query sampling, dataset splits, and the experiment drivers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError
from .graph import CommunitySet, TemporalGraph, encode_query


def f1_score(found, truth):
    """Precision, recall, and F1 of a found node set against the ground truth.

    Degenerate cases (either set effectively empty, or zero overlap) return
    zeros rather than raising.
    """
    found = set(found)
    truth = set(truth)
    if not found or not truth:
        return 0.0, 0.0, 0.0
    overlap = len(found & truth)
    pre = overlap / len(found)
    rec = overlap / len(truth)
    if pre + rec == 0:
        return pre, rec, 0.0
    return pre, rec, 2.0 * pre * rec / (pre + rec)


@dataclass
class QuerySample:
    """One training/evaluation unit: a query, its labels, and its source
    community. ``labels_by_t`` optionally carries evolving ground truth."""

    query: "QueryVector"
    labels: np.ndarray
    key: str
    community: frozenset = None
    labels_by_t: dict = None

    def __post_init__(self):
        for u in self.query.nodes:
            if self.labels[u] != 1.0:
                raise ArgumentError("query nodes must be labeled 1")

    def labels_at(self, t: int) -> np.ndarray:
        if self.labels_by_t and t in self.labels_by_t:
            return self.labels_by_t[t]
        return self.labels


def generate_queries(communities: CommunitySet, n: int, num_nodes: int,
                     size_range=(1, 10), seed: int = 0):
    """Sample ``n`` query-community pairs.

    Each sample picks a ground-truth community uniformly, then a uniform
    random subset whose size is uniform in [lo, min(hi, |community|)].
    Labels are the indicator vector of the source community.
    """
    if n < 1:
        raise ArgumentError(f"need at least one query, got n={n}")
    lo, hi = size_range
    if lo < 1 or hi < lo:
        raise ArgumentError(f"bad size range {size_range}")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        idx = int(rng.integers(len(communities.communities)))
        community = communities.communities[idx]
        members = sorted(community)
        top = min(hi, len(members))
        size = int(rng.integers(min(lo, top), top + 1))
        chosen = rng.choice(len(members), size=size, replace=False)
        nodes = {members[j] for j in chosen}
        labels = np.zeros(num_nodes, dtype=np.float64)
        labels[members] = 1.0
        labels_by_t = None
        if communities.per_snapshot:
            # evolving ground truth: per-snapshot label vectors for the same
            # community index, where that snapshot defines it
            labels_by_t = {}
            for t, snapshot_comms in communities.per_snapshot.items():
                if idx < len(snapshot_comms):
                    vec = np.zeros(num_nodes, dtype=np.float64)
                    vec[sorted(snapshot_comms[idx])] = 1.0
                    vec[sorted(nodes)] = 1.0
                    labels_by_t[t] = vec
        samples.append(
            QuerySample(
                query=encode_query(nodes, num_nodes),
                labels=labels,
                key=f"q{i}",
                community=community,
                labels_by_t=labels_by_t,
            )
        )
    return samples


def split(samples, ratios=(0.4, 0.3, 0.3), seed: int = 0):
    """Seeded shuffle, then contiguous train/validation/test split."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ArgumentError(f"ratios must sum to 1, got {ratios}")
    if len(samples) < 3:
        raise ArgumentError(f"need at least 3 samples to split, got {len(samples)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    shuffled = [samples[i] for i in order]
    n = len(samples)
    n_train = int(np.floor(n * ratios[0] + 0.5))
    n_val = int(np.floor(n * ratios[1] + 0.5))
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


@dataclass
class EvalReport:
    """Per-query metrics with aggregates and an echo of the configuration."""

    label: str
    per_query: list            # (key, precision, recall, f1)
    config: dict = field(default_factory=dict)

    @property
    def mean_f1(self) -> float:
        return float(np.mean([row[3] for row in self.per_query])) if self.per_query else 0.0

    @property
    def median_f1(self) -> float:
        return float(np.median([row[3] for row in self.per_query])) if self.per_query else 0.0

    def to_records(self):
        for key, pre, rec, f1 in self.per_query:
            yield {"label": self.label, "query": key, "precision": pre, "recall": rec, "f1": f1}

    def summary(self) -> dict:
        return {
            "label": self.label,
            "queries": len(self.per_query),
            "mean_f1": self.mean_f1,
            "median_f1": self.median_f1,
            "config": self.config,
        }


def evaluate_queries(model, g: TemporalGraph, samples, t: int | None = None,
                     eta: float = 0.5, label: str = "test", replay: bool = True) -> EvalReport:
    """Answer every sample at snapshot ``t`` (default: the last one) and score
    the extracted communities against each sample's source community.

    With ``replay`` (the default), each query is first run over the earlier
    snapshots in inference mode so its temporal state exists before answering.
    """
    from .search import identify_community

    t = g.num_snapshots if t is None else t
    rows = []
    for sample in samples:
        m = model.replayed(g, sample.query, up_to=t - 1) if replay else model
        result = identify_community(g, t, sample.query, m, eta)
        pre, rec, f1 = f1_score(result.members, sample.community)
        rows.append((sample.key, pre, rec, f1))
    return EvalReport(label=label, per_query=rows, config={"t": t, "eta": eta})


def write_reports(reports, jsonl_path=None, csv_path=None, x_of=None):
    """Emit reports as line-delimited records and, optionally, a plot-ready
    CSV of (x, mean_f1) rows. ``x_of`` maps a report to its x value."""
    reports = list(reports)
    if jsonl_path:
        with open(jsonl_path, "w", encoding="utf-8") as fh:
            for report in reports:
                fh.write(json.dumps(report.summary(), sort_keys=True) + "\n")
                for record in report.to_records():
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("x,mean_f1\n")
            for report in reports:
                x = x_of(report) if x_of else report.label
                fh.write(f"{x},{report.mean_f1}\n")


def format_table(reports) -> str:
    lines = [f"{'experiment':<24} {'queries':>8} {'mean F1':>9} {'median F1':>10}"]
    for report in reports:
        lines.append(
            f"{report.label:<24} {len(report.per_query):>8} "
            f"{report.mean_f1:>9.4f} {report.median_f1:>10.4f}"
        )
    return "\n".join(lines)


EXPERIMENTS = ("ablation_gru", "snapshot_count", "eta_sweep", "hidden_sweep")


def run_experiment(g: TemporalGraph, samples, model_cfg, train_cfg, experiment: str,
                   eta_grid=None, hidden_grid=None):
    """Train/evaluate drivers behind the ablation and hyperparameter studies.

    ``samples`` is the full query set; an identical split (derived from the
    training seed) is used by every arm of an experiment.
    """
    from . import training
    from .model import Model, ModelConfig, ModelParams

    if experiment not in EXPERIMENTS:
        raise ArgumentError(f"unknown experiment {experiment!r}; valid: {', '.join(EXPERIMENTS)}")
    train, val, test = split(samples, seed=train_cfg.seed)
    if not test:
        raise ArgumentError("empty test split")

    def train_and_eval(graph, cfg, label, eval_eta=None):
        params = ModelParams.init(cfg, graph.attr_dim, train_cfg.seed)
        result = training.train_temporal(params, graph, train, val, cfg, train_cfg)
        model = result.best_model()
        report = evaluate_queries(
            model, graph, test, eta=train_cfg.eta if eval_eta is None else eval_eta, label=label
        )
        report.config.update({"variant": cfg.variant, "hidden": cfg.hidden, "seed": train_cfg.seed})
        return model, report

    reports = []
    if experiment == "ablation_gru":
        for variant in ("full", "no_gru", "sum_update"):
            _, report = train_and_eval(g, replace(model_cfg, variant=variant), variant)
            reports.append(report)
    elif experiment == "snapshot_count":
        for t_prime in range(1, g.num_snapshots + 1):
            _, report = train_and_eval(g.truncated(t_prime), model_cfg, f"T={t_prime}")
            report.config["snapshots"] = t_prime
            reports.append(report)
    elif experiment == "eta_sweep":
        from .search import threshold_bfs

        grid = list(eta_grid) if eta_grid is not None else [round(0.1 * k, 1) for k in range(1, 10)]
        if not grid:
            raise ArgumentError("eta grid is empty")
        model, _ = train_and_eval(g, model_cfg, "base")
        t = g.num_snapshots
        adjacency = g.snapshot(t).adjacency
        per_eta = {eta: [] for eta in grid}
        for sample in val:
            replayed = model.replayed(g, sample.query, up_to=t - 1)
            psi = replayed.predict(g, t, sample.query)  # one forward, swept below
            for eta in grid:
                members = threshold_bfs(adjacency, sample.query.nodes, psi, eta)
                pre, rec, f1 = f1_score(members, sample.community)
                per_eta[eta].append((sample.key, pre, rec, f1))
        for eta in grid:
            reports.append(
                EvalReport(label=f"eta={eta}", per_query=per_eta[eta], config={"eta": eta, "t": t})
            )
    elif experiment == "hidden_sweep":
        grid = list(hidden_grid) if hidden_grid is not None else [32, 64, 128, 256]
        for hidden in grid:
            _, report = train_and_eval(g, replace(model_cfg, hidden=hidden), f"h={hidden}")
            reports.append(report)
    return reports
