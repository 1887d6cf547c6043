"""Temporal community search: a query-driven temporal graph network trained on
ground-truth communities, threshold-BFS extraction of connected communities,
and human-in-the-loop refinement sessions folded into a meta-model."""

from .errors import (
    ArgumentError,
    CheckpointError,
    IngestError,
    NumericError,
    ParseError,
    ShapeError,
    StateError,
    TrainingError,
)
from .evaluation import EvalReport, QuerySample, evaluate_queries, f1_score, generate_queries, run_experiment, split
from .graph import (
    CommunitySet,
    QueryVector,
    Snapshot,
    TemporalGraph,
    build_temporal_graph,
    candidate_subgraph,
    degree_plus_one,
    encode_query,
    khop_candidate,
    load_communities,
    load_temporal_graph,
    save_communities,
    save_edge_list,
)
from .interactive import MetaModel, Session, finalize_session, session_feedback, session_query, start_session
from .model import (
    Model,
    ModelConfig,
    ModelParams,
    StateHistory,
    attention_short_state,
    classify,
    forward,
    gru_update,
    load_checkpoint,
    query_layer,
    save_checkpoint,
    snapshot_layer,
)
from .search import CommunityResult, identify_community, sweep_threshold, threshold_bfs
from .synthetic import planted_partition_graph
from .tensor import Tape, Tensor, grad_check
from .training import TrainConfig, bce_loss, masked_bce_loss, train_snapshot, train_temporal

__version__ = "0.1.0"
