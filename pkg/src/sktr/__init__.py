"""Trace recovery from stochastically known event logs.

An SK log attaches a probability distribution over activity labels to every
event.  This package aligns such traces against a reference Petri net and
returns the trace-side labels of the cheapest alignment as the recovered
trace, alongside an argmax baseline and a controlled-noise experiment
harness for measuring recovery accuracy.
"""

from .alignment import (
    Alignment,
    CostFunction,
    SearchLimits,
    alignment_to_dict,
    brute_force_alignment,
    conformance_cost,
    edge_cost,
    extract_recovered_trace,
    search_optimal_alignment,
)
from .errors import (
    InfeasibleAlignmentError,
    OracleError,
    PnmlError,
    SearchLimitError,
    SktrError,
    ValidationError,
)
from .nets import (
    DEFAULT_TOKEN_CAP,
    SILENT,
    Marking,
    SystemNet,
    enabled_transitions,
    fire,
    is_enabled,
    replay,
)
from .noise_lab import (
    NoiseConfig,
    NoiseInjection,
    SweepReport,
    SweepRow,
    accuracy,
    assign_probabilities,
    inject_noise,
    recover_trace,
    run_pa_sweep,
    subsample_for_discovery,
    top_k_labels,
)
from .pnml import load_model, parse_pnml, serialize_pnml
from .report import render_sweep_figure, sweep_csv, sweep_json, write_sweep_report
from .sk_log import (
    SKEvent,
    SKTrace,
    StochasticTraceNet,
    argmax_recover,
    build_trace_net,
    deterministic_trace,
    parse_sk_log,
    parse_xes,
    write_sk_csv,
    write_xes,
)
from .sync_product import (
    SKIP,
    Move,
    MoveKind,
    SyncProduct,
    annotated_pnml,
    build_sync_product,
    move_probability,
    move_table_csv,
)

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "CostFunction",
    "DEFAULT_TOKEN_CAP",
    "InfeasibleAlignmentError",
    "Marking",
    "Move",
    "MoveKind",
    "NoiseConfig",
    "NoiseInjection",
    "OracleError",
    "PnmlError",
    "SILENT",
    "SKIP",
    "SKEvent",
    "SKTrace",
    "SearchLimitError",
    "SearchLimits",
    "SktrError",
    "StochasticTraceNet",
    "SweepReport",
    "SweepRow",
    "SyncProduct",
    "SystemNet",
    "ValidationError",
    "accuracy",
    "alignment_to_dict",
    "annotated_pnml",
    "argmax_recover",
    "assign_probabilities",
    "brute_force_alignment",
    "build_sync_product",
    "build_trace_net",
    "conformance_cost",
    "deterministic_trace",
    "edge_cost",
    "enabled_transitions",
    "extract_recovered_trace",
    "fire",
    "inject_noise",
    "is_enabled",
    "load_model",
    "move_probability",
    "move_table_csv",
    "parse_pnml",
    "parse_sk_log",
    "parse_xes",
    "recover_trace",
    "render_sweep_figure",
    "replay",
    "run_pa_sweep",
    "search_optimal_alignment",
    "serialize_pnml",
    "subsample_for_discovery",
    "sweep_csv",
    "sweep_json",
    "top_k_labels",
    "write_sk_csv",
    "write_sweep_report",
    "write_xes",
]
