"""Python bindings for the noisyal core."""

from ._noisyal import (
    BenchmarkConfig,
    Dataset,
    EvaluationReport,
    LadderResult,
    NoiseSpec,
    NoisyalError,
    bce_loss,
    benchmark_names,
    compute_class_weights,
    derive_seed,
    evaluate,
    generate_synthetic,
    group_aware_split,
    hard_targets,
    run_ladder,
    select_topk,
    sigmoid,
    smooth_targets,
    top3_decision,
    trend_slope,
)

__all__ = [name for name in dir() if not name.startswith("_")]
