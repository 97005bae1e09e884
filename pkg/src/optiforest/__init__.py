"""Exact solvers for minimum-size decision trees and tree ensembles.

Two independent engines (a witness-tree branch and bound and a subset
dynamic program) compute provably optimal trees and ensembles over labeled
training data, cross-checked by a brute-force oracle, with constructive
ensemble-to-tree compilation and a hard-instance generator.
"""

from .core import (
    DecisionTree,
    Example,
    InconsistentDataError,
    InstanceStats,
    ResourceLimitError,
    ThresholdSet,
    TrainingSet,
    TreeEnsemble,
    canonical_thresholds,
    classify_ensemble,
    classify_tree,
    dirty_examples,
    error_count,
    instance_stats,
    split,
)
from .dp import solve_dts_dp, solve_mtes_dp
from .model_io import load_csv, parse_model, serialize_model
from .oracle import brute_force_optimum, enumerate_trees
from .transforms import (
    ensemble_to_tree,
    generate_parity_instance,
    single_tree_lower_bound,
)
from .witness import (
    SolveSpec,
    enumerate_solutions_witness,
    solve_mmax_witness,
    solve_mtes_witness,
)

__version__ = "0.1.0"

__all__ = [
    "DecisionTree",
    "Example",
    "InconsistentDataError",
    "InstanceStats",
    "ResourceLimitError",
    "SolveSpec",
    "ThresholdSet",
    "TrainingSet",
    "TreeEnsemble",
    "brute_force_optimum",
    "canonical_thresholds",
    "classify_ensemble",
    "classify_tree",
    "dirty_examples",
    "ensemble_to_tree",
    "enumerate_solutions_witness",
    "enumerate_trees",
    "error_count",
    "generate_parity_instance",
    "instance_stats",
    "load_csv",
    "parse_model",
    "serialize_model",
    "single_tree_lower_bound",
    "solve_dts_dp",
    "solve_mmax_witness",
    "solve_mtes_dp",
    "solve_mtes_witness",
    "split",
]
