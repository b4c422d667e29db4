"""Distilled causal trees.

Fit an honest causal forest teacher, distill one shallow tree from its
out-of-bag effect predictions, and read doubly robust effect estimates with
bootstrap standard errors off every node.
"""

from ._dctree import (
    CausalForest,
    DataError,
    Dataset,
    DistilledTree,
    LeafEstimate,
    NuisanceValues,
    SchemaError,
    distill,
    distillation_split,
    fit_causal_forest,
    fit_teacher,
    generate,
    inject_noise,
    load_csv,
    mae_truth,
    set_num_threads,
    write_csv,
)

__all__ = [
    "CausalForest",
    "DataError",
    "Dataset",
    "DistilledTree",
    "LeafEstimate",
    "NuisanceValues",
    "SchemaError",
    "distill",
    "distillation_split",
    "fit_causal_forest",
    "fit_teacher",
    "generate",
    "inject_noise",
    "load_csv",
    "mae_truth",
    "set_num_threads",
    "write_csv",
]
