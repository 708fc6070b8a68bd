"""Knowledge-graph-aware recommender.

Training couples a translation-on-hyperplane knowledge embedding with a
pairwise ranking objective; scoring combines attention-weighted global
propagation with target-conditioned refinement over a sampled subgraph.
"""

try:
    from ._core import (
        Ablation,
        DataError,
        Dataset,
        EvalReport,
        ExplainRecord,
        Model,
        Norm,
        TrainConfig,
        TrainDiverged,
    )
except ImportError:  # in-tree builds leave the extension at the build root
    from _core import (
        Ablation,
        DataError,
        Dataset,
        EvalReport,
        ExplainRecord,
        Model,
        Norm,
        TrainConfig,
        TrainDiverged,
    )

__all__ = [
    "Ablation",
    "DataError",
    "Dataset",
    "EvalReport",
    "ExplainRecord",
    "Model",
    "Norm",
    "TrainConfig",
    "TrainDiverged",
]

__version__ = "0.1.0"
