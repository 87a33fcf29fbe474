"""Coreset selection from per-sample loss trajectories.

The pipeline: log per-sample losses at every training checkpoint, turn them
into loss-difference trajectories, score each training sample by how well
its trajectory correlates with its class's mean validation trajectory, and
keep the per-class top scorers. Companion modules provide a deterministic
synthetic trainer, convergence diagnostics with measured constants, an
exact compute/storage cost model, and subset-retraining attribution
studies.
"""

from .costmodel import (
    METHODS,
    CostReport,
    ScenarioParams,
    compute_cost,
    imagenet_scenario,
    storage_overhead,
)
from .errors import CldError
from .losslog import (
    CheckpointGrid,
    DeltaMatrix,
    LossLog,
    Manifest,
    SubsamplePlan,
    delta_trajectories,
    load_losslog,
    subsample_checkpoints,
    write_losslog,
)
from .scoring import (
    ClassValidationTrajectory,
    ScoreTable,
    cld_infl,
    cld_scores,
    pearson,
    score_mae,
    validation_class_average,
)
from .selection import (
    Budget,
    Coreset,
    allocate_quotas,
    build_validation_set,
    ccs_stratified,
    random_coreset,
    select_topk,
)
from .attribution import (
    BrittlenessReport,
    InfluenceMatrix,
    LdsReport,
    SubsetPlan,
    brittleness,
    group_attribution,
    lds_evaluate,
    spearman,
)
from .theory import (
    AlignmentReport,
    BoundReport,
    alignment_diagnostics,
    run_theory_study,
    smoothness_estimate,
    theorem_bound_check,
)
from .trainer import (
    DatasetBundle,
    ModelParams,
    SyntheticSpec,
    TrainConfig,
    TrainResult,
    batch_gradient,
    evaluate,
    generate_dataset,
    per_sample_gradient,
    reference_gradient,
    train_and_log,
)

__version__ = "0.1.0"
