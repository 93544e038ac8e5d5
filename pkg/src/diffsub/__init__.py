"""Differential subgroup discovery.

Gradient-based learning of interpretable conjunctive box rules that select a
subgroup where two populations diverge (or agree) exceptionally in a target
variable, balanced against subgroup generality and penalized when covariates
alone explain the divergence.
"""

__version__ = "0.1.0"

from .data import (
    ColumnSchema,
    Dataset,
    decode_interval,
    from_arrays,
    group_slices,
    load_csv,
    schema_from_json,
    to_original_units,
)
from .densities import (
    WeightedEmpiricalPMF,
    WeightedKDE,
    fit_discrete,
    fit_kde,
    js_divergence,
)
from .errors import DiffsubError
from .estimator import DifferentialSubgroupDiscovery
from .evaluation import (
    BenchmarkGrid,
    EffectMetrics,
    RecoveryMetrics,
    benchmark,
    effect_metrics,
    recovery,
)
from .forest import (
    ForestModel,
    fit_forest,
    local_divergence_continuous,
    local_divergence_discrete,
)
from .objective import (
    ObjectiveConfig,
    ObjectiveState,
    generality,
    loss_and_grad,
    refresh_context,
)
from .rules import (
    HardRule,
    MembershipBatch,
    SoftRule,
    harden,
    membership_batch,
    soft_membership,
    soft_predicate,
)
from .synthgen import SynthConfig, SynthTruth, generate, generate_full_mediation
from .trainer import (
    DiscoveryReport,
    TrainConfig,
    discover_multiple,
    subgroup_effect,
    train_once,
    train_restarts,
)

__all__ = [
    "__version__",
    "ColumnSchema", "Dataset", "decode_interval", "from_arrays",
    "group_slices", "load_csv", "schema_from_json", "to_original_units",
    "WeightedEmpiricalPMF", "WeightedKDE", "fit_discrete", "fit_kde",
    "js_divergence",
    "DiffsubError",
    "DifferentialSubgroupDiscovery",
    "BenchmarkGrid", "EffectMetrics", "RecoveryMetrics", "benchmark",
    "effect_metrics", "recovery",
    "ForestModel", "fit_forest", "local_divergence_continuous",
    "local_divergence_discrete",
    "ObjectiveConfig", "ObjectiveState", "generality", "loss_and_grad",
    "refresh_context",
    "HardRule", "MembershipBatch", "SoftRule", "harden", "membership_batch",
    "soft_membership", "soft_predicate",
    "SynthConfig", "SynthTruth", "generate", "generate_full_mediation",
    "DiscoveryReport", "TrainConfig", "discover_multiple", "subgroup_effect",
    "train_once", "train_restarts",
]
