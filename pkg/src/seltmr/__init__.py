"""Relevance-guided selective weight hardening under bit-flip faults.

The pieces, in dependency order: ``nncore`` runs small feed-forward
networks deterministically; ``modelio`` moves models and datasets through
portable binary containers and owns the global weight enumeration; ``lrp``
scores every weight by the relevance it carries; ``faults`` plans and
applies seeded single-bit flips at a chosen bit error rate; ``tmr``
triplicates chosen weights and votes out single corruptions; ``campaign``
turns all of that into reproducible experiments with CSV/JSON reports.
"""

from .campaign import (
    CampaignConfig,
    CampaignReport,
    MinProtectResult,
    TrialResult,
    derive_seed,
    emit_report,
    find_min_protection,
    run_min_protect,
    run_sensitivity,
    run_tmr_eval,
)
from .errors import (
    FormatError,
    HashMismatchError,
    PlanError,
    RelevanceError,
    SeltmrError,
    ShapeError,
    TruncatedBlobError,
)
from .faults import (
    BitFlip,
    FaultPlan,
    FlipRecord,
    InjectionStrategy,
    apply_faults,
    fault_count,
    flip_bit,
    load_plan,
    plan_injection,
    plan_storage_injection,
    restrict_to_original,
    save_log,
    save_plan,
)
from .lrp import (
    LrpRuleConfig,
    ProtectionSet,
    RelevanceMap,
    WeightScores,
    load_scores,
    propagate_relevance,
    save_scores,
    score_weights,
    select_top_fraction,
)
from .modelio import (
    GlobalWeightIndex,
    generate_fixture,
    read_model_hash,
    load_dataset,
    load_model,
    network_hash,
    save_dataset,
    save_model,
)
from .nncore import (
    EvalResult,
    ForwardTrace,
    LabeledDataset,
    Layer,
    Network,
    conv2d,
    dense,
    evaluate,
    flatten,
    forward,
    maxpool,
    relu,
    softmax,
)
from .tmr import (
    OverheadReport,
    ProtectedModel,
    ReplicaTriple,
    majority_vote,
    memory_overhead,
    protect,
    resolve,
)

__version__ = "0.1.0"

__all__ = [
    "BitFlip", "CampaignConfig", "CampaignReport", "EvalResult", "FaultPlan",
    "FlipRecord", "FormatError", "ForwardTrace", "GlobalWeightIndex",
    "HashMismatchError", "InjectionStrategy", "LabeledDataset", "Layer",
    "LrpRuleConfig", "MinProtectResult", "Network", "OverheadReport",
    "PlanError", "ProtectedModel", "ProtectionSet", "RelevanceError",
    "RelevanceMap", "ReplicaTriple", "SeltmrError", "ShapeError",
    "TrialResult", "TruncatedBlobError", "WeightScores", "apply_faults",
    "conv2d", "dense", "derive_seed", "emit_report", "evaluate",
    "fault_count", "find_min_protection", "flatten", "flip_bit", "forward",
    "generate_fixture", "load_dataset", "load_model", "load_plan", "load_scores", "majority_vote",
    "maxpool", "memory_overhead", "network_hash", "plan_injection",
    "plan_storage_injection", "propagate_relevance", "protect", "read_model_hash", "relu",
    "resolve", "restrict_to_original", "run_min_protect", "run_sensitivity",
    "run_tmr_eval", "save_dataset", "save_log", "save_model", "save_plan", "save_scores", "score_weights",
    "select_top_fraction", "softmax",
]
