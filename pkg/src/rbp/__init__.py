"""Rule-modulated body-part attention scoring and benchmark evaluation."""

from .attention import (
    AttentionParams,
    ClassScores,
    HeadParams,
    Instance,
    Params,
    PartFeature,
    apply_rules,
    init_attention_params,
    init_head_params,
    late_fuse,
    predict_attention,
    score_all,
    score_class,
)
from .errors import EngineError
from .evaluation import (
    Box,
    Detection,
    EvalReport,
    GtPair,
    average_precision,
    evaluate,
    iou,
    match_detections,
)
from .rules import (
    AnnotatorLabelSet,
    RuleMatrix,
    aggregate_annotations,
    all_ones,
    booleanize,
    rule_row_mean,
    validate_rules,
)
from .synth import SynthConfig, SynthDataset, generate_benchmark
from .taxonomy import (
    PART_NAMES,
    ClassPartition,
    ClassTable,
    HoiClass,
    load_class_table,
    partition_by_rarity,
)
from .training import TrainConfig, cross_entropy, gradient_check, sample_minibatch, train

__version__ = "0.1.0"

__all__ = [
    "AnnotatorLabelSet",
    "AttentionParams",
    "Box",
    "ClassPartition",
    "ClassScores",
    "ClassTable",
    "Detection",
    "EngineError",
    "EvalReport",
    "GtPair",
    "HeadParams",
    "HoiClass",
    "Instance",
    "PART_NAMES",
    "Params",
    "PartFeature",
    "RuleMatrix",
    "SynthConfig",
    "SynthDataset",
    "TrainConfig",
    "aggregate_annotations",
    "all_ones",
    "apply_rules",
    "average_precision",
    "booleanize",
    "cross_entropy",
    "evaluate",
    "generate_benchmark",
    "gradient_check",
    "init_attention_params",
    "init_head_params",
    "iou",
    "late_fuse",
    "load_class_table",
    "match_detections",
    "partition_by_rarity",
    "predict_attention",
    "rule_row_mean",
    "sample_minibatch",
    "score_all",
    "score_class",
    "train",
    "validate_rules",
]
