"""Adaptive label smoothing with self-knowledge distillation.

A numpy training library and CLI: per-sample entropy-normalized smoothing
weights, best-checkpoint self-teachers, the combined distillation loss with
analytic gradients, a gradient-rescaling analysis lab, and calibration
metrics, all at desk scale.
"""

from .calibration import (
    CalibrationBin,
    CalibrationReport,
    calibration_report,
    parse_reliability_rows,
    reliability_rows,
)
from .gradlab import (
    FlipCensus,
    GradientReport,
    PropositionReport,
    SamplingExhaustedError,
    flip_region_census,
    gradient_ratio,
    proposition1_validate,
    ratio_consistency_check,
)
from .losses import (
    LossBreakdown,
    PriorDistribution,
    adaptive_skd_loss,
    ce_loss,
    confidence_penalty_loss,
    kd_loss,
    label_smoothing_loss,
    linear_alpha_schedule,
    uniform_prior,
    unigram_prior,
)
from .metrics import mini_bleu
from .probs import adaptive_alpha, entropy, softmax_with_temperature
from .registry import (
    CheckpointRegistry,
    DuplicateEpochError,
    NoTeacherError,
    TeacherHandle,
    evaluate_g,
)
from .trainer import (
    DivergenceError,
    EpochDiagnostics,
    ModelConfig,
    TrainConfig,
    evaluate,
    forward_backward,
    make_task_data,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationBin",
    "CalibrationReport",
    "CheckpointRegistry",
    "DivergenceError",
    "DuplicateEpochError",
    "EpochDiagnostics",
    "FlipCensus",
    "GradientReport",
    "LossBreakdown",
    "ModelConfig",
    "NoTeacherError",
    "PriorDistribution",
    "PropositionReport",
    "SamplingExhaustedError",
    "TeacherHandle",
    "TrainConfig",
    "adaptive_alpha",
    "adaptive_skd_loss",
    "calibration_report",
    "ce_loss",
    "confidence_penalty_loss",
    "entropy",
    "evaluate",
    "evaluate_g",
    "flip_region_census",
    "forward_backward",
    "gradient_ratio",
    "kd_loss",
    "label_smoothing_loss",
    "linear_alpha_schedule",
    "make_task_data",
    "mini_bleu",
    "parse_reliability_rows",
    "proposition1_validate",
    "ratio_consistency_check",
    "reliability_rows",
    "softmax_with_temperature",
    "train",
    "uniform_prior",
    "unigram_prior",
]
