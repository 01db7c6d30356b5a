"""Continual sentiment classification with per-task random retention masks."""

from .masking import (
    MaskRegistry,
    TaskMask,
    TransferStats,
    apply_mask,
    dropout_mask,
    empirical_skip_stats,
    mask_overlap,
    skip_transfer_probability,
)
from .model import ModelConfig, SentimentModel, Variant, load_checkpoint, save_checkpoint
from .numerics import Tape, Tensor, backward, cross_entropy_logits, finite_difference_check
from .taskgen import FamilyConfig, PRESETS, TaskFamily, build_tasks, generate_task_family
from .trainer import (
    AccuracyMatrix,
    TaskStream,
    TrainConfig,
    averaged_accuracy,
    forgetting_ratio,
    mta_matrix,
    run_joint,
    run_sequential,
    select_tasks_by_mta,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix",
    "FamilyConfig",
    "MaskRegistry",
    "ModelConfig",
    "PRESETS",
    "SentimentModel",
    "Tape",
    "TaskFamily",
    "TaskMask",
    "TaskStream",
    "Tensor",
    "TrainConfig",
    "TransferStats",
    "Variant",
    "apply_mask",
    "averaged_accuracy",
    "backward",
    "build_tasks",
    "cross_entropy_logits",
    "dropout_mask",
    "empirical_skip_stats",
    "finite_difference_check",
    "forgetting_ratio",
    "generate_task_family",
    "load_checkpoint",
    "mask_overlap",
    "mta_matrix",
    "run_joint",
    "run_sequential",
    "save_checkpoint",
    "select_tasks_by_mta",
    "skip_transfer_probability",
]
