"""Single-stage long-tailed classification toolkit."""

from .data import LongTailDataset, generate_balanced, generate_synthetic, load_dataset, partition_head_tail, save_dataset
from .evaluate import EvalReport, ablation_table, compare, evaluate, export_embeddings
from .model import Classifier, CosineHead, LinearHead, MlpExtractor, load_checkpoint, save_checkpoint
from .sampler import EpochPlan, SamplerSchedule, compose_epoch, threshold_schedule
from .trainer import RunRecord, TrainConfig, train

__all__ = [
    "Classifier",
    "CosineHead",
    "EpochPlan",
    "EvalReport",
    "LinearHead",
    "LongTailDataset",
    "MlpExtractor",
    "RunRecord",
    "SamplerSchedule",
    "TrainConfig",
    "ablation_table",
    "compare",
    "compose_epoch",
    "evaluate",
    "export_embeddings",
    "generate_balanced",
    "generate_synthetic",
    "load_checkpoint",
    "load_dataset",
    "partition_head_tail",
    "save_checkpoint",
    "save_dataset",
    "threshold_schedule",
    "train",
]
