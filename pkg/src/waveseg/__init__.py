"""Wavelet-guided bidirectional copy-paste semi-supervised segmentation."""

from . import backend
from .data import Dataset, Sample, Volume, generate_synthetic, load_dataset, split_labeled
from .losses import LossWeights, bcp_loss, consistency_loss, seg_loss, total_loss
from .metrics import asd, dice, hd95, jaccard
from .mixing import MixMask, generate_mask, mix, mix_labels, mix_pair
from .model import ModelConfig, TriBranchNet, build, parameter_count
from .trainer import (
    Checkpoint,
    TrainConfig,
    ema_update,
    evaluate,
    load_checkpoint,
    predict,
    pretrain,
    save_checkpoint,
    train_ssl,
)
from .wavelet import FrequencyTriple, Subbands, dwt, frequency_triple, idwt

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "Dataset",
    "FrequencyTriple",
    "LossWeights",
    "MixMask",
    "ModelConfig",
    "Sample",
    "Subbands",
    "TrainConfig",
    "TriBranchNet",
    "Volume",
    "asd",
    "backend",
    "bcp_loss",
    "build",
    "consistency_loss",
    "dice",
    "dwt",
    "ema_update",
    "evaluate",
    "frequency_triple",
    "generate_mask",
    "generate_synthetic",
    "hd95",
    "idwt",
    "jaccard",
    "load_checkpoint",
    "load_dataset",
    "mix",
    "mix_labels",
    "mix_pair",
    "parameter_count",
    "predict",
    "pretrain",
    "save_checkpoint",
    "seg_loss",
    "split_labeled",
    "total_loss",
    "train_ssl",
]
