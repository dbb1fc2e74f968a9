"""Selective classification with a selection head synchronised to softmax confidence."""

from .data import Dataset, SplitSpec, gen_ambiguity, gen_blobs, load_csv, save_csv, split
from .errors import ConfigError, ConvergenceError, DataError, NonFiniteLossError, SyncselError
from .evaluate import calibrate_threshold, collect, confusion_table, rc_curve, selective_metrics
from .losses import SyncConfig
from .network import SelectiveModel, backward, forward, init_model, load_checkpoint, save_checkpoint
from .scores import NEG_ENTROPY, SR, ScoreKind, neg_entropy_score, score, smp_score, sr_score
from .train import EpochRecord, TrainConfig, cosine_lr, sgd_step, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SplitSpec", "gen_ambiguity", "gen_blobs", "load_csv", "save_csv", "split",
    "ConfigError", "ConvergenceError", "DataError", "NonFiniteLossError", "SyncselError",
    "calibrate_threshold", "collect", "confusion_table", "rc_curve", "selective_metrics",
    "SyncConfig", "SelectiveModel", "backward", "forward", "init_model", "load_checkpoint", "save_checkpoint",
    "NEG_ENTROPY", "SR", "ScoreKind", "neg_entropy_score", "score", "smp_score", "sr_score",
    "EpochRecord", "TrainConfig", "cosine_lr", "sgd_step", "train",
]
