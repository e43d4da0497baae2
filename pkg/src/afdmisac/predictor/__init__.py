"""Stage-I path-parameter predictor."""

from .baselines import baseline_predict
from .checkpoint import load_checkpoint, save_checkpoint
from .features import DecodedPaths, Normalizer, decode, encode
from .gru import GruModel, gru_backward, gru_forward
from .inference import kernel_from_paths, predict_kernel, predict_paths
from .loss import LossWeights, composite_loss
from .training import TrainConfig, TrainResult, chrono_split, train

__all__ = [
    "DecodedPaths", "GruModel", "LossWeights", "Normalizer", "TrainConfig", "TrainResult",
    "baseline_predict", "chrono_split", "composite_loss", "decode", "encode", "gru_backward",
    "gru_forward", "kernel_from_paths", "load_checkpoint", "predict_kernel", "predict_paths",
    "save_checkpoint", "train",
]
