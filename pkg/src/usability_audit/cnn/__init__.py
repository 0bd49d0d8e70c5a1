"""From-scratch convolutional classifier for homepage screenshots."""

from .gradcheck import gradient_check
from .layers import conv2d_backward, conv2d_forward, maxpool_backward, maxpool_forward
from .losses import FocalLossParams, focal_loss, softmax
from .model import CnnConfig, CnnModel, predict_cnn
from .optim import AdamConfig, AdamState, adam_step
from .train import TrainConfig, TrainResult, evaluate_split, load_split, train, train_on_arrays

__all__ = [
    "AdamConfig", "AdamState", "CnnConfig", "CnnModel", "FocalLossParams", "TrainConfig",
    "TrainResult", "adam_step", "conv2d_backward", "conv2d_forward", "evaluate_split",
    "focal_loss", "gradient_check", "load_split", "maxpool_backward", "maxpool_forward",
    "predict_cnn", "softmax", "train", "train_on_arrays",
]
