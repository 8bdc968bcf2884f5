"""Small NCHW neural-network engine with hand-written backward passes."""

from .functional import cross_entropy, softmax
from .layers import (
    GRU,
    AdaptiveAvgPool2d,
    BatchNorm2d,
    DepthwiseConv2d,
    Linear,
    Module,
    Parameter,
    PointwiseConv2d,
    ReLU,
    Sequential,
    separable_block,
)
from .optim import Adam, adam_step
from .train import EarlyStopping, History, TrainConfig, accuracy, predict_logits, train

__all__ = [
    "GRU",
    "Adam",
    "AdaptiveAvgPool2d",
    "BatchNorm2d",
    "DepthwiseConv2d",
    "EarlyStopping",
    "History",
    "Linear",
    "Module",
    "Parameter",
    "PointwiseConv2d",
    "ReLU",
    "Sequential",
    "TrainConfig",
    "accuracy",
    "adam_step",
    "cross_entropy",
    "predict_logits",
    "separable_block",
    "softmax",
    "train",
]
