"""Micro neural-network engine: layers, the forecaster, and training."""

from .layers import (
    BatchNorm1d,
    BiLSTM,
    ConvBlock,
    Dense,
    Dropout,
    LSTM,
    MaxPool1d,
    Param,
    PositionAwareAttention,
    conv1d_backward,
    conv1d_forward,
)
from .model import ABLATIONS, Forecaster, ModelConfig
from .train import Adam, TrainResult, history_csv, train, validation_loss

__all__ = [
    "ABLATIONS",
    "Adam",
    "BatchNorm1d",
    "BiLSTM",
    "ConvBlock",
    "Dense",
    "Dropout",
    "Forecaster",
    "LSTM",
    "MaxPool1d",
    "ModelConfig",
    "Param",
    "PositionAwareAttention",
    "TrainResult",
    "conv1d_backward",
    "conv1d_forward",
    "history_csv",
    "train",
    "validation_loss",
]
