"""From-scratch one-stage detector with coordinate-augmented convolutions."""

from .checkpoint import (
    CheckpointMismatch,
    Corrupt,
    DetectorCheckpoint,
    VersionMismatch,
    load_checkpoint,
    save_checkpoint,
)
from .head import Targets, assign_targets, decode_head, nms, yolo_loss
from .infer import infer
from .model import Detector, DetectorConfig
from .ops import (
    ConvLayer,
    ShapeMismatch,
    conv2d_backward,
    conv2d_forward,
    coord_channels,
    inflate_weights,
    leaky_relu,
    leaky_relu_grad,
    resize_bilinear,
    sigmoid,
)
from .optim import Adam, AdamHyper, adam_step
from .train import EmptySplit, TrainConfig, train, write_loss_log

__all__ = [
    "Adam",
    "AdamHyper",
    "CheckpointMismatch",
    "ConvLayer",
    "Corrupt",
    "Detector",
    "DetectorCheckpoint",
    "DetectorConfig",
    "EmptySplit",
    "ShapeMismatch",
    "Targets",
    "TrainConfig",
    "VersionMismatch",
    "adam_step",
    "assign_targets",
    "conv2d_backward",
    "conv2d_forward",
    "coord_channels",
    "decode_head",
    "infer",
    "inflate_weights",
    "leaky_relu",
    "leaky_relu_grad",
    "load_checkpoint",
    "nms",
    "resize_bilinear",
    "save_checkpoint",
    "sigmoid",
    "train",
    "write_loss_log",
    "yolo_loss",
]
