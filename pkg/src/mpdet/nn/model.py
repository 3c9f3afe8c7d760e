"""The toy one-stage detector: config, parameter layout, forward/backward.

Five stride-2 backbone blocks (each a 3x3 conv plus leaky ReLU, coordconv
by default) take a 256x256 single-channel profile down to an 8x8 grid; a
1x1 head emits A*(5+classes) channels per cell.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ops import ConvLayer, ShapeMismatch, conv2d_forward, conv2d_backward, leaky_relu, leaky_relu_grad

CHANNELS_PER_BOX = 5  # tx, ty, tw, th, objectness


@dataclass(frozen=True)
class DetectorConfig:
    input_height: int = 256
    input_width: int = 256
    in_channels: int = 1
    backbone_channels: tuple = (8, 16, 32, 64, 64)
    kernel_size: int = 3
    leaky_slope: float = 0.1
    coordconv: bool = True
    anchors: tuple = ((128, 32), (128, 96), (128, 192))  # (width, height) in input px
    num_classes: int = 4

    def __post_init__(self):
        # canonical field forms, so config equality and hashing are stable
        object.__setattr__(self, "backbone_channels", tuple(int(c) for c in self.backbone_channels))
        object.__setattr__(self, "anchors", tuple((float(a), float(b)) for a, b in self.anchors))
        stride = self.total_stride
        if self.input_height % stride or self.input_width % stride:
            raise ValueError(
                f"input {self.input_width}x{self.input_height} not divisible by "
                f"total stride {stride}"
            )
        for aw, ah in self.anchors:
            if aw <= 0 or ah <= 0:
                raise ValueError(f"anchors must be positive, got ({aw}, {ah})")
        if self.num_classes < 1:
            raise ValueError("need at least one class")

    @property
    def total_stride(self) -> int:
        return 2 ** len(self.backbone_channels)

    @property
    def grid_h(self) -> int:
        return self.input_height // self.total_stride

    @property
    def grid_w(self) -> int:
        return self.input_width // self.total_stride

    @property
    def num_anchors(self) -> int:
        return len(self.anchors)

    @property
    def head_channels(self) -> int:
        return self.num_anchors * (CHANNELS_PER_BOX + self.num_classes)

    def to_dict(self) -> dict:
        return {
            "input_height": self.input_height,
            "input_width": self.input_width,
            "in_channels": self.in_channels,
            "backbone_channels": list(self.backbone_channels),
            "kernel_size": self.kernel_size,
            "leaky_slope": self.leaky_slope,
            "coordconv": self.coordconv,
            "anchors": [list(a) for a in self.anchors],
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DetectorConfig":
        return cls(
            input_height=int(obj["input_height"]),
            input_width=int(obj["input_width"]),
            in_channels=int(obj["in_channels"]),
            backbone_channels=tuple(int(c) for c in obj["backbone_channels"]),
            kernel_size=int(obj["kernel_size"]),
            leaky_slope=float(obj["leaky_slope"]),
            coordconv=bool(obj["coordconv"]),
            anchors=tuple((float(a), float(b)) for a, b in obj["anchors"]),
            num_classes=int(obj["num_classes"]),
        )

    def hash(self) -> str:
        digest = hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        )
        return digest.hexdigest()[:16]


def _init_layer(rng, in_ch, out_ch, k, stride, padding, coordconv, dtype):
    fan_in = (in_ch + (2 if coordconv else 0)) * k * k
    bound = math.sqrt(6.0 / fan_in)
    weights = rng.uniform(-bound, bound, size=(out_ch, in_ch + (2 if coordconv else 0), k, k))
    return ConvLayer(
        weights=weights.astype(dtype),
        bias=np.zeros(out_ch, dtype=dtype),
        stride=stride,
        padding=padding,
        coordconv=coordconv,
    )


class Detector:
    """Backbone blocks plus head, with explicit forward/backward passes.

    Init: Kaiming-uniform weights scaled by fan-in, zero biases.
    """

    def __init__(self, config: DetectorConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x1417)))
        k = config.kernel_size
        pad = k // 2
        self.blocks = []
        in_ch = config.in_channels
        for out_ch in config.backbone_channels:
            self.blocks.append(
                _init_layer(rng, in_ch, out_ch, k, 2, pad, config.coordconv, self.dtype)
            )
            in_ch = out_ch
        self.head = _init_layer(rng, in_ch, config.head_channels, 1, 1, 0, False, self.dtype)
        self._cache = None

    # Parameters in declared order: block weights/biases, then the head.
    def parameter_names(self) -> list:
        names = []
        for i in range(len(self.blocks)):
            names += [f"block{i}.weights", f"block{i}.bias"]
        names += ["head.weights", "head.bias"]
        return names

    def parameters(self) -> list:
        params = []
        for layer in self.blocks:
            params += [layer.weights, layer.bias]
        params += [self.head.weights, self.head.bias]
        return params

    def set_parameters(self, arrays: list) -> None:
        expected = self.parameters()
        if len(arrays) != len(expected):
            raise ShapeMismatch(
                f"expected {len(expected)} parameter arrays, got {len(arrays)}"
            )
        for i, layer in enumerate(self.blocks):
            layer.weights = arrays[2 * i].reshape(layer.weights.shape).astype(self.dtype)
            layer.bias = arrays[2 * i + 1].reshape(layer.bias.shape).astype(self.dtype)
        self.head.weights = arrays[-2].reshape(self.head.weights.shape).astype(self.dtype)
        self.head.bias = arrays[-1].reshape(self.head.bias.shape).astype(self.dtype)

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        """Raw head output (B, A*(5+C), grid_h, grid_w)."""
        cache = [] if record else None
        h = np.asarray(x, dtype=self.dtype)
        for layer in self.blocks:
            z = conv2d_forward(h, layer)
            if record:
                cache.append((h, z))
            h = leaky_relu(z, self.config.leaky_slope)
        if record:
            cache.append((h, None))
        out = conv2d_forward(h, self.head)
        if record:
            self._cache = cache
        return out

    def backward(self, grad_out: np.ndarray) -> list:
        """Gradients for every parameter, in parameters() order.

        Requires a preceding forward(..., record=True).
        """
        if self._cache is None:
            raise RuntimeError("call forward(record=True) before backward()")
        slope = self.config.leaky_slope
        head_in, _ = self._cache[-1]
        grad, gw_head, gb_head = conv2d_backward(head_in, self.head, grad_out)
        grads = [gw_head, gb_head]
        for layer, (inp, z) in zip(reversed(self.blocks), reversed(self._cache[:-1])):
            grad = grad * leaky_relu_grad(z, slope)
            grad, gw, gb = conv2d_backward(inp, layer, grad)
            grads += [gw, gb]
        self._cache = None
        ordered = []
        for i in range(len(self.blocks)):
            ordered += [grads[-2 * (i + 1)], grads[-2 * (i + 1) + 1]]
        ordered += [grads[0], grads[1]]
        return ordered
