"""Tensor primitives for the detector: convolution, activations, resizing.

Everything operates on plain numpy arrays in NCHW layout and preserves the
input dtype, so the same code paths run in float32 for training and
float64 for gradient checking.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatch(ValueError):
    """Operand shapes inconsistent with the layer or each other."""


@dataclass
class ConvLayer:
    """Cross-correlation layer. With coordconv set, the input is augmented
    with two channels holding each pixel's normalized (x, y) position, and
    weights include the two extra input channels."""

    weights: np.ndarray  # (out_ch, in_ch, k, k)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1
    padding: int = 0
    coordconv: bool = False

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        """Data channels expected from the caller (coord channels excluded)."""
        n = self.weights.shape[1]
        return n - 2 if self.coordconv else n

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


def coord_channels(h: int, w: int, dtype=np.float64) -> np.ndarray:
    """(2, h, w) tensor: channel 0 is x in [0, 1], channel 1 is y in [0, 1]."""
    if h < 1 or w < 1:
        raise ShapeMismatch(f"coordinate grid needs h, w >= 1, got {h}x{w}")
    x = np.arange(w, dtype=dtype) / max(w - 1, 1)
    y = np.arange(h, dtype=dtype) / max(h - 1, 1)
    out = np.empty((2, h, w), dtype=dtype)
    out[0] = x[None, :]
    out[1] = y[:, None]
    return out


def _augment(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    if not layer.coordconv:
        return x
    b, _, h, w = x.shape
    coords = np.broadcast_to(coord_channels(h, w, x.dtype), (b, 2, h, w))
    return np.concatenate([x, coords], axis=1)


def _check_conv_input(x: np.ndarray, layer: ConvLayer):
    if x.ndim != 4:
        raise ShapeMismatch(f"expected NCHW input, got shape {x.shape}")
    if x.shape[1] != layer.in_channels:
        raise ShapeMismatch(
            f"input has {x.shape[1]} channels, layer expects {layer.in_channels}"
        )


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Strided cross-correlation with zero padding; NCHW in, NCHW out."""
    _check_conv_input(x, layer)
    x = _augment(x, layer)
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    if p > 0:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    h, w = x.shape[2], x.shape[3]
    if h < k or w < k:
        raise ShapeMismatch(f"padded input {h}x{w} smaller than kernel {k}")
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    out = np.tensordot(win, layer.weights, axes=([1, 4, 5], [1, 2, 3]))
    out = np.transpose(out, (0, 3, 1, 2)).copy()
    out += layer.bias.astype(out.dtype)[None, :, None, None]
    return out


def conv2d_backward(x: np.ndarray, layer: ConvLayer, grad_out: np.ndarray):
    """Exact gradients of conv2d_forward.

    Returns (grad_x, grad_w, grad_b); grad_x covers only the caller's data
    channels (coordinate channels are constants).
    """
    _check_conv_input(x, layer)
    data_channels = x.shape[1]
    x = _augment(x, layer)
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p > 0 else x
    b, c, hp, wp = xp.shape
    ho, wo = grad_out.shape[2], grad_out.shape[3]
    expected_ho = (hp - k) // s + 1
    expected_wo = (wp - k) // s + 1
    if grad_out.shape != (b, layer.out_channels, expected_ho, expected_wo):
        raise ShapeMismatch(
            f"grad shape {grad_out.shape} does not match forward output "
            f"{(b, layer.out_channels, expected_ho, expected_wo)}"
        )
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_w = np.zeros_like(layer.weights)
    grad_xp = np.zeros_like(xp)
    w = layer.weights
    for u in range(k):
        for v in range(k):
            xs = xp[:, :, u : u + s * ho : s, v : v + s * wo : s]
            grad_w[:, :, u, v] = np.tensordot(grad_out, xs, axes=([0, 2, 3], [0, 2, 3]))
            contrib = np.tensordot(grad_out, w[:, :, u, v], axes=([1], [0]))
            grad_xp[:, :, u : u + s * ho : s, v : v + s * wo : s] += np.transpose(
                contrib, (0, 3, 1, 2)
            )
    grad_x = grad_xp[:, :, p : hp - p, p : wp - p] if p > 0 else grad_xp
    return grad_x[:, :data_channels].copy(), grad_w, grad_b


def leaky_relu(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    return np.maximum(x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    """Local derivative: 1 where x > 0, slope elsewhere (slope at x = 0)."""
    return np.where(x > 0, np.asarray(1.0, dtype=x.dtype), np.asarray(slope, dtype=x.dtype))


def inflate_weights(layer: ConvLayer) -> ConvLayer:
    """Convert a plain conv layer into a coordconv one.

    The two new input-channel kernel slices are initialized, per output
    filter and kernel position, with the mean over the original input
    channels; accumulation is sequential so the result is reproducible
    element for element.
    """
    if layer.coordconv:
        raise ValueError("layer already has coordinate channels")
    w = layer.weights
    acc = np.zeros_like(w[:, 0])
    for c in range(w.shape[1]):
        acc = acc + w[:, c]
    mean = acc / w.shape[1]
    new_w = np.concatenate([w, mean[:, None], mean[:, None]], axis=1)
    return ConvLayer(
        weights=new_w,
        bias=layer.bias.copy(),
        stride=layer.stride,
        padding=layer.padding,
        coordconv=True,
    )


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(np.asarray(x, dtype=np.result_type(x, np.float32)))
    x = np.asarray(x, dtype=out.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise binary cross-entropy on logits, stable for large |z|."""
    return np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of (H, W) or (H, W, C) arrays; returns float32.

    Uses the half-pixel-center mapping, so a same-size resize is identity.
    """
    img = np.asarray(img)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w, c = img.shape
    src = img.astype(np.float32)

    def axis_coords(n_out, n_in):
        scale = n_in / n_out
        coords = (np.arange(n_out, dtype=np.float32) + 0.5) * scale - 0.5
        coords = np.clip(coords, 0, n_in - 1)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (coords - lo).astype(np.float32)
        return lo, hi, frac

    ylo, yhi, yfrac = axis_coords(out_h, h)
    xlo, xhi, xfrac = axis_coords(out_w, w)
    top = src[ylo][:, xlo] * (1 - xfrac)[None, :, None] + src[ylo][:, xhi] * xfrac[None, :, None]
    bot = src[yhi][:, xlo] * (1 - xfrac)[None, :, None] + src[yhi][:, xhi] * xfrac[None, :, None]
    out = top * (1 - yfrac)[:, None, None] + bot * yfrac[:, None, None]
    return out[:, :, 0] if squeeze else out
