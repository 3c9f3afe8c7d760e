"""Inference: run a checkpoint on a motion profile of any size."""

import numpy as np

from ..core import DetectionBox
from ..profile import MotionProfile
from .checkpoint import CheckpointMismatch, DetectorCheckpoint
from .head import decode_head, nms
from .model import Detector
from .ops import resize_bilinear


def infer(
    profile: MotionProfile,
    ckpt: DetectorCheckpoint,
    conf_thresh: float = 0.2,
    nms_thresh: float = 0.5,
    detector: Detector | None = None,
) -> list:
    """Detections in profile coordinates.

    The profile is resized bilinearly to the config input, decoded at the
    confidence threshold, suppressed class-wise, then boxes are mapped
    back by the inverse scale and clamped to the profile bounds. Pass a
    prebuilt `detector` to amortize model construction over many calls.
    """
    config = ckpt.config
    dims = profile.dims
    if dims.channels != config.in_channels:
        raise CheckpointMismatch(
            f"profile has {dims.channels} channels, checkpoint expects {config.in_channels}"
        )
    if detector is None:
        detector = ckpt.build_detector()
    elif detector.config != config:
        raise CheckpointMismatch("provided detector was built from a different config")

    x = resize_bilinear(profile.samples, config.input_height, config.input_width)
    x = (x / np.float32(255.0)).astype(np.float32)[None, None, :, :]
    raw = detector.forward(x)[0]
    dets = decode_head(raw, config.anchors, config.total_stride, conf_thresh)
    dets = nms(dets, nms_thresh)

    sx = dims.width / config.input_width
    st = dims.height / config.input_height
    out = []
    for d in dets:
        x_min = min(max(d.x_min * sx, 0.0), dims.width)
        x_max = min(max(d.x_max * sx, 0.0), dims.width)
        t_min = min(max(d.t_min * st, 0.0), dims.height)
        t_max = min(max(d.t_max * st, 0.0), dims.height)
        if x_min >= x_max or t_min >= t_max:
            continue
        out.append(
            DetectionBox(
                label=d.label,
                x_min=x_min,
                t_min=t_min,
                x_max=x_max,
                t_max=t_max,
                score=d.score,
            )
        )
    return out
