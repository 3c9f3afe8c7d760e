"""Detection head: box decoding, NMS, target assignment, and the loss.

Per grid cell and anchor the raw channels are (tx, ty, tw, th, obj,
class logits...). Centers decode as (cell + sigmoid(t)) * stride, sizes as
anchor * exp(t), and a detection's score is sigmoid(obj) * sigmoid(cls).
assign_targets inverts this encoding, so encode-then-decode reproduces a
box to sub-pixel accuracy.
"""

from dataclasses import dataclass

import numpy as np

from ..core import DetectionBox, ManeuverClass
from .ops import ShapeMismatch, bce_with_logits, sigmoid
from .model import CHANNELS_PER_BOX, DetectorConfig

# Keeps encoded center offsets finite while staying well under half a
# pixel of decode error at any realistic stride.
_FRAC_EPS = 0.01
_EXP_CLAMP = 20.0


def _split_raw(raw: np.ndarray, num_anchors: int):
    if raw.ndim != 3:
        raise ShapeMismatch(f"expected (channels, gh, gw) raw output, got {raw.shape}")
    ch, gh, gw = raw.shape
    if ch % num_anchors:
        raise ShapeMismatch(f"{ch} channels not divisible by {num_anchors} anchors")
    per = ch // num_anchors
    if per <= CHANNELS_PER_BOX:
        raise ShapeMismatch(f"{per} channels per anchor leaves no class logits")
    return raw.reshape(num_anchors, per, gh, gw), per - CHANNELS_PER_BOX


def decode_head(raw: np.ndarray, anchors, stride: int, conf_thresh: float = 0.2) -> list:
    """Decode raw head output into scored corner-form boxes.

    Emits one candidate per (cell, anchor, class) whose score clears
    conf_thresh, clamped to the input window.
    """
    grid, num_classes = _split_raw(raw, len(anchors))
    _, _, gh, gw = grid.shape
    win_w, win_h = gw * stride, gh * stride
    dets = []
    for a, (anchor_w, anchor_h) in enumerate(anchors):
        tx, ty, tw, th, tobj = grid[a, :CHANNELS_PER_BOX]
        obj = sigmoid(tobj)
        cls = sigmoid(grid[a, CHANNELS_PER_BOX:])
        cx = (np.arange(gw)[None, :] + sigmoid(tx)) * stride
        cy = (np.arange(gh)[:, None] + sigmoid(ty)) * stride
        bw = anchor_w * np.exp(np.clip(tw, -_EXP_CLAMP, _EXP_CLAMP))
        bh = anchor_h * np.exp(np.clip(th, -_EXP_CLAMP, _EXP_CLAMP))
        for c in range(num_classes):
            score = obj * cls[c]
            for i, j in zip(*np.nonzero(score > conf_thresh)):
                x_min = max(0.0, float(cx[i, j] - bw[i, j] / 2))
                x_max = min(float(win_w), float(cx[i, j] + bw[i, j] / 2))
                t_min = max(0.0, float(cy[i, j] - bh[i, j] / 2))
                t_max = min(float(win_h), float(cy[i, j] + bh[i, j] / 2))
                if x_min >= x_max or t_min >= t_max:
                    continue
                dets.append(
                    DetectionBox(
                        label=ManeuverClass(c),
                        x_min=x_min,
                        t_min=t_min,
                        x_max=x_max,
                        t_max=t_max,
                        score=float(score[i, j]),
                    )
                )
    return dets


def nms(dets: list, iou_thresh: float = 0.5) -> list:
    """Class-wise greedy suppression, stable by descending score."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    coords = np.array([[d.x_min, d.t_min, d.x_max, d.t_max] for d in dets], dtype=np.float64)
    labels = np.array([int(d.label) for d in dets])
    alive = np.ones(len(dets), dtype=bool)
    kept = []
    for idx in order:
        if not alive[idx]:
            continue
        kept.append(dets[idx])
        alive[idx] = False
        rivals = alive & (labels == labels[idx])
        if not rivals.any():
            continue
        boxes = coords[rivals]
        ix = np.minimum(boxes[:, 2], coords[idx, 2]) - np.maximum(boxes[:, 0], coords[idx, 0])
        it = np.minimum(boxes[:, 3], coords[idx, 3]) - np.maximum(boxes[:, 1], coords[idx, 1])
        inter = np.maximum(ix, 0) * np.maximum(it, 0)
        area = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
        area_idx = (coords[idx, 2] - coords[idx, 0]) * (coords[idx, 3] - coords[idx, 1])
        overlap = inter / (area + area_idx - inter)
        drop = np.zeros(len(dets), dtype=bool)
        drop[np.nonzero(rivals)[0][overlap > iou_thresh]] = True
        alive &= ~drop
    return kept


@dataclass
class Targets:
    """Dense training targets for one sample."""

    obj: np.ndarray  # (A, gh, gw)
    cls: np.ndarray  # (A, C, gh, gw)
    box: np.ndarray  # (A, 4, gh, gw): tx, ty, tw, th
    pos: np.ndarray  # (A, gh, gw) bool


def _shape_iou(w, h, anchor_w, anchor_h) -> float:
    inter = min(w, anchor_w) * min(h, anchor_h)
    return inter / (w * h + anchor_w * anchor_h - inter)


def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


def assign_targets(gt_boxes: list, config: DetectorConfig) -> Targets:
    """Place each ground-truth box at the cell containing its center, on the
    anchor with the highest shape IoU; later boxes win slot conflicts."""
    a, c = config.num_anchors, config.num_classes
    gh, gw, stride = config.grid_h, config.grid_w, config.total_stride
    t = Targets(
        obj=np.zeros((a, gh, gw), dtype=np.float32),
        cls=np.zeros((a, c, gh, gw), dtype=np.float32),
        box=np.zeros((a, 4, gh, gw), dtype=np.float32),
        pos=np.zeros((a, gh, gw), dtype=bool),
    )
    for box in gt_boxes:
        cx = (box.x_min + box.x_max) / 2
        cy = (box.t_min + box.t_max) / 2
        bw = box.x_max - box.x_min
        bh = box.t_max - box.t_min
        col = min(int(cx // stride), gw - 1)
        row = min(int(cy // stride), gh - 1)
        best = max(
            range(a), key=lambda i: (_shape_iou(bw, bh, *config.anchors[i]), -i)
        )
        anchor_w, anchor_h = config.anchors[best]
        fx = np.clip(cx / stride - col, _FRAC_EPS, 1 - _FRAC_EPS)
        fy = np.clip(cy / stride - row, _FRAC_EPS, 1 - _FRAC_EPS)
        t.obj[best, row, col] = 1.0
        t.cls[best, :, row, col] = 0.0
        t.cls[best, int(box.label), row, col] = 1.0
        t.box[best, :, row, col] = (
            _logit(float(fx)),
            _logit(float(fy)),
            float(np.log(bw / anchor_w)),
            float(np.log(bh / anchor_h)),
        )
        t.pos[best, row, col] = True
    return t


def stack_targets(targets: list) -> Targets:
    return Targets(
        obj=np.stack([t.obj for t in targets]),
        cls=np.stack([t.cls for t in targets]),
        box=np.stack([t.box for t in targets]),
        pos=np.stack([t.pos for t in targets]),
    )


def yolo_loss(pred_raw: np.ndarray, targets: Targets, weights=(1.0, 1.0, 1.0)):
    """Loss over a batch and its gradient with respect to the raw output.

    Composition: BCE on objectness over every slot, BCE on class logits
    and MSE on the four box offsets over positive slots, averaged over the
    batch. Returns (loss, grad) with grad shaped like pred_raw.
    """
    if pred_raw.ndim != 4:
        raise ShapeMismatch(f"expected (B, channels, gh, gw) predictions, got {pred_raw.shape}")
    b, ch, gh, gw = pred_raw.shape
    if targets.obj.ndim == 3:
        targets = stack_targets([targets])
    a = targets.obj.shape[1]
    if targets.obj.shape[0] != b or ch % a:
        raise ShapeMismatch(
            f"predictions {pred_raw.shape} do not match targets with "
            f"batch {targets.obj.shape[0]} and {a} anchors"
        )
    per = ch // a
    grid = pred_raw.reshape(b, a, per, gh, gw)
    w_obj, w_cls, w_box = weights

    box_pred = grid[:, :, :4]
    obj_logit = grid[:, :, 4]
    cls_logit = grid[:, :, 5:]
    pos = targets.pos
    pos_f = pos.astype(pred_raw.dtype)
    n = float(b)

    loss_obj = bce_with_logits(obj_logit, targets.obj).sum()
    loss_cls = (bce_with_logits(cls_logit, targets.cls) * pos_f[:, :, None]).sum()
    box_err = (box_pred - targets.box) * pos_f[:, :, None]
    loss_box = (box_err**2).sum() / 4.0
    loss = (w_obj * loss_obj + w_cls * loss_cls + w_box * loss_box) / n

    grad = np.zeros_like(grid)
    grad[:, :, 4] = w_obj * (sigmoid(obj_logit) - targets.obj) / n
    grad[:, :, 5:] = w_cls * (sigmoid(cls_logit) - targets.cls) * pos_f[:, :, None] / n
    grad[:, :, :4] = w_box * box_err / (2.0 * n)
    return float(loss), grad.reshape(b, ch, gh, gw)
