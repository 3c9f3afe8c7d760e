"""Training loop: seeded shuffling, Adam updates, best-validation selection."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..synth import load_index, load_sample
from .checkpoint import DetectorCheckpoint
from .head import assign_targets, stack_targets, yolo_loss
from .model import Detector, DetectorConfig
from .ops import resize_bilinear
from .optim import Adam, AdamHyper


class EmptySplit(ValueError):
    """The requested split has no samples."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    max_epochs: int = 20
    batch_size: int = 8
    seed: int = 0
    obj_weight: float = 1.0
    cls_weight: float = 1.0
    box_weight: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def prepare_sample(profile, gt_boxes, config: DetectorConfig):
    """Profile raster and boxes in input coordinates, ready for batching."""
    samples = profile.samples
    if samples.ndim == 3 and config.in_channels == 1:
        raise ValueError("multi-channel profile fed to a single-channel detector")
    h_in, w_in = config.input_height, config.input_width
    t_len, w = samples.shape[:2]
    x = resize_bilinear(samples, h_in, w_in) / np.float32(255.0)
    sx, sy = w_in / w, h_in / t_len
    scaled = []
    for box in gt_boxes:
        scaled.append(
            type(box)(
                label=box.label,
                x_min=box.x_min * sx,
                t_min=box.t_min * sy,
                x_max=box.x_max * sx,
                t_max=box.t_max * sy,
                score=box.score,
            )
        )
    return x[None, None, :, :].astype(np.float32), scaled


def _load_split(index, dataset_dir, split, config):
    inputs, targets = [], []
    for sample_id in index["splits"][split]:
        sample = load_sample(dataset_dir, sample_id)
        x, boxes = prepare_sample(sample.profile, sample.ground_truth, config)
        inputs.append(x)
        targets.append(assign_targets(boxes, config))
    return inputs, targets


def _epoch_batches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def _run_batch(model, inputs, targets, idxs, weights, train=True):
    x = np.concatenate([inputs[i] for i in idxs], axis=0)
    t = stack_targets([targets[i] for i in idxs])
    raw = model.forward(x, record=train)
    loss, grad = yolo_loss(raw, t, weights)
    if not train:
        model._cache = None
        return loss, None
    return loss, model.backward(grad)


def train(index_path, det_config: DetectorConfig, train_config: TrainConfig):
    """Train on a generated dataset's train split.

    Deterministic for a fixed seed. Returns (checkpoint, loss_log) where
    the checkpoint holds the parameters with the best validation loss
    (final parameters when there is no validation split) and loss_log is a
    list of (epoch, split, loss) rows.
    """
    index_path = Path(index_path)
    dataset_dir = index_path.parent
    index = load_index(index_path)
    if not index["splits"]["train"]:
        raise EmptySplit("train split is empty")

    train_x, train_t = _load_split(index, dataset_dir, "train", det_config)
    val_x, val_t = _load_split(index, dataset_dir, "val", det_config)

    seed_seq = np.random.SeedSequence(train_config.seed)
    init_seed, shuffle_seed = (int(s.generate_state(1)[0]) for s in seed_seq.spawn(2))
    model = Detector(det_config, seed=init_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    params = model.parameters()
    decay_mask = [name.endswith(".weights") for name in model.parameter_names()]
    hyper = AdamHyper(lr=train_config.learning_rate, weight_decay=train_config.weight_decay)
    opt = Adam(params, hyper, decay_mask)
    weights = (train_config.obj_weight, train_config.cls_weight, train_config.box_weight)

    loss_log = []
    best_val = None
    best_params = None
    for epoch in range(1, train_config.max_epochs + 1):
        order = np.arange(len(train_x))
        shuffle_rng.shuffle(order)
        total, seen = 0.0, 0
        for idxs in _epoch_batches(order.tolist(), train_config.batch_size):
            loss, grads = _run_batch(model, train_x, train_t, idxs, weights, train=True)
            new_params = opt.step(model.parameters(), grads)
            model.set_parameters(new_params)
            total += loss * len(idxs)
            seen += len(idxs)
        train_loss = total / seen
        loss_log.append((epoch, "train", train_loss))
        if val_x:
            total, seen = 0.0, 0
            for idxs in _epoch_batches(list(range(len(val_x))), train_config.batch_size):
                loss, _ = _run_batch(model, val_x, val_t, idxs, weights, train=False)
                total += loss * len(idxs)
                seen += len(idxs)
            val_loss = total / seen
            loss_log.append((epoch, "val", val_loss))
            if best_val is None or val_loss < best_val:
                best_val = val_loss
                best_params = [np.array(p, dtype=np.float32) for p in model.parameters()]

    if best_params is not None:
        model.set_parameters(best_params)
    ckpt = DetectorCheckpoint.from_detector(model, seed=train_config.seed)
    return ckpt, loss_log


def write_loss_log(rows, path) -> None:
    """Loss log CSV: epoch, split, loss."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "loss"])
        for epoch, split, loss in rows:
            writer.writerow([epoch, split, f"{loss:.9g}"])
