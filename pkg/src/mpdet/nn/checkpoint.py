"""Detector checkpoints: a compact JSON header line plus raw float32 data.

Layout: one line of JSON (format tag, version, seed, config echo, config
hash, parameter count and shapes), a newline, then every parameter array
flattened to little-endian float32 in declared layer order. Loading is a
bit-exact inverse of saving.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Detector, DetectorConfig

FORMAT_TAG = "mpdet-checkpoint"
FORMAT_VERSION = 1


class Corrupt(ValueError):
    """Checkpoint bytes are truncated or internally inconsistent."""


class VersionMismatch(ValueError):
    """Unknown format version or config/hash disagreement."""


class CheckpointMismatch(ValueError):
    """Checkpoint incompatible with the data it is applied to."""


@dataclass
class DetectorCheckpoint:
    config: DetectorConfig
    seed: int
    params: list  # float32 arrays in declared layer order
    version: int = FORMAT_VERSION

    @classmethod
    def from_detector(cls, detector: Detector, seed: int) -> "DetectorCheckpoint":
        return cls(
            config=detector.config,
            seed=seed,
            params=[np.array(p, dtype=np.float32) for p in detector.parameters()],
        )

    def build_detector(self) -> Detector:
        det = Detector(self.config, seed=self.seed)
        det.set_parameters(self.params)
        return det


def save_checkpoint(ckpt: DetectorCheckpoint, path) -> Path:
    path = Path(path)
    header = {
        "format": FORMAT_TAG,
        "version": ckpt.version,
        "seed": ckpt.seed,
        "config": ckpt.config.to_dict(),
        "config_hash": ckpt.config.hash(),
        "param_count": int(sum(p.size for p in ckpt.params)),
        "param_shapes": [list(p.shape) for p in ckpt.params],
    }
    blob = np.concatenate([np.asarray(p, dtype="<f4").ravel() for p in ckpt.params])
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob.tobytes())
    return path


def load_checkpoint(path) -> DetectorCheckpoint:
    path = Path(path)
    data = path.read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise Corrupt(f"{path}: missing header line")
    try:
        header = json.loads(data[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise Corrupt(f"{path}: unreadable header: {exc}") from None
    if header.get("format") != FORMAT_TAG:
        raise Corrupt(f"{path}: not a detector checkpoint")
    if header.get("version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {header.get('version')}, expected {FORMAT_VERSION}"
        )
    try:
        config = DetectorConfig.from_dict(header["config"])
        shapes = [tuple(int(d) for d in s) for s in header["param_shapes"]]
        param_count = int(header["param_count"])
        seed = int(header["seed"])
        stored_hash = str(header["config_hash"])
    except (KeyError, TypeError, ValueError) as exc:
        raise Corrupt(f"{path}: bad header field: {exc}") from None
    if config.hash() != stored_hash:
        raise VersionMismatch(
            f"{path}: config hash {stored_hash} does not match stored config"
        )
    if sum(int(np.prod(s)) for s in shapes) != param_count:
        raise Corrupt(f"{path}: parameter shapes disagree with param_count")
    blob = data[newline + 1 :]
    if len(blob) != 4 * param_count:
        raise Corrupt(
            f"{path}: expected {4 * param_count} bytes of parameters, got {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype="<f4")
    params = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape))
        params.append(flat[offset : offset + size].reshape(shape).copy())
        offset += size
    ckpt = DetectorCheckpoint(config=config, seed=seed, params=params)
    _check_param_layout(ckpt)
    return ckpt


def _check_param_layout(ckpt: DetectorCheckpoint) -> None:
    expected = Detector(ckpt.config, seed=0).parameters()
    if len(expected) != len(ckpt.params):
        raise Corrupt("parameter list length does not match the config's layer layout")
    for have, want in zip(ckpt.params, expected):
        if have.shape != want.shape:
            raise Corrupt(
                f"parameter shape {have.shape} does not match config layout {want.shape}"
            )
