"""Video ingestion: manifests and sequential frame sources.

Two source kinds are supported, both codec-free: a directory of numbered
raster images, or a raw planar 8-bit grayscale blob whose geometry is
declared by the manifest. Frames are always yielded in index order.
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import ManeuverClass, ManeuverEvent, VanishingPoint


class InvalidManifest(ValueError):
    """Manifest fields that are missing, inconsistent, or out of range."""


class MissingFile(FileNotFoundError):
    """A file referenced by the manifest does not exist."""


class SizeMismatch(ValueError):
    """Source size inconsistent with width x height x num_frames."""


class DimensionMismatch(ValueError):
    """A decoded frame does not match the manifest's declared geometry."""


FRAMES_DIR = "frames_dir"
RAW_FILE = "raw_file"

# BT.601 luma weights; the conventional 8-bit choice, fixed for reproducibility.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class VideoManifest:
    """Per-video metadata: frame source, geometry, vanishing point, labels."""

    id: str
    source_kind: str
    source_path: Path
    width: int
    height: int
    fps: float
    num_frames: int
    vanishing_point: VanishingPoint
    events: tuple = field(default_factory=tuple)

    def validate(self) -> None:
        if self.source_kind not in (FRAMES_DIR, RAW_FILE):
            raise InvalidManifest(f"unknown source kind {self.source_kind!r}")
        if self.width < 1 or self.height < 1:
            raise InvalidManifest(f"bad frame size {self.width}x{self.height}")
        if self.num_frames < 1:
            raise InvalidManifest(f"num_frames must be >= 1, got {self.num_frames}")
        if self.fps <= 0:
            raise InvalidManifest(f"fps must be positive, got {self.fps}")
        vp = self.vanishing_point
        if not (0 <= vp.x < self.width and 0 <= vp.y < self.height):
            raise InvalidManifest(
                f"vanishing point ({vp.x}, {vp.y}) outside frame {self.width}x{self.height}"
            )
        for ev in self.events:
            if ev.t_end > self.num_frames:
                raise InvalidManifest(
                    f"event [{ev.t_start}, {ev.t_end}) exceeds num_frames={self.num_frames}"
                )


@dataclass(frozen=True)
class Frame:
    """One decoded frame: (H, W) or (H, W, 3) uint8 pixels plus its index."""

    index: int
    pixels: np.ndarray

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]


def load_manifest(path) -> VideoManifest:
    """Load and validate a manifest JSON file; paths resolve relative to it."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidManifest(f"{path}: invalid JSON: {exc}") from None
    try:
        source = obj["source"]
        vp = obj["vanishing_point"]
        events = tuple(
            ManeuverEvent(
                ManeuverClass.from_short_name(ev["class"]),
                int(ev["t_start"]),
                int(ev["t_end"]),
            )
            for ev in obj.get("events", [])
        )
        manifest = VideoManifest(
            id=str(obj["id"]),
            source_kind=str(source["kind"]),
            source_path=(path.parent / source["path"]).resolve(),
            width=int(obj["width"]),
            height=int(obj["height"]),
            fps=float(obj["fps"]),
            num_frames=int(obj["num_frames"]),
            vanishing_point=VanishingPoint(float(vp["x"]), float(vp["y"])),
            events=events,
        )
    except (KeyError, TypeError) as exc:
        raise InvalidManifest(f"{path}: missing or malformed field: {exc}") from None
    manifest.validate()
    return manifest


def save_manifest(manifest: VideoManifest, path) -> None:
    path = Path(path)
    try:
        rel = manifest.source_path.relative_to(path.parent.resolve())
    except ValueError:
        rel = manifest.source_path
    obj = {
        "id": manifest.id,
        "source": {"kind": manifest.source_kind, "path": str(rel)},
        "width": manifest.width,
        "height": manifest.height,
        "fps": manifest.fps,
        "num_frames": manifest.num_frames,
        "vanishing_point": {"x": manifest.vanishing_point.x, "y": manifest.vanishing_point.y},
        "events": [
            {"class": ev.label.short_name, "t_start": ev.t_start, "t_end": ev.t_end}
            for ev in manifest.events
        ],
    }
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class FrameSource:
    """Sequential, re-iterable reader yielding exactly num_frames frames."""

    def __init__(self, manifest: VideoManifest):
        self.manifest = manifest

    def __len__(self) -> int:
        return self.manifest.num_frames

    def __iter__(self):
        raise NotImplementedError


class RawFileSource(FrameSource):
    """Raw planar 8-bit grayscale blob: row-major, frame-major, unpadded."""

    def __iter__(self):
        m = self.manifest
        frame_bytes = m.width * m.height
        with m.source_path.open("rb") as fh:
            for i in range(m.num_frames):
                buf = fh.read(frame_bytes)
                if len(buf) != frame_bytes:
                    raise SizeMismatch(
                        f"{m.source_path}: truncated at frame {i}: "
                        f"got {len(buf)} of {frame_bytes} bytes"
                    )
                pixels = np.frombuffer(buf, dtype=np.uint8).reshape(m.height, m.width)
                yield Frame(index=i, pixels=pixels)


class ImageDirSource(FrameSource):
    """Directory of numbered grayscale or RGB images, one per frame."""

    def __init__(self, manifest: VideoManifest, paths: list):
        super().__init__(manifest)
        self.paths = paths

    def __iter__(self):
        m = self.manifest
        for i, p in enumerate(self.paths):
            try:
                with Image.open(p) as img:
                    if img.mode not in ("L", "RGB"):
                        raise DimensionMismatch(
                            f"{p}: unsupported image mode {img.mode!r} (want L or RGB)"
                        )
                    pixels = np.asarray(img, dtype=np.uint8)
            except UnidentifiedImageError as exc:
                raise DimensionMismatch(f"{p}: unreadable image: {exc}") from None
            if pixels.shape[:2] != (m.height, m.width):
                raise DimensionMismatch(
                    f"{p}: frame is {pixels.shape[1]}x{pixels.shape[0]}, "
                    f"manifest declares {m.width}x{m.height}"
                )
            yield Frame(index=i, pixels=pixels)


_IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".bmp", ".tif", ".tiff"}


def _numeric_stem(path: Path):
    m = re.search(r"(\d+)$", path.stem)
    if m is None:
        raise InvalidManifest(f"frame file {path.name!r} has no trailing frame number")
    return int(m.group(1))


def open_source(manifest: VideoManifest) -> FrameSource:
    """Open the manifest's frame source, checking existence and size up front."""
    manifest.validate()
    src = manifest.source_path
    if manifest.source_kind == RAW_FILE:
        if not src.is_file():
            raise MissingFile(f"raw file not found: {src}")
        expected = manifest.width * manifest.height * manifest.num_frames
        actual = src.stat().st_size
        if actual != expected:
            raise SizeMismatch(
                f"{src}: raw blob is {actual} bytes, expected {expected} "
                f"({manifest.width}x{manifest.height}x{manifest.num_frames})"
            )
        return RawFileSource(manifest)
    if not src.is_dir():
        raise MissingFile(f"frames directory not found: {src}")
    paths = sorted(
        (p for p in src.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES),
        key=_numeric_stem,
    )
    if len(paths) != manifest.num_frames:
        raise SizeMismatch(
            f"{src}: found {len(paths)} frame images, manifest declares {manifest.num_frames}"
        )
    return ImageDirSource(manifest, paths)


def to_luma(frame: Frame) -> Frame:
    """Collapse an RGB frame to 8-bit luminance (BT.601, rounded half up)."""
    if frame.channels != 3:
        raise DimensionMismatch(f"to_luma expects a 3-channel frame, got {frame.channels}")
    rgb = frame.pixels.astype(np.float64)
    luma = rgb[..., 0] * _LUMA_WEIGHTS[0] + rgb[..., 1] * _LUMA_WEIGHTS[1] + rgb[..., 2] * _LUMA_WEIGHTS[2]
    return Frame(index=frame.index, pixels=np.floor(luma + 0.5).astype(np.uint8))
