"""Motion-profile construction.

A profile is built by taking, for every frame, a horizontal belt of pixels
below the horizon, vertically averaging it into a single strip, and
stacking the strips in frame order. The result compresses a T x W x H
video into a T x W raster while preserving lateral motion patterns.

Strip means are computed in integer arithmetic and rounded half up, so a
profile is bit-reproducible across platforms.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import ProfileDims
from .ingest import VideoManifest, open_source, to_luma

# Belt offset ranges in pixels below the horizon line. The medium belt is
# the default: it is enough to identify most maneuvers of interest.
BELT_FAR = (0, 35)
BELT_MEDIUM = (35, 100)
BELT_CLOSE = (100, 200)


class BeltOutOfFrame(ValueError):
    """The requested belt lies entirely below the frame."""


class WidthMismatch(ValueError):
    """A pushed strip disagrees with earlier strips in width or channels."""


class EmptyProfile(ValueError):
    """finalize() called before any strip was pushed."""


class MalformedProfile(ValueError):
    """A profile file or its sidecar cannot be parsed consistently."""


@dataclass(frozen=True)
class PixelBelt:
    """Half-open frame-row interval [row_start, row_end) to average over."""

    row_start: int
    row_end: int

    def __post_init__(self):
        if not 0 <= self.row_start < self.row_end:
            raise BeltOutOfFrame(f"empty belt rows [{self.row_start}, {self.row_end})")

    @property
    def height(self) -> int:
        return self.row_end - self.row_start


@dataclass(frozen=True)
class ProfileMeta:
    """Provenance carried with a profile: needed to place boxes downstream."""

    video_id: str
    v_x: float
    fps: float
    belt: tuple | None = None


@dataclass(eq=False)
class MotionProfile:
    """T x W (x C) uint8 raster; row t is the averaged strip of frame t."""

    samples: np.ndarray
    meta: ProfileMeta

    @property
    def dims(self) -> ProfileDims:
        t, w = self.samples.shape[:2]
        c = 1 if self.samples.ndim == 2 else self.samples.shape[2]
        return ProfileDims(width=w, height=t, channels=c)


def belt_rows(v_y: float, offsets: tuple, frame_height: int) -> PixelBelt:
    """Resolve a belt offset range against the horizon row v_y.

    Rows are [v_y + lo, v_y + hi), clamped to the frame; an empty clamped
    belt raises BeltOutOfFrame.
    """
    lo, hi = offsets
    if lo < 0 or hi <= lo:
        raise ValueError(f"bad belt offsets [{lo}, {hi})")
    if not 0 <= v_y < frame_height:
        raise ValueError(f"v_y={v_y} outside frame of height {frame_height}")
    base = int(round(v_y))
    start = base + int(lo)
    end = min(base + int(hi), frame_height)
    if start >= end:
        raise BeltOutOfFrame(
            f"belt [{start}, {base + int(hi)}) lies below frame of height {frame_height}"
        )
    return PixelBelt(row_start=start, row_end=end)


def extract_strip(frame, belt: PixelBelt) -> np.ndarray:
    """Vertically average the belt rows of one frame into a W(xC) uint8 strip.

    The mean is an exact integer computation rounded half up.
    """
    pixels = frame.pixels if hasattr(frame, "pixels") else np.asarray(frame)
    if belt.row_end > pixels.shape[0]:
        raise ValueError(
            f"belt rows [{belt.row_start}, {belt.row_end}) exceed frame height {pixels.shape[0]}"
        )
    region = pixels[belt.row_start : belt.row_end]
    sums = region.sum(axis=0, dtype=np.int64)
    h = belt.height
    return ((2 * sums + h) // (2 * h)).astype(np.uint8)


class ProfileBuilder:
    """Single-writer accumulator: one strip per frame, O(rows pushed) memory."""

    def __init__(self):
        self._strips = []
        self._shape = None

    def push_strip(self, strip: np.ndarray) -> None:
        strip = np.asarray(strip)
        if strip.dtype != np.uint8:
            raise WidthMismatch(f"strip dtype must be uint8, got {strip.dtype}")
        if strip.ndim not in (1, 2):
            raise WidthMismatch(f"strip must be (W,) or (W, C), got shape {strip.shape}")
        if self._shape is None:
            self._shape = strip.shape
        elif strip.shape != self._shape:
            raise WidthMismatch(
                f"strip shape {strip.shape} does not match first strip {self._shape}"
            )
        self._strips.append(strip)

    def __len__(self) -> int:
        return len(self._strips)

    def finalize(self, meta: ProfileMeta) -> MotionProfile:
        if not self._strips:
            raise EmptyProfile("no strips were pushed")
        return MotionProfile(samples=np.stack(self._strips, axis=0), meta=meta)


def build_profile(
    manifest: VideoManifest,
    belt_offsets: tuple = BELT_MEDIUM,
    channels: int = 1,
) -> MotionProfile:
    """Stream a video's frames into a motion profile.

    With channels=1, RGB frames are converted to luma first; with
    channels=3 the source must be RGB.
    """
    belt = belt_rows(manifest.vanishing_point.y, belt_offsets, manifest.height)
    builder = ProfileBuilder()
    for frame in open_source(manifest):
        if channels == 1 and frame.channels == 3:
            frame = to_luma(frame)
        elif channels == 3 and frame.channels != 3:
            raise WidthMismatch(
                f"manifest {manifest.id}: 3-channel profile requested from grayscale frames"
            )
        builder.push_strip(extract_strip(frame, belt))
    lo, hi = int(belt_offsets[0]), int(belt_offsets[1])
    meta = ProfileMeta(
        video_id=manifest.id,
        v_x=manifest.vanishing_point.x,
        fps=manifest.fps,
        belt=(lo, hi),
    )
    return builder.finalize(meta)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def export_profile(profile: MotionProfile, path, extra: dict | None = None) -> Path:
    """Write the profile raster (lossless PNG bytes) plus its JSON sidecar.

    `extra` keys are merged into the sidecar; import_profile ignores keys
    it does not know, so callers may attach ground truth or other payloads.
    """
    path = Path(path)
    mode = "L" if profile.samples.ndim == 2 else "RGB"
    Image.fromarray(profile.samples, mode=mode).save(path, format="PNG")
    dims = profile.dims
    meta = {
        "video_id": profile.meta.video_id,
        "v_x": profile.meta.v_x,
        "fps": profile.meta.fps,
        "belt": list(profile.meta.belt) if profile.meta.belt is not None else None,
        "width": dims.width,
        "height": dims.height,
        "channels": dims.channels,
    }
    if extra:
        meta.update(extra)
    _sidecar_path(path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def read_sidecar(path) -> dict:
    sidecar = _sidecar_path(Path(path))
    if not sidecar.is_file():
        raise MalformedProfile(f"missing sidecar {sidecar}")
    try:
        return json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedProfile(f"{sidecar}: invalid JSON: {exc}") from None


def import_profile(path) -> MotionProfile:
    """Read back an exported profile; bit-exact inverse of export_profile."""
    path = Path(path)
    if not path.is_file():
        raise MalformedProfile(f"profile file not found: {path}")
    meta = read_sidecar(path)
    try:
        with Image.open(path) as img:
            img.load()
            samples = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MalformedProfile(f"{path}: unreadable raster: {exc}") from None
    try:
        expected = (int(meta["height"]), int(meta["width"]))
        channels = int(meta["channels"])
        belt = meta.get("belt")
        prof_meta = ProfileMeta(
            video_id=str(meta["video_id"]),
            v_x=float(meta["v_x"]),
            fps=float(meta["fps"]),
            belt=tuple(int(b) for b in belt) if belt is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedProfile(f"{path}: bad sidecar field: {exc}") from None
    if samples.shape[:2] != expected or (channels == 3) != (samples.ndim == 3):
        raise MalformedProfile(
            f"{path}: raster shape {samples.shape} disagrees with sidecar "
            f"{expected + (channels,)}"
        )
    return MotionProfile(samples=samples, meta=prof_meta)


def mirrored(profile: MotionProfile) -> MotionProfile:
    """Horizontally mirror a profile, mapping v_x to W - v_x."""
    w = profile.dims.width
    return MotionProfile(
        samples=np.flip(profile.samples, axis=1).copy(),
        meta=replace(profile.meta, v_x=w - profile.meta.v_x),
    )
