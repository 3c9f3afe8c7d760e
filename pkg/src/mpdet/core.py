"""Shared domain types for motion-profile maneuver detection.

Coordinate convention used throughout the package: a motion profile is a
raster whose rows are time (row 0 is the oldest frame) and whose columns
are lateral image position. Boxes and events are half-open intervals on
both axes, which keeps area arithmetic exact.
"""

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path


class UnknownClass(ValueError):
    """A maneuver class name or code outside the four known classes."""


class InvalidEvent(ValueError):
    """An event that cannot produce a valid box (empty interval, out of range)."""


class InvalidBox(ValueError):
    """Box coordinates violating the half-open interval contract."""


class MalformedInput(ValueError):
    """A JSONL record or file that does not match the documented schema."""


class ManeuverClass(IntEnum):
    """Ego-vehicle maneuver classes with stable integer codes 0..3."""

    LANE_RIGHT = 0
    LANE_LEFT = 1
    OVERTAKE_RIGHT = 2
    OVERTAKE_LEFT = 3

    @property
    def short_name(self) -> str:
        return _SHORT_NAMES[self]

    @classmethod
    def from_short_name(cls, name: str) -> "ManeuverClass":
        try:
            return _BY_SHORT_NAME[name]
        except KeyError:
            raise UnknownClass(f"unknown maneuver class {name!r}") from None

    def is_overtake(self) -> bool:
        return self in (ManeuverClass.OVERTAKE_RIGHT, ManeuverClass.OVERTAKE_LEFT)

    def is_left(self) -> bool:
        return self in (ManeuverClass.LANE_LEFT, ManeuverClass.OVERTAKE_LEFT)

    def mirrored(self) -> "ManeuverClass":
        """The same maneuver performed toward the other side."""
        return _MIRROR[self]


_SHORT_NAMES = {
    ManeuverClass.LANE_RIGHT: "LR",
    ManeuverClass.LANE_LEFT: "LL",
    ManeuverClass.OVERTAKE_RIGHT: "OR",
    ManeuverClass.OVERTAKE_LEFT: "OL",
}
_BY_SHORT_NAME = {v: k for k, v in _SHORT_NAMES.items()}
_MIRROR = {
    ManeuverClass.LANE_RIGHT: ManeuverClass.LANE_LEFT,
    ManeuverClass.LANE_LEFT: ManeuverClass.LANE_RIGHT,
    ManeuverClass.OVERTAKE_RIGHT: ManeuverClass.OVERTAKE_LEFT,
    ManeuverClass.OVERTAKE_LEFT: ManeuverClass.OVERTAKE_RIGHT,
}


@dataclass(frozen=True)
class ProfileDims:
    """Motion-profile raster dimensions.

    width: columns (lateral image position, pixels)
    height: rows (frames / time axis)
    channels: 1 (grayscale) or 3 (RGB)
    """

    width: int
    height: int
    channels: int = 1

    def __post_init__(self):
        if self.width < 2:
            raise ValueError(f"profile width must be >= 2, got {self.width}")
        if self.height < 1:
            raise ValueError(f"profile height must be >= 1, got {self.height}")
        if self.channels not in (1, 3):
            raise ValueError(f"profile channels must be 1 or 3, got {self.channels}")


@dataclass(frozen=True)
class VanishingPoint:
    """Vanishing point in source-frame pixel coordinates.

    x splits left from right; y locates the horizon line.
    """

    x: float
    y: float

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"vanishing point must be non-negative, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class ManeuverEvent:
    """A labeled maneuver as a half-open frame interval [t_start, t_end)."""

    label: ManeuverClass
    t_start: int
    t_end: int

    def __post_init__(self):
        if self.t_start < 0:
            raise InvalidEvent(f"t_start must be >= 0, got {self.t_start}")
        if self.t_end <= self.t_start:
            raise InvalidEvent(
                f"event interval is empty: [{self.t_start}, {self.t_end})"
            )

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class DetectionBox:
    """An axis-aligned box in profile coordinates, half-open on both axes.

    x spans columns (lateral position), t spans rows (time). Ground-truth
    boxes carry score 1.0.
    """

    label: ManeuverClass
    x_min: float
    t_min: float
    x_max: float
    t_max: float
    score: float = 1.0

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise InvalidBox(f"x interval is empty: [{self.x_min}, {self.x_max})")
        if not self.t_min < self.t_max:
            raise InvalidBox(f"t interval is empty: [{self.t_min}, {self.t_max})")
        if not 0.0 <= self.score <= 1.0:
            raise InvalidBox(f"score must be in [0, 1], got {self.score}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.t_max - self.t_min)

    def mirrored_x(self, width: float) -> "DetectionBox":
        """The box reflected about the profile's vertical centerline."""
        return DetectionBox(
            label=self.label.mirrored(),
            x_min=width - self.x_max,
            t_min=self.t_min,
            x_max=width - self.x_min,
            t_max=self.t_max,
            score=self.score,
        )


def iou(a: DetectionBox, b: DetectionBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    it = min(a.t_max, b.t_max) - max(a.t_min, b.t_min)
    if ix <= 0 or it <= 0:
        return 0.0
    inter = ix * it
    return inter / (a.area + b.area - inter)


def event_to_bbox(event: ManeuverEvent, v_x: float, dims: ProfileDims) -> DetectionBox:
    """Convert a labeled event into its ground-truth box.

    Lane-change boxes are centered on v_x with width W/2 (clamped to the
    profile); overtake boxes span from v_x to the side edge the vehicle is
    passed on. The time interval is preserved exactly.
    """
    w = dims.width
    if not 0 <= v_x < w:
        raise InvalidEvent(f"v_x={v_x} outside profile width [0, {w})")
    if event.t_end > dims.height:
        raise InvalidEvent(
            f"event [{event.t_start}, {event.t_end}) exceeds profile height {dims.height}"
        )
    if event.label.is_overtake():
        if event.label is ManeuverClass.OVERTAKE_LEFT:
            x_min, x_max = 0.0, float(v_x)
        else:
            x_min, x_max = float(v_x), float(w)
    else:
        x_min = max(0.0, v_x - w / 4)
        x_max = min(float(w), v_x + w / 4)
    if not x_min < x_max:
        raise InvalidEvent(
            f"{event.label.short_name} event at v_x={v_x} yields an empty box"
        )
    return DetectionBox(
        label=event.label,
        x_min=x_min,
        t_min=float(event.t_start),
        x_max=x_max,
        t_max=float(event.t_end),
        score=1.0,
    )


def event_record(video_id: str, event: ManeuverEvent) -> dict:
    """Events JSONL record."""
    return {
        "video_id": video_id,
        "class": event.label.short_name,
        "t_start": event.t_start,
        "t_end": event.t_end,
    }


def parse_event_record(obj: dict) -> tuple[str, ManeuverEvent]:
    try:
        label = ManeuverClass.from_short_name(obj["class"])
        return str(obj["video_id"]), ManeuverEvent(label, int(obj["t_start"]), int(obj["t_end"]))
    except UnknownClass:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"bad event record {obj!r}: {exc}") from None


def detection_record(video_id: str, box: DetectionBox) -> dict:
    """Detections JSONL record: the event fields plus box geometry and score."""
    return {
        "video_id": video_id,
        "class": box.label.short_name,
        "t_start": box.t_min,
        "t_end": box.t_max,
        "x_min": box.x_min,
        "t_min": box.t_min,
        "x_max": box.x_max,
        "t_max": box.t_max,
        "score": box.score,
    }


def parse_detection_record(obj: dict) -> tuple[str, DetectionBox]:
    try:
        label = ManeuverClass.from_short_name(obj["class"])
        box = DetectionBox(
            label=label,
            x_min=float(obj["x_min"]),
            t_min=float(obj["t_min"]),
            x_max=float(obj["x_max"]),
            t_max=float(obj["t_max"]),
            score=float(obj["score"]),
        )
        return str(obj["video_id"]), box
    except UnknownClass:
        raise
    except (KeyError, TypeError, ValueError, InvalidBox) as exc:
        raise MalformedInput(f"bad detection record {obj!r}: {exc}") from None


def write_jsonl(path, records) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInput(f"{path}:{line_no}: invalid JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise MalformedInput(f"{path}:{line_no}: record is not an object")
            records.append(obj)
    return records
