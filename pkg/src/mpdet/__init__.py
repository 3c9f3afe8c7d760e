"""Motion-profile toolkit: compress dashcam video into T x W rasters and
detect ego-vehicle lane changes and overtakes in them."""

from .core import (
    DetectionBox,
    InvalidBox,
    InvalidEvent,
    MalformedInput,
    ManeuverClass,
    ManeuverEvent,
    ProfileDims,
    UnknownClass,
    VanishingPoint,
    event_to_bbox,
    iou,
)
from .profile import (
    BELT_CLOSE,
    BELT_FAR,
    BELT_MEDIUM,
    MotionProfile,
    PixelBelt,
    ProfileBuilder,
    ProfileMeta,
    belt_rows,
    build_profile,
    export_profile,
    extract_strip,
    import_profile,
)

__version__ = "0.1.0"

__all__ = [
    "BELT_CLOSE",
    "BELT_FAR",
    "BELT_MEDIUM",
    "DetectionBox",
    "InvalidBox",
    "InvalidEvent",
    "MalformedInput",
    "ManeuverClass",
    "ManeuverEvent",
    "MotionProfile",
    "PixelBelt",
    "ProfileBuilder",
    "ProfileDims",
    "ProfileMeta",
    "UnknownClass",
    "VanishingPoint",
    "belt_rows",
    "build_profile",
    "event_to_bbox",
    "export_profile",
    "extract_strip",
    "import_profile",
    "iou",
]
