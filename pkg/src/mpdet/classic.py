"""Classical overtake detector: gradient orientation plus a vertical Laplacian.

The baseline watches the two side bands of the profile. A second
difference along time of each band's mean intensity localizes a trace
entering or leaving the band; the dominant sign of g_x * g_t over strong
gradients decides whether the trace moves outward (a passed vehicle,
kept) or inward (passing/oncoming, ignored). Lane changes are out of this
detector's reach by design.

Band means over integer profiles are computed with integer sums, so
horizontal mirroring flips detections exactly.
"""

from dataclasses import dataclass

import numpy as np

from .core import ManeuverClass, ManeuverEvent, ProfileDims, event_to_bbox
from .profile import MotionProfile


class ProfileTooSmall(ValueError):
    """Gradients need at least a 3x3 profile."""


@dataclass
class GradientField:
    """Per-pixel profile gradient: lateral g_x, temporal g_t."""

    g_x: np.ndarray
    g_t: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.g_x, self.g_t)

    @property
    def orientation(self) -> np.ndarray:
        """Trace angle atan2(g_t, g_x) in (-pi, pi]."""
        return np.arctan2(self.g_t, self.g_x)


@dataclass(frozen=True)
class ClassicParams:
    """Reconstruction knobs; all values are tuning choices, not handed down.

    outward_sign maps the dominant sign of g_x * g_t (mirrored on the
    right band) to "trace moving toward the edge", i.e. a passed vehicle.
    """

    magnitude_thresh: float = 20.0
    laplacian_step: int = 5
    band_fraction: float = 0.25
    laplacian_thresh: float = 8.0
    min_duration: int = 15
    outward_sign: int = 1

    def __post_init__(self):
        if self.magnitude_thresh <= 0 or self.laplacian_thresh <= 0:
            raise ValueError("thresholds must be positive")
        if self.laplacian_step < 1:
            raise ValueError("laplacian_step must be >= 1")
        if not 0 < self.band_fraction <= 0.5:
            raise ValueError("band_fraction must be in (0, 0.5]")
        if self.min_duration < 1:
            raise ValueError("min_duration must be >= 1")
        if self.outward_sign not in (-1, 1):
            raise ValueError("outward_sign must be -1 or +1")

    def to_dict(self) -> dict:
        return {
            "magnitude_thresh": self.magnitude_thresh,
            "laplacian_step": self.laplacian_step,
            "band_fraction": self.band_fraction,
            "laplacian_thresh": self.laplacian_thresh,
            "min_duration": self.min_duration,
            "outward_sign": self.outward_sign,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ClassicParams":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown classic params: {sorted(unknown)}")
        return cls(**known)


def _as_plane(profile) -> np.ndarray:
    samples = profile.samples if isinstance(profile, MotionProfile) else np.asarray(profile)
    if samples.ndim == 3:
        samples = samples.mean(axis=2)
    return samples


def gradient_field(profile) -> GradientField:
    """Central differences on the interior, one-sided at the borders."""
    plane = _as_plane(profile).astype(np.float64)
    t_len, w = plane.shape
    if t_len < 3 or w < 3:
        raise ProfileTooSmall(f"profile {w}x{t_len} too small for gradients")
    g_x = np.empty_like(plane)
    g_x[:, 1:-1] = (plane[:, 2:] - plane[:, :-2]) / 2.0
    g_x[:, 0] = plane[:, 1] - plane[:, 0]
    g_x[:, -1] = plane[:, -1] - plane[:, -2]
    g_t = np.empty_like(plane)
    g_t[1:-1, :] = (plane[2:, :] - plane[:-2, :]) / 2.0
    g_t[0, :] = plane[1, :] - plane[0, :]
    g_t[-1, :] = plane[-1, :] - plane[-2, :]
    return GradientField(g_x=g_x, g_t=g_t)


def vertical_laplacian(profile, band: tuple, k: int) -> np.ndarray:
    """Second difference over time of the band's mean intensity.

    L(t) = s(t-k) - 2 s(t) + s(t+k) on the interior; the first and last k
    rows, where the stencil would leave the profile, are zero. Integer
    profiles use exact integer sums, so the result is invariant under any
    permutation of the band's columns.
    """
    plane = _as_plane(profile)
    lo, hi = band
    t_len = plane.shape[0]
    if not 0 <= lo < hi <= plane.shape[1]:
        raise ValueError(f"band [{lo}, {hi}) outside profile width {plane.shape[1]}")
    if not 1 <= k < max(t_len // 2, 2):
        raise ValueError(f"laplacian step k={k} must satisfy 1 <= k < T/2")
    region = plane[:, lo:hi]
    if np.issubdtype(region.dtype, np.integer):
        sums = region.sum(axis=1, dtype=np.int64)
        signal = sums / float(hi - lo)
    else:
        signal = region.astype(np.float64).sum(axis=1) / float(hi - lo)
    out = np.zeros(t_len)
    out[k : t_len - k] = signal[: t_len - 2 * k] - 2.0 * signal[k : t_len - k] + signal[2 * k :]
    return out


def _runs(mask: np.ndarray) -> list:
    """Half-open [start, end) runs of consecutive True values."""
    runs = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def detect_classic(profile, v_x: float, params: ClassicParams = ClassicParams()) -> list:
    """Overtake detections (score 1.0) from the two side bands."""
    plane = _as_plane(profile)
    t_len, w = plane.shape
    dims = ProfileDims(width=w, height=t_len, channels=1)
    band_w = int(round(params.band_fraction * w))
    if band_w < 1:
        raise ValueError("side band is empty at this width")
    field = gradient_field(profile)
    strong = field.magnitude > params.magnitude_thresh
    sign_product = np.sign(field.g_x) * np.sign(field.g_t)

    detections = []
    bands = (
        (ManeuverClass.OVERTAKE_LEFT, (0, band_w), 1),
        (ManeuverClass.OVERTAKE_RIGHT, (w - band_w, w), -1),
    )
    for label, band, band_sign in bands:
        response = vertical_laplacian(profile, band, params.laplacian_step)
        active = np.abs(response) > params.laplacian_thresh
        for start, end in _runs(active):
            if end - start < params.min_duration:
                continue
            votes = sign_product[start:end, band[0] : band[1]][
                strong[start:end, band[0] : band[1]]
            ]
            vote = int(votes.sum())
            if vote * band_sign * params.outward_sign <= 0:
                continue
            event = ManeuverEvent(label, start, end)
            detections.append(event_to_bbox(event, v_x, dims))
    return detections
