"""Synthetic motion profiles with ground-truth boxes.

The renderer draws stylized maneuver signatures rather than photometric
simulations: near-vertical lane-marking curves that drift slowly, a
lateral shear of all curves plus a bright crossing trace for lane
changes, and a bright band sweeping from the vanishing point to the side
edge for overtakes. Right-side classes are rendered as exact horizontal
mirrors of their left-side twins.

Ground truth comes from core.event_to_bbox, so the renderer and the label
geometry cannot drift apart.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import (
    DetectionBox,
    ManeuverClass,
    ManeuverEvent,
    ProfileDims,
    detection_record,
    event_to_bbox,
    write_jsonl,
)
from .profile import MotionProfile, ProfileMeta, export_profile, import_profile, read_sidecar

STYLE_SWEEP = "sweep"
STYLE_SIDE_BAND = "side_band"

SPLIT_FRACTIONS = {"train": 0.6, "val": 0.2, "test": 0.2}


class OverlapUnrenderable(ValueError):
    """Two same-side maneuvers overlap in time; the scene is rejected."""


@dataclass(frozen=True)
class BackgroundSpec:
    """Lane-marking curve field behind the maneuvers."""

    curve_count: int = 5
    base_intensity: int = 32
    drift_amplitude: float = 3.0


@dataclass(frozen=True)
class ManeuverSpec:
    """One maneuver to draw: interval, trace thickness/slope, brightness."""

    label: ManeuverClass
    t_start: int
    t_end: int
    thickness: int = 10
    slope: float = 1.5
    intensity: float = 230.0


@dataclass(frozen=True)
class SceneSpec:
    dims: ProfileDims
    v_x: float
    background: BackgroundSpec = BackgroundSpec()
    noise_sigma: float = 0.0
    maneuvers: tuple = ()
    style: str = STYLE_SWEEP


@dataclass
class SynthSample:
    profile: MotionProfile
    ground_truth: list


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _draw_trace(canvas, t0, t1, centers, thickness, intensity):
    """Paint a trace of the given thickness along per-row centers."""
    w = canvas.shape[1]
    a = np.clip(np.floor(centers - thickness / 2 + 0.5).astype(int), 0, w)
    b = np.clip(np.floor(centers + thickness / 2 + 0.5).astype(int), 0, w)
    for i, t in enumerate(range(t0, t1)):
        if b[i] > a[i]:
            row = canvas[t, a[i] : b[i]]
            np.maximum(row, intensity, out=row)


def _shear_offsets(spec: SceneSpec):
    """Lateral shift of the whole background per row, one ramp per lane change.

    Ego moving left shifts the scene rightward (positive columns) and vice
    versa; the shift persists after the maneuver, as it does on the road.
    """
    t = np.arange(spec.dims.height, dtype=np.float64)
    offsets = np.zeros_like(t)
    magnitude = spec.dims.width / 8.0
    for m in spec.maneuvers:
        if m.label.is_overtake():
            continue
        sign = 1.0 if m.label is ManeuverClass.LANE_LEFT else -1.0
        u = (t - m.t_start) / (m.t_end - m.t_start)
        offsets += sign * magnitude * _smoothstep(u)
    return offsets


def _left_maneuver_layer(shape, m: ManeuverSpec, v_x, style, jitter):
    """Render a left-side maneuver; right-side classes mirror this layer."""
    t_len, w = shape
    layer = np.zeros(shape)
    t0, t1 = m.t_start, m.t_end
    dur = t1 - t0
    tt = np.arange(t0, t1, dtype=np.float64)
    if m.label is ManeuverClass.OVERTAKE_LEFT:
        if style == STYLE_SIDE_BAND:
            centers = np.full(dur, v_x / 2.0 + jitter)
        else:
            # Passed vehicle: emerges near v_x and sweeps past the left
            # edge by t_end (overshoot by one thickness for a clean exit).
            rate = max(m.slope, (v_x + m.thickness) / dur)
            centers = v_x - rate * (tt - t0)
    else:
        # Crossed lane marking sweeping through the image center. The
        # sweep distance is floored so the direction stays readable even
        # for short events, and capped inside the W/2 label box.
        travel = min(max(m.slope * dur, 0.3 * w), 0.45 * w)
        centers = v_x + travel * (_smoothstep((tt - t0) / dur) - 0.5)
    _draw_trace(layer, t0, t1, centers, m.thickness, m.intensity)
    return layer


def _maneuver_layer(shape, m: ManeuverSpec, v_x, style, jitter):
    if m.label.is_left():
        return _left_maneuver_layer(shape, m, v_x, style, jitter)
    twin = replace(m, label=m.label.mirrored())
    layer = _left_maneuver_layer(shape, twin, shape[1] - v_x, style, jitter)
    return np.flip(layer, axis=1)


def _validate_scene(spec: SceneSpec):
    t_len, w = spec.dims.height, spec.dims.width
    if not 0 <= spec.v_x < w:
        raise ValueError(f"v_x={spec.v_x} outside profile width [0, {w})")
    if spec.style not in (STYLE_SWEEP, STYLE_SIDE_BAND):
        raise ValueError(f"unknown render style {spec.style!r}")
    if spec.noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if not 0 <= spec.background.base_intensity <= 255:
        raise ValueError("base intensity must be an 8-bit value")
    sides = {True: [], False: []}
    for m in spec.maneuvers:
        if not 0 <= m.t_start < m.t_end <= t_len:
            raise ValueError(f"maneuver interval [{m.t_start}, {m.t_end}) outside [0, {t_len})")
        if m.thickness < 1:
            raise ValueError(f"trace thickness must be >= 1, got {m.thickness}")
        if not 0 <= m.intensity <= 255:
            raise ValueError(f"trace intensity must be in [0, 255], got {m.intensity}")
        sides[m.label.is_left()].append(m)
    for members in sides.values():
        members.sort(key=lambda m: m.t_start)
        for prev, cur in zip(members, members[1:]):
            if cur.t_start < prev.t_end:
                raise OverlapUnrenderable(
                    f"same-side maneuvers overlap in time: "
                    f"[{prev.t_start}, {prev.t_end}) and [{cur.t_start}, {cur.t_end})"
                )


def render_profile(spec: SceneSpec, seed: int, video_id: str | None = None) -> SynthSample:
    """Render a scene deterministically; same (spec, seed) gives identical bits."""
    _validate_scene(spec)
    t_len, w = spec.dims.height, spec.dims.width
    rng = np.random.default_rng(seed)
    canvas = np.full((t_len, w), float(spec.background.base_intensity))

    shear = _shear_offsets(spec)
    t = np.arange(t_len, dtype=np.float64)
    for _ in range(spec.background.curve_count):
        x0 = rng.uniform(0, w)
        intensity = rng.uniform(70, 150)
        thickness = int(rng.integers(1, 4))
        amp = spec.background.drift_amplitude * rng.uniform(0.5, 1.0)
        freq = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0.0, 1.0)
        centers = x0 + amp * np.sin(2 * math.pi * (freq * t / t_len + phase)) + shear
        _draw_trace(canvas, 0, t_len, centers, thickness, intensity)

    for m in spec.maneuvers:
        jitter = rng.uniform(-w / 32.0, w / 32.0)
        layer = _maneuver_layer((t_len, w), m, spec.v_x, spec.style, jitter)
        np.maximum(canvas, layer, out=canvas)

    if spec.noise_sigma > 0:
        canvas = canvas + rng.normal(0.0, spec.noise_sigma, size=canvas.shape)
    samples = np.floor(np.clip(canvas, 0, 255) + 0.5).astype(np.uint8)
    if spec.dims.channels == 3:
        samples = np.repeat(samples[:, :, None], 3, axis=2)

    meta = ProfileMeta(
        video_id=video_id if video_id is not None else f"synth-{seed}",
        v_x=float(spec.v_x),
        fps=30.0,
        belt=None,
    )
    ground_truth = [
        event_to_bbox(ManeuverEvent(m.label, m.t_start, m.t_end), spec.v_x, spec.dims)
        for m in spec.maneuvers
    ]
    return SynthSample(profile=MotionProfile(samples=samples, meta=meta), ground_truth=ground_truth)


@dataclass(frozen=True)
class DatasetConfig:
    count: int
    width: int = 256
    height: int = 256
    channels: int = 1
    v_x: float | None = None
    v_x_jitter: float = 0.0
    class_mix: dict | None = None
    noise_sigma: float = 4.0
    curve_count: int = 5
    style: str = STYLE_SWEEP
    maneuvers_per_sample: int = 1
    seed: int = 0

    def resolved_v_x(self) -> float:
        return self.width / 2.0 if self.v_x is None else float(self.v_x)

    def resolved_mix(self) -> dict:
        mix = self.class_mix or {c.short_name: 1.0 for c in ManeuverClass}
        total = sum(mix.values())
        if total <= 0:
            raise ValueError("class mix weights must sum to a positive value")
        return {ManeuverClass.from_short_name(k): v / total for k, v in mix.items()}


def _allocate_counts(weights: dict, total: int) -> dict:
    """Largest-remainder apportionment; deterministic tie-break by class code."""
    keys = sorted(weights, key=int)
    shares = {k: weights[k] * total for k in keys}
    counts = {k: int(math.floor(shares[k])) for k in keys}
    leftover = total - sum(counts.values())
    by_remainder = sorted(keys, key=lambda k: (-(shares[k] - counts[k]), int(k)))
    for k in by_remainder[:leftover]:
        counts[k] += 1
    return counts


def split_sizes(count: int) -> tuple:
    """60/20/20 sizes with round-half-up on train and val."""
    n_train = int(math.floor(0.6 * count + 0.5))
    n_val = int(math.floor(0.2 * count + 0.5))
    return n_train, n_val, count - n_train - n_val


def _stratified_split(strata: dict, n_train: int, n_val: int) -> dict:
    """Assign ids to splits, keeping each class-signature stratum proportional."""
    assignment = {}
    remaining = {sig: list(ids) for sig, ids in sorted(strata.items())}
    for split_name, target in (("train", n_train), ("val", n_val)):
        total_left = sum(len(v) for v in remaining.values())
        if total_left == 0 or target == 0:
            continue
        quotas = {sig: len(ids) * target / total_left for sig, ids in remaining.items()}
        take = {sig: min(int(math.floor(q)), len(remaining[sig])) for sig, q in quotas.items()}
        grant = target - sum(take.values())
        order = sorted(remaining, key=lambda s: (-(quotas[s] - math.floor(quotas[s])), s))
        while grant > 0:
            progressed = False
            for sig in order:
                if grant == 0:
                    break
                if take[sig] < len(remaining[sig]):
                    take[sig] += 1
                    grant -= 1
                    progressed = True
            if not progressed:
                break
        for sig, n in take.items():
            for sample_id in remaining[sig][:n]:
                assignment[sample_id] = split_name
            remaining[sig] = remaining[sig][n:]
    for ids in remaining.values():
        for sample_id in ids:
            assignment[sample_id] = "test"
    return assignment


def _sample_maneuvers(rng, config: DatasetConfig, labels: list) -> tuple:
    t_len = config.height
    maneuvers = []
    occupied = []
    for label in labels:
        for _ in range(64):
            duration = int(rng.integers(t_len // 8, t_len // 5 + 1))
            t0 = int(rng.integers(0, t_len - duration + 1))
            if all(t0 >= e or t0 + duration <= s for s, e in occupied):
                break
        else:
            continue
        occupied.append((t0, t0 + duration))
        if label.is_overtake():
            # a passed vehicle is a wide blob, a crossed lane line is thin
            slope = float(rng.uniform(0.8, 3.0))
            thickness = int(rng.integers(14, 29))
        else:
            slope = float(rng.uniform(0.6, 1.8))
            thickness = int(rng.integers(3, 10))
        maneuvers.append(
            ManeuverSpec(
                label=label,
                t_start=t0,
                t_end=t0 + duration,
                thickness=thickness,
                slope=slope,
                intensity=float(rng.integers(205, 256)),
            )
        )
    return tuple(maneuvers)


def make_dataset(config: DatasetConfig, out_dir) -> dict:
    """Generate a dataset directory: profiles, sidecars, split index, GT files.

    Deterministic for a fixed config (including seed): file bytes, the
    index, and the split assignment are all reproducible.
    """
    if config.count < 1:
        raise ValueError(f"dataset count must be >= 1, got {config.count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = ProfileDims(config.width, config.height, config.channels)
    v_x = config.resolved_v_x()
    mix = config.resolved_mix()

    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xD5)))
    per_class = _allocate_counts(mix, config.count * config.maneuvers_per_sample)
    label_pool = [label for label in sorted(per_class, key=int) for _ in range(per_class[label])]
    rng.shuffle(label_pool)

    samples = []
    for i in range(config.count):
        labels = label_pool[i * config.maneuvers_per_sample : (i + 1) * config.maneuvers_per_sample]
        maneuvers = _sample_maneuvers(rng, config, labels)
        sample_v_x = v_x
        if config.v_x_jitter > 0:
            sample_v_x = float(
                np.clip(v_x + rng.uniform(-config.v_x_jitter, config.v_x_jitter), 1, config.width - 1)
            )
        spec = SceneSpec(
            dims=dims,
            v_x=sample_v_x,
            background=BackgroundSpec(curve_count=config.curve_count),
            noise_sigma=config.noise_sigma,
            maneuvers=maneuvers,
            style=config.style,
        )
        sample_id = f"{i:04d}"
        render_seed = int(np.random.SeedSequence((config.seed, i)).generate_state(1)[0])
        sample = render_profile(spec, render_seed, video_id=sample_id)
        gt_records = [detection_record(sample_id, box) for box in sample.ground_truth]
        export_profile(
            sample.profile,
            out_dir / f"{sample_id}.profile",
            extra={
                "ground_truth": gt_records,
                "events": [
                    {"class": m.label.short_name, "t_start": m.t_start, "t_end": m.t_end}
                    for m in maneuvers
                ],
            },
        )
        samples.append(
            {
                "id": sample_id,
                "profile": f"{sample_id}.profile",
                "meta": f"{sample_id}.meta.json",
                "classes": sorted({m.label.short_name for m in maneuvers}),
                "ground_truth": gt_records,
            }
        )

    n_train, n_val, n_test = split_sizes(config.count)
    strata = {}
    for rec in samples:
        strata.setdefault(tuple(rec["classes"]), []).append(rec["id"])
    assignment = _stratified_split(strata, n_train, n_val)
    for rec in samples:
        rec["split"] = assignment[rec["id"]]

    warnings = []
    for name, size in (("val", n_val), ("test", n_test)):
        if size == 0:
            warnings.append(
                f"split '{name}' is empty: count={config.count} is too small for a 60/20/20 split"
            )

    class_counts = {c.short_name: 0 for c in ManeuverClass}
    for rec in samples:
        for name in rec["classes"]:
            class_counts[name] += 1

    index = {
        "generator": {
            "count": config.count,
            "width": config.width,
            "height": config.height,
            "channels": config.channels,
            "v_x": v_x,
            "v_x_jitter": config.v_x_jitter,
            "class_mix": {k.short_name: round(v, 6) for k, v in mix.items()},
            "noise_sigma": config.noise_sigma,
            "curve_count": config.curve_count,
            "style": config.style,
            "maneuvers_per_sample": config.maneuvers_per_sample,
            "seed": config.seed,
        },
        "splits": {
            name: [rec["id"] for rec in samples if rec["split"] == name]
            for name in ("train", "val", "test")
        },
        "class_counts": class_counts,
        "samples": samples,
        "warnings": warnings,
    }
    (out_dir / "index.json").write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for name in ("train", "val", "test"):
        records = []
        for rec in samples:
            if rec["split"] == name:
                records.extend(rec["ground_truth"])
        write_jsonl(out_dir / f"gt.{name}.jsonl", records)
    return index


def load_index(index_path) -> dict:
    index_path = Path(index_path)
    return json.loads(index_path.read_text(encoding="utf-8"))


def load_sample(dataset_dir, sample_id: str) -> SynthSample:
    """Load one generated sample: its profile and ground-truth boxes."""
    dataset_dir = Path(dataset_dir)
    path = dataset_dir / f"{sample_id}.profile"
    prof = import_profile(path)
    meta = read_sidecar(path)
    boxes = []
    for rec in meta.get("ground_truth", []):
        boxes.append(
            DetectionBox(
                label=ManeuverClass.from_short_name(rec["class"]),
                x_min=float(rec["x_min"]),
                t_min=float(rec["t_min"]),
                x_max=float(rec["x_max"]),
                t_max=float(rec["t_max"]),
                score=float(rec["score"]),
            )
        )
    return SynthSample(profile=prof, ground_truth=boxes)
