import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpdet.core import VanishingPoint
from mpdet.ingest import VideoManifest
from mpdet.profile import (
    BELT_MEDIUM,
    BeltOutOfFrame,
    EmptyProfile,
    MalformedProfile,
    MotionProfile,
    PixelBelt,
    ProfileBuilder,
    ProfileMeta,
    WidthMismatch,
    belt_rows,
    build_profile,
    export_profile,
    extract_strip,
    import_profile,
    mirrored,
    read_sidecar,
)


def brute_force_profile(frames: np.ndarray, belt: PixelBelt) -> np.ndarray:
    """Oracle: materialize every frame, average the belt per column, round half up."""
    region = frames[:, belt.row_start : belt.row_end].astype(np.float64)
    mean = region.mean(axis=1)
    return np.floor(mean + 0.5).astype(np.uint8)


class TestBeltRows:
    def test_medium_belt_at_horizon_300(self):
        assert belt_rows(300, (35, 100), 720) == PixelBelt(335, 400)

    def test_zero_horizon(self):
        assert belt_rows(0, (0, 35), 720) == PixelBelt(0, 35)

    def test_below_frame_raises(self):
        with pytest.raises(BeltOutOfFrame):
            belt_rows(700, (35, 100), 720)

    def test_partial_clamp(self):
        assert belt_rows(650, (35, 100), 720) == PixelBelt(685, 720)

    def test_bad_offsets(self):
        with pytest.raises(ValueError):
            belt_rows(10, (50, 50), 720)


class TestExtractStrip:
    def test_constant_frame(self):
        frame = np.full((40, 17), 128, dtype=np.uint8)
        strip = extract_strip(frame, PixelBelt(5, 25))
        assert strip.shape == (17,)
        assert np.all(strip == 128)

    def test_single_row_belt_is_identity(self):
        rng = np.random.default_rng(1)
        frame = rng.integers(0, 256, size=(12, 33), dtype=np.uint8)
        strip = extract_strip(frame, PixelBelt(7, 8))
        assert np.array_equal(strip, frame[7])

    def test_two_row_mean(self):
        frame = np.zeros((4, 3), dtype=np.uint8)
        frame[1] = 100
        frame[2] = 200
        assert np.all(extract_strip(frame, PixelBelt(1, 3)) == 150)

    def test_rounds_half_up(self):
        frame = np.array([[10], [15]], dtype=np.uint8)  # mean 12.5
        assert extract_strip(frame, PixelBelt(0, 2))[0] == 13

    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(2, 30))
    def test_matches_float_oracle(self, seed, belt_h, width):
        rng = np.random.default_rng(seed)
        frame = rng.integers(0, 256, size=(belt_h + 3, width), dtype=np.uint8)
        belt = PixelBelt(2, 2 + belt_h)
        oracle = brute_force_profile(frame[None, :, :], belt)[0]
        assert np.array_equal(extract_strip(frame, belt), oracle)

    def test_permutation_invariant_over_belt_rows(self):
        rng = np.random.default_rng(9)
        frame = rng.integers(0, 256, size=(10, 21), dtype=np.uint8)
        belt = PixelBelt(0, 10)
        shuffled = frame[rng.permutation(10)]
        assert np.array_equal(extract_strip(frame, belt), extract_strip(shuffled, belt))

    def test_three_channel_strip(self):
        rng = np.random.default_rng(2)
        frame = rng.integers(0, 256, size=(6, 9, 3), dtype=np.uint8)
        strip = extract_strip(frame, PixelBelt(1, 5))
        assert strip.shape == (9, 3)
        oracle = np.floor(frame[1:5].astype(np.float64).mean(axis=0) + 0.5)
        assert np.array_equal(strip, oracle.astype(np.uint8))


class TestBuilder:
    def test_stacks_in_push_order(self):
        builder = ProfileBuilder()
        rng = np.random.default_rng(0)
        strips = [rng.integers(0, 256, size=1280, dtype=np.uint8) for _ in range(480)]
        for s in strips:
            builder.push_strip(s)
        profile = builder.finalize(ProfileMeta("v", 640.0, 30.0, BELT_MEDIUM))
        assert profile.dims.height == 480 and profile.dims.width == 1280
        assert np.array_equal(profile.samples[123], strips[123])

    def test_empty_profile(self):
        with pytest.raises(EmptyProfile):
            ProfileBuilder().finalize(ProfileMeta("v", 0.0, 30.0))

    def test_width_mismatch(self):
        builder = ProfileBuilder()
        builder.push_strip(np.zeros(1280, dtype=np.uint8))
        with pytest.raises(WidthMismatch):
            builder.push_strip(np.zeros(640, dtype=np.uint8))

    def test_compression_ratio_is_frame_height(self):
        # stored samples = T*W versus source T*W*H
        t_len, width, height = 30, 64, 48
        frames = np.zeros((t_len, height, width), dtype=np.uint8)
        builder = ProfileBuilder()
        belt = PixelBelt(0, height)
        for f in frames:
            builder.push_strip(extract_strip(f, belt))
        profile = builder.finalize(ProfileMeta("v", 32.0, 30.0))
        assert frames.size / profile.samples.size == height


class TestStreamingOracle:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_streamed_equals_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        t_len = int(rng.integers(30, 60))
        height = int(rng.integers(64, 100))
        width = int(rng.integers(64, 120))
        frames = rng.integers(0, 256, size=(t_len, height, width), dtype=np.uint8)
        lo = int(rng.integers(0, height - 2))
        hi = int(rng.integers(lo + 1, height))
        belt = PixelBelt(lo, hi)
        builder = ProfileBuilder()
        for f in frames:
            builder.push_strip(extract_strip(f, belt))
        streamed = builder.finalize(ProfileMeta("v", width / 2, 30.0)).samples
        assert np.array_equal(streamed, brute_force_profile(frames, belt))


class TestBuildProfileFromManifest:
    def test_raw_video_end_to_end(self, tmp_path):
        rng = np.random.default_rng(11)
        frames = rng.integers(0, 256, size=(24, 60, 40), dtype=np.uint8)
        blob = tmp_path / "clip.raw"
        blob.write_bytes(frames.tobytes())
        manifest = VideoManifest(
            id="clip", source_kind="raw_file", source_path=blob,
            width=40, height=60, fps=30.0, num_frames=24,
            vanishing_point=VanishingPoint(20, 10),
        )
        profile = build_profile(manifest, belt_offsets=(5, 25))
        belt = PixelBelt(15, 35)
        assert np.array_equal(profile.samples, brute_force_profile(frames, belt))
        assert profile.meta.video_id == "clip"
        assert profile.meta.belt == (5, 25)
        assert profile.meta.v_x == 20


class TestExportImport:
    def make_profile(self, seed=0, shape=(48, 64)):
        rng = np.random.default_rng(seed)
        return MotionProfile(
            samples=rng.integers(0, 256, size=shape, dtype=np.uint8),
            meta=ProfileMeta("vid", 31.5, 30.0, (35, 100)),
        )

    def test_round_trip_bit_exact(self, tmp_path):
        profile = self.make_profile()
        path = export_profile(profile, tmp_path / "p.profile")
        loaded = import_profile(path)
        assert np.array_equal(loaded.samples, profile.samples)
        assert loaded.meta == profile.meta

    def test_round_trip_480x1280(self, tmp_path):
        profile = self.make_profile(seed=4, shape=(480, 1280))
        loaded = import_profile(export_profile(profile, tmp_path / "big.profile"))
        assert np.array_equal(loaded.samples, profile.samples)

    def test_export_is_deterministic(self, tmp_path):
        profile = self.make_profile()
        a = export_profile(profile, tmp_path / "a.profile")
        b = export_profile(profile, tmp_path / "b.profile")
        assert hashlib.sha256(a.read_bytes()).hexdigest() == hashlib.sha256(b.read_bytes()).hexdigest()

    def test_truncated_raster_is_malformed(self, tmp_path):
        profile = self.make_profile()
        path = export_profile(profile, tmp_path / "p.profile")
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(MalformedProfile):
            import_profile(path)

    def test_missing_sidecar_is_malformed(self, tmp_path):
        profile = self.make_profile()
        path = export_profile(profile, tmp_path / "p.profile")
        path.with_suffix(".meta.json").unlink()
        with pytest.raises(MalformedProfile):
            import_profile(path)

    def test_extra_sidecar_keys_preserved_for_reading(self, tmp_path):
        profile = self.make_profile()
        path = export_profile(profile, tmp_path / "p.profile", extra={"ground_truth": []})
        assert read_sidecar(path)["ground_truth"] == []
        loaded = import_profile(path)
        assert loaded.meta == profile.meta

    def test_mirror_round_trip(self):
        profile = self.make_profile()
        twice = mirrored(mirrored(profile))
        assert np.array_equal(twice.samples, profile.samples)
        assert twice.meta == profile.meta
