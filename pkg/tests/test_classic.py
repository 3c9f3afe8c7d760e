import numpy as np
import pytest

from mpdet.classic import (
    ClassicParams,
    ProfileTooSmall,
    detect_classic,
    gradient_field,
    vertical_laplacian,
)
from mpdet.core import ManeuverClass, ProfileDims, iou
from mpdet.profile import MotionProfile, ProfileMeta, mirrored
from mpdet.synth import BackgroundSpec, ManeuverSpec, SceneSpec, render_profile

DIMS = ProfileDims(256, 256)
NO_CURVES = BackgroundSpec(curve_count=0)


def as_profile(arr, v_x=None):
    arr = np.asarray(arr)
    v_x = arr.shape[1] / 2 if v_x is None else v_x
    return MotionProfile(arr, ProfileMeta("t", v_x, 30.0))


def overtake_fixture(label, t0=100, dur=40, th=32, seed=0):
    spec = SceneSpec(DIMS, 128.0, NO_CURVES, 0.0, (ManeuverSpec(label, t0, t0 + dur, th, 1.0, 230.0),))
    return render_profile(spec, seed)


class TestGradientField:
    def test_constant_profile_zero_magnitude(self):
        field = gradient_field(as_profile(np.full((10, 12), 55, dtype=np.uint8)))
        assert not field.magnitude.any()

    def test_ramp_in_x(self):
        plane = np.tile(np.arange(0, 60, 3, dtype=np.float64), (8, 1))
        field = gradient_field(as_profile(plane))
        assert np.allclose(field.g_x, 3.0)
        assert not field.g_t.any()
        assert np.allclose(field.orientation, 0.0)

    def test_diagonal_band_at_45_degrees(self):
        # I = a*(x + t) has g_x = g_t = a, so orientation = pi/4
        t, x = np.meshgrid(np.arange(32, dtype=np.float64), np.arange(32, dtype=np.float64), indexing="ij")
        field = gradient_field(as_profile(2.0 * (x + t)))
        interior = field.orientation[1:-1, 1:-1]
        assert np.all(np.abs(interior - np.pi / 4) < 1e-6)

    def test_too_small(self):
        with pytest.raises(ProfileTooSmall):
            gradient_field(as_profile(np.zeros((2, 5), dtype=np.uint8)))

    def test_linearity_on_floats(self):
        rng = np.random.default_rng(0)
        p = rng.random((20, 30))
        q = rng.random((20, 30))
        lhs = gradient_field(as_profile(3.0 * p + 2.0 * q))
        fp, fq = gradient_field(as_profile(p)), gradient_field(as_profile(q))
        assert np.allclose(lhs.g_x, 3.0 * fp.g_x + 2.0 * fq.g_x, atol=1e-9)
        assert np.allclose(lhs.g_t, 3.0 * fp.g_t + 2.0 * fq.g_t, atol=1e-9)


class TestVerticalLaplacian:
    def test_constant_profile_is_zero(self):
        out = vertical_laplacian(as_profile(np.full((40, 16), 90, dtype=np.uint8)), (0, 8), 5)
        assert not out.any()

    def test_linear_in_t_is_zero_interior(self):
        plane = np.tile(np.arange(40, dtype=np.float64)[:, None], (1, 16))
        out = vertical_laplacian(as_profile(plane), (0, 8), 5)
        assert np.allclose(out, 0.0)

    def test_step_edge_peaks_within_k_rows(self):
        k, t0 = 5, 20
        plane = np.zeros((48, 16))
        plane[t0:] = 100.0
        out = vertical_laplacian(as_profile(plane), (0, 16), k)
        peak = int(np.argmax(np.abs(out)))
        assert abs(peak - t0) <= k
        assert np.abs(out).max() == pytest.approx(100.0)

    def test_band_permutation_invariance_integer(self):
        rng = np.random.default_rng(2)
        plane = rng.integers(0, 256, size=(60, 32), dtype=np.uint8)
        shuffled = plane[:, rng.permutation(16)].copy()
        full = np.concatenate([shuffled, plane[:, 16:]], axis=1)
        a = vertical_laplacian(as_profile(plane), (0, 16), 4)
        b = vertical_laplacian(as_profile(full), (0, 16), 4)
        assert np.array_equal(a, b)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        p, q = rng.random((40, 20)), rng.random((40, 20))
        lhs = vertical_laplacian(as_profile(2.0 * p + 0.5 * q), (4, 12), 3)
        rhs = 2.0 * vertical_laplacian(as_profile(p), (4, 12), 3) + 0.5 * vertical_laplacian(
            as_profile(q), (4, 12), 3
        )
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_bad_band(self):
        with pytest.raises(ValueError):
            vertical_laplacian(as_profile(np.zeros((40, 16), dtype=np.uint8)), (10, 10), 3)


class TestDetectClassic:
    def test_noiseless_left_overtake_detected(self):
        sample = overtake_fixture(ManeuverClass.OVERTAKE_LEFT)
        dets = detect_classic(sample.profile, 128.0, ClassicParams())
        assert len(dets) == 1
        [det] = dets
        [gt] = sample.ground_truth
        assert det.label is ManeuverClass.OVERTAKE_LEFT
        assert det.score == 1.0
        assert iou(det, gt) >= 0.3

    def test_uniform_profile_no_detections(self):
        flat = as_profile(np.full((256, 256), 64, dtype=np.uint8))
        assert detect_classic(flat, 128.0, ClassicParams()) == []

    def test_mirror_equivariance_exact(self):
        sample = overtake_fixture(ManeuverClass.OVERTAKE_LEFT, seed=4)
        dets = detect_classic(sample.profile, 128.0, ClassicParams())
        flipped = mirrored(sample.profile)
        dets_m = detect_classic(flipped, flipped.meta.v_x, ClassicParams())
        want = sorted((d.mirrored_x(256) for d in dets), key=lambda d: (d.label, d.t_min))
        got = sorted(dets_m, key=lambda d: (d.label, d.t_min))
        assert want == got
        assert got and got[0].label is ManeuverClass.OVERTAKE_RIGHT

    def test_intensity_scaling_with_scaled_thresholds(self):
        sample = overtake_fixture(ManeuverClass.OVERTAKE_RIGHT, seed=5)
        base = detect_classic(sample.profile, 128.0, ClassicParams())
        doubled = sample.profile.samples.astype(np.float64) * 2.0
        params = ClassicParams(magnitude_thresh=40.0, laplacian_thresh=16.0)
        scaled = detect_classic(as_profile(doubled, 128.0), 128.0, params)
        assert base == scaled

    def test_inward_moving_trace_ignored(self):
        # A band sweeping from the left edge toward v_x (a passing or
        # oncoming vehicle) must not be reported as an overtake.
        t0, dur, th = 100, 40, 32
        plane = np.full((256, 256), 32.0)
        tt = np.arange(t0, t0 + dur, dtype=np.float64)
        centers = (128.0 + th) / dur * (tt - t0)  # left edge -> v_x
        for i, t in enumerate(range(t0, t0 + dur)):
            a = max(0, int(np.floor(centers[i] - th / 2 + 0.5)))
            b = min(256, int(np.floor(centers[i] + th / 2 + 0.5)))
            if b > a:
                plane[t, a:b] = np.maximum(plane[t, a:b], 230.0)
        profile = as_profile(np.floor(plane + 0.5).astype(np.uint8), 128.0)
        dets = detect_classic(profile, 128.0, ClassicParams())
        assert dets == []

    def test_emits_overtakes_only(self):
        spec = SceneSpec(
            DIMS, 128.0, NO_CURVES, 0.0,
            (ManeuverSpec(ManeuverClass.LANE_LEFT, 60, 120, 6, 1.2, 230.0),),
        )
        sample = render_profile(spec, 6)
        for det in detect_classic(sample.profile, 128.0, ClassicParams()):
            assert det.label.is_overtake()


class TestClassicParams:
    def test_round_trip(self):
        params = ClassicParams(magnitude_thresh=11.0, laplacian_step=3)
        assert ClassicParams.from_dict(params.to_dict()) == params

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            ClassicParams.from_dict({"tau": 3})

    def test_validation(self):
        with pytest.raises(ValueError):
            ClassicParams(magnitude_thresh=0)
        with pytest.raises(ValueError):
            ClassicParams(band_fraction=0.7)
        with pytest.raises(ValueError):
            ClassicParams(outward_sign=0)
