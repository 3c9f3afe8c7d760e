import numpy as np
import pytest

from mpdet.nn.ops import (
    ConvLayer,
    ShapeMismatch,
    bce_with_logits,
    conv2d_backward,
    conv2d_forward,
    coord_channels,
    inflate_weights,
    leaky_relu,
    leaky_relu_grad,
    resize_bilinear,
    sigmoid,
)


def conv_reference(x, layer):
    """Six-nested-loop oracle for strided, zero-padded cross-correlation."""
    if layer.coordconv:
        b, _, h, w = x.shape
        coords = np.broadcast_to(coord_channels(h, w, x.dtype), (b, 2, h, w))
        x = np.concatenate([x, coords], axis=1)
    w_arr, bias, s, p = layer.weights, layer.bias, layer.stride, layer.padding
    bsz, c_in, h, w = x.shape
    c_out, _, k, _ = w_arr.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    out = np.zeros((bsz, c_out, ho, wo), dtype=np.float64)
    for n in range(bsz):
        for o in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(c_in):
                        for u in range(k):
                            for v in range(k):
                                acc += xp[n, c, i * s + u, j * s + v] * w_arr[o, c, u, v]
                    out[n, o, i, j] = acc + bias[o]
    return out


def numeric_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function over array x."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        out[i] = (hi - lo) / (2 * h)
    return grad


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def random_layer(rng, c_in, c_out, k, stride, padding, coordconv=False):
    total_in = c_in + (2 if coordconv else 0)
    return ConvLayer(
        weights=rng.standard_normal((c_out, total_in, k, k)),
        bias=rng.standard_normal(c_out),
        stride=stride,
        padding=padding,
        coordconv=coordconv,
    )


class TestCoordChannels:
    def test_x_axis_endpoints(self):
        grid = coord_channels(2, 3)
        assert np.array_equal(grid[0][0], [0.0, 0.5, 1.0])

    def test_degenerate_height(self):
        grid = coord_channels(1, 4)
        assert np.all(grid[1] == 0.0)

    def test_two_by_two(self):
        grid = coord_channels(2, 2)
        assert np.array_equal(grid[0], [[0, 1], [0, 1]])
        assert np.array_equal(grid[1], [[0, 0], [1, 1]])


class TestConvForward:
    def test_one_by_one_kernel_scales(self):
        layer = ConvLayer(weights=np.full((1, 1, 1, 1), 2.0), bias=np.zeros(1))
        out = conv2d_forward(np.full((1, 1, 1, 1), 3.0), layer)
        assert out.item() == 6.0

    def test_all_ones_two_by_two(self):
        layer = ConvLayer(weights=np.ones((1, 1, 2, 2)), bias=np.zeros(1))
        out = conv2d_forward(np.ones((1, 1, 2, 2)), layer)
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == 4.0

    @pytest.mark.parametrize("stride,padding,coordconv", [
        (1, 0, False), (1, 1, False), (2, 1, False), (2, 1, True), (1, 0, True),
    ])
    def test_matches_loop_nest_oracle(self, stride, padding, coordconv):
        rng = np.random.default_rng(hash((stride, padding, coordconv)) % 2**32)
        x = rng.standard_normal((1, 3, 8, 8))
        layer = random_layer(rng, 3, 4, 3, stride, padding, coordconv)
        got = conv2d_forward(x, layer)
        want = conv_reference(x, layer)
        assert got.shape == want.shape
        assert rel_err(got, want) < 1e-12

    def test_channel_mismatch(self):
        layer = ConvLayer(weights=np.ones((1, 2, 3, 3)), bias=np.zeros(1))
        with pytest.raises(ShapeMismatch):
            conv2d_forward(np.ones((1, 3, 8, 8)), layer)

    def test_output_spatial_size(self):
        rng = np.random.default_rng(0)
        layer = random_layer(rng, 1, 1, 3, 2, 1)
        out = conv2d_forward(np.zeros((1, 1, 9, 13)), layer)
        # floor((in + 2p - k)/s) + 1
        assert out.shape[2:] == ((9 + 2 - 3) // 2 + 1, (13 + 2 - 3) // 2 + 1)


class TestConvBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 3, 6, 6))
        layer = random_layer(rng, 3, 2, 3, 1, 1)
        y = conv2d_forward(x, layer)
        gx, gw, gb = conv2d_backward(x, layer, np.zeros_like(y))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_one_by_one_closed_form(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 1, 4, 4))
        layer = random_layer(rng, 1, 1, 1, 1, 0)
        up = rng.standard_normal((1, 1, 4, 4))
        _, gw, gb = conv2d_backward(x, layer, up)
        assert gw.item() == pytest.approx((x * up).sum(), rel=1e-12)
        assert gb.item() == pytest.approx(up.sum(), rel=1e-12)

    @pytest.mark.parametrize("case", range(10))
    def test_matches_finite_differences(self, case):
        rng = np.random.default_rng(100 + case)
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        coordconv = bool(case % 2)
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        x = rng.standard_normal((2, c_in, 6, 6))
        layer = random_layer(rng, c_in, c_out, 3, stride, padding, coordconv)
        up = rng.standard_normal(conv2d_forward(x, layer).shape)

        def loss():
            return float((conv2d_forward(x, layer) * up).sum())

        gx, gw, gb = conv2d_backward(x, layer, up)
        assert rel_err(gx, numeric_gradient(loss, x)) < 1e-6
        assert rel_err(gw, numeric_gradient(loss, layer.weights)) < 1e-6
        assert rel_err(gb, numeric_gradient(loss, layer.bias)) < 1e-6

    def test_bad_grad_shape(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 1, 6, 6))
        layer = random_layer(rng, 1, 1, 3, 2, 1)
        with pytest.raises(ShapeMismatch):
            conv2d_backward(x, layer, np.zeros((1, 1, 9, 9)))


class TestLeakyRelu:
    def test_forward_values(self):
        assert leaky_relu(np.array(5.0)) == 5.0
        assert leaky_relu(np.array(-10.0)) == pytest.approx(-1.0)

    def test_backward_slope(self):
        assert leaky_relu_grad(np.array(-2.0)) == pytest.approx(0.1)
        assert leaky_relu_grad(np.array(3.0)) == 1.0
        assert leaky_relu_grad(np.array(0.0)) == pytest.approx(0.1)

    def test_gradient_check_away_from_zero(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 5))
        x[np.abs(x) < 0.1] = 0.5  # keep the kink out of the stencil
        up = rng.standard_normal((3, 5))

        def loss():
            return float((leaky_relu(x) * up).sum())

        analytic = leaky_relu_grad(x) * up
        assert rel_err(analytic, numeric_gradient(loss, x)) < 1e-6


class TestInflateWeights:
    def test_mean_of_2_4_6_is_4(self):
        weights = np.array([2.0, 4.0, 6.0]).reshape(1, 3, 1, 1)
        layer = ConvLayer(weights=weights, bias=np.zeros(1))
        inflated = inflate_weights(layer)
        assert inflated.weights.shape == (1, 5, 1, 1)
        assert inflated.weights[0, 3, 0, 0] == 4.0
        assert inflated.weights[0, 4, 0, 0] == 4.0
        assert np.array_equal(inflated.weights[:, :3], weights)

    def test_constant_weights_stay_constant(self):
        layer = ConvLayer(weights=np.full((2, 4, 3, 3), 0.7), bias=np.zeros(2))
        inflated = inflate_weights(layer)
        assert np.all(inflated.weights == 0.7)

    def test_random_kernel_matches_sequential_mean_oracle(self):
        rng = np.random.default_rng(5)
        weights = rng.standard_normal((2, 5, 3, 3))
        inflated = inflate_weights(ConvLayer(weights=weights, bias=np.zeros(2)))
        for o in range(2):
            for u in range(3):
                for v in range(3):
                    acc = 0.0
                    for c in range(5):
                        acc = acc + weights[o, c, u, v]
                    mean = acc / 5
                    assert inflated.weights[o, 5, u, v] == mean
                    assert inflated.weights[o, 6, u, v] == mean

    def test_output_shape_unchanged_after_conversion(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((1, 3, 16, 16))
        layer = random_layer(rng, 3, 4, 3, 2, 1)
        inflated = inflate_weights(layer)
        assert inflated.coordconv
        assert conv2d_forward(x, inflated).shape == conv2d_forward(x, layer).shape

    def test_rejects_double_inflation(self):
        layer = ConvLayer(weights=np.ones((1, 3, 1, 1)), bias=np.zeros(1), coordconv=True)
        with pytest.raises(ValueError):
            inflate_weights(layer)


class TestMisc:
    def test_sigmoid_stable(self):
        assert sigmoid(np.array(0.0)) == 0.5
        assert sigmoid(np.array(800.0)) == 1.0
        assert sigmoid(np.array(-800.0)) == 0.0

    def test_bce_at_half(self):
        assert bce_with_logits(np.array(0.0), np.array(1.0)) == pytest.approx(np.log(2))

    def test_resize_same_size_is_identity(self):
        rng = np.random.default_rng(7)
        img = rng.integers(0, 256, size=(32, 48), dtype=np.uint8)
        out = resize_bilinear(img, 32, 48)
        assert np.array_equal(out, img.astype(np.float32))

    def test_resize_constant_image(self):
        img = np.full((30, 20), 77, dtype=np.uint8)
        out = resize_bilinear(img, 256, 256)
        assert out.shape == (256, 256)
        assert np.allclose(out, 77)

    def test_resize_downscale_means(self):
        img = np.zeros((4, 4), dtype=np.float32)
        img[:, 2:] = 100
        out = resize_bilinear(img, 2, 2)
        assert out.shape == (2, 2)
        assert out[0, 0] < out[0, 1]
