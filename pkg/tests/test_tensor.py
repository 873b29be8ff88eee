import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfsynth.gradcheck import numeric_grad, rel_error
from lfsynth.tensor import (ConvLayer, DimensionError, conv2d_backward, conv2d_forward,
                            output_size, relu_backward, relu_forward)


def brute_conv(x, kernel, bias):
    k = kernel.shape[0]
    h, w = x.shape[0] - k + 1, x.shape[1] - k + 1
    out = np.zeros((h, w, kernel.shape[3]))
    for r in range(h):
        for c in range(w):
            window = x[r:r + k, c:c + k]
            for o in range(kernel.shape[3]):
                out[r, c, o] = np.sum(window * kernel[..., o]) + bias[o]
    return out


def test_ones_window_sums_to_nine():
    layer = ConvLayer(np.ones((3, 3, 1, 1)), np.zeros(1))
    out = conv2d_forward(np.ones((3, 3, 1)), layer)
    assert out.shape == (1, 1, 1) and out[0, 0, 0] == 9.0


def test_identity_kernel(rng):
    x = rng.random((5, 7, 1))
    out = conv2d_forward(x, ConvLayer(np.ones((1, 1, 1, 1)), np.zeros(1)))
    assert np.array_equal(out, x)


@given(k=st.sampled_from([1, 3, 5]), h=st.integers(5, 9), w=st.integers(5, 9),
       cin=st.integers(1, 3), cout=st.integers(1, 3), seed=st.integers(0, 2 ** 16))
@settings(max_examples=30, deadline=None)
def test_forward_matches_brute_force(k, h, w, cin, cout, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((h, w, cin))
    kernel = r.standard_normal((k, k, cin, cout))
    bias = r.standard_normal(cout)
    out = conv2d_forward(x, ConvLayer(kernel, bias))
    assert out.shape == (h - k + 1, w - k + 1, cout)
    np.testing.assert_allclose(out, brute_conv(x, kernel, bias), rtol=1e-12, atol=1e-12)


def test_default_patch_shrinks_to_48():
    assert output_size(60, (7, 5, 3, 1)) == 48
    assert output_size(48, (7, 5, 3, 1)) == 36


def test_zero_grad_out_gives_zero_gradients(rng):
    x = rng.random((6, 6, 2))
    layer = ConvLayer(rng.random((3, 3, 2, 2)), rng.random(2))
    gx, gk, gb = conv2d_backward(x, layer, np.zeros((4, 4, 2)))
    assert not gx.any() and not gk.any() and not gb.any()


def test_scalar_chain_rule():
    layer = ConvLayer(np.full((1, 1, 1, 1), 0.7), np.zeros(1))
    _, gk, gb = conv2d_backward(np.full((1, 1, 1), 3.0), layer, np.full((1, 1, 1), 2.0))
    assert gk[0, 0, 0, 0] == 6.0 and gb[0] == 2.0


def test_backward_matches_finite_differences(rng):
    x = rng.standard_normal((8, 8, 2))
    layer = ConvLayer(rng.standard_normal((3, 3, 2, 2)), rng.standard_normal(2))
    weight = rng.standard_normal((6, 6, 2))

    def f():
        return float(np.sum(conv2d_forward(x, layer) * weight))

    gx, gk, gb = conv2d_backward(x, layer, weight)
    assert rel_error(gx, numeric_grad(f, x, 1e-3)) < 1e-4
    assert rel_error(gk, numeric_grad(f, layer.kernel, 1e-3)) < 1e-4
    assert rel_error(gb, numeric_grad(f, layer.bias, 1e-3)) < 1e-4


def test_input_gradient_can_be_skipped(rng):
    x = rng.random((6, 6, 2))
    layer = ConvLayer(rng.random((3, 3, 2, 1)), rng.random(1))
    gx, gk, _ = conv2d_backward(x, layer, np.ones((4, 4, 1)), need_input_grad=False)
    assert gx is None
    assert np.array_equal(gk, conv2d_backward(x, layer, np.ones((4, 4, 1)))[1])


def test_float32_stays_float32(rng):
    x = rng.random((6, 6, 2), dtype=np.float32)
    layer = ConvLayer(rng.random((3, 3, 2, 1), dtype=np.float32), np.zeros(1, np.float32))
    out = conv2d_forward(x, layer)
    assert out.dtype == np.float32
    assert all(g.dtype == np.float32 for g in conv2d_backward(x, layer, out))


def test_shape_errors(rng):
    layer = ConvLayer(rng.random((3, 3, 2, 1)), np.zeros(1))
    with pytest.raises(DimensionError):
        conv2d_forward(rng.random((6, 6, 3)), layer)
    with pytest.raises(DimensionError):
        conv2d_forward(rng.random((2, 6, 2)), layer)
    with pytest.raises(DimensionError):
        conv2d_backward(rng.random((6, 6, 2)), layer, np.zeros((3, 3, 1)))
    with pytest.raises(DimensionError):
        ConvLayer(np.zeros((2, 2, 1, 1)), np.zeros(1))
    with pytest.raises(DimensionError):
        ConvLayer(np.zeros((3, 3, 1, 2)), np.zeros(1))


def test_relu_values():
    np.testing.assert_array_equal(relu_forward(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    x = np.array([0.5, 3.0])
    np.testing.assert_array_equal(relu_forward(x), x)
    np.testing.assert_array_equal(relu_backward(np.array([-1.0, 2.0]), np.array([5.0, 5.0])), [0, 5])
    assert relu_backward(np.array([0.0]), np.array([1.0]))[0] == 0
