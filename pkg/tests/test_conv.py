import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavedepth.conv import (
    ConvSpec,
    WaveHeadSpec,
    activate,
    conv2d_dense,
    conv2d_sparse,
    dilate,
    run_chain,
    wave_head,
)
from wavedepth.errors import ChannelMismatch, ShapeMismatch
from wavedepth.flops import MacReport


def brute_conv(x, spec):
    """Direct float64 loop over output pixels, zero padding outside the image."""
    x = np.asarray(x, np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    h, w, _ = x.shape
    r = spec.k // 2
    out = np.zeros((h, w, spec.c_out))
    for y in range(h):
        for xx in range(w):
            for o in range(spec.c_out):
                acc = float(spec.bias[o])
                for c in range(spec.c_in):
                    for ky in range(spec.k):
                        for kx in range(spec.k):
                            yy, xs = y + ky - r, xx + kx - r
                            if 0 <= yy < h and 0 <= xs < w:
                                acc += spec.weights[o, c, ky, kx] * x[yy, xs, c]
                out[y, xx, o] = acc
    return activate(out.astype(np.float32), spec.activation, spec.slope)


def test_identity_kernel(rng):
    x = rng.normal(size=(6, 7, 2)).astype(np.float32)
    spec = ConvSpec.zeros(2, 2, 3)
    spec.weights[0, 0, 1, 1] = spec.weights[1, 1, 1, 1] = 1
    np.testing.assert_array_equal(conv2d_dense(x, spec), x)


def test_single_pixel_all_ones_kernel():
    spec = ConvSpec(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
    assert conv2d_dense(np.array([[2.5]], np.float32), spec).item() == 2.5


def test_zero_weights_give_bias():
    spec = ConvSpec(np.zeros((2, 3, 3, 3), np.float32), np.array([1.5, -2], np.float32))
    out = conv2d_dense(np.ones((4, 5, 3), np.float32), spec)
    assert np.all(out[..., 0] == 1.5) and np.all(out[..., 1] == -2)


@pytest.mark.parametrize("activation", ["linear", "sigmoid", "leaky_relu", "elu"])
@pytest.mark.parametrize("k", [1, 3, 5])
def test_dense_matches_brute_force(rng, activation, k):
    x = rng.normal(size=(7, 6, 3)).astype(np.float32)
    spec = ConvSpec.random(rng, 3, 2, k, activation)
    np.testing.assert_allclose(conv2d_dense(x, spec), brute_conv(x, spec), rtol=1e-5, atol=1e-5)


def test_activations():
    z = np.array([-2.0, 0.0, 3.0], np.float32)
    np.testing.assert_array_equal(activate(z, "leaky_relu", 0.1), np.float32([-0.2, 0, 3]))
    np.testing.assert_allclose(activate(z, "elu"), [np.expm1(-2), 0, 3], rtol=1e-6)
    np.testing.assert_allclose(activate(z, "sigmoid"), 1 / (1 + np.exp(-z.astype(float))), rtol=1e-6)


def test_sparse_all_ones_is_dense(rng):
    x = rng.normal(size=(9, 8, 4)).astype(np.float32)
    spec = ConvSpec.random(rng, 4, 3, 3, "elu")
    assert np.array_equal(conv2d_sparse(x, spec, np.ones((9, 8), bool)), conv2d_dense(x, spec))


def test_sparse_random_mask_matches_dense(rng):
    x = rng.normal(size=(16, 16, 3)).astype(np.float32)
    spec = ConvSpec.random(rng, 3, 4, 3, "sigmoid")
    mask = rng.random((16, 16)) < 0.3
    report = MacReport()
    sparse = conv2d_sparse(x, spec, mask, report)
    dense = conv2d_dense(x, spec)
    assert np.array_equal(sparse[mask], dense[mask])
    assert not sparse[~mask].any()
    assert report.layers[0].mac_sparse == mask.sum() * (3 * 9 + 1) * 4


def test_empty_mask(rng):
    spec = ConvSpec.random(rng, 2, 2, 3, "sigmoid")
    report = MacReport()
    out = conv2d_sparse(np.ones((5, 5, 2), np.float32), spec, np.zeros((5, 5), bool), report)
    assert not out.any()
    assert report.total_sparse == 0


def test_conv_errors(rng):
    spec = ConvSpec.random(rng, 2, 2, 3)
    with pytest.raises(ChannelMismatch):
        conv2d_dense(np.zeros((4, 4, 3), np.float32), spec)
    with pytest.raises(ShapeMismatch):
        conv2d_sparse(np.zeros((4, 4, 2), np.float32), spec, np.ones((4, 5), bool))
    with pytest.raises(ShapeMismatch):
        ConvSpec(np.zeros((1, 1, 2, 2)), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        ConvSpec(np.zeros((2, 1, 3, 3)), np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_property_sparse_dense_bitwise(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 12, size=2)
    c_in, c_out = rng.integers(1, 5, size=2)
    k = int(rng.choice([1, 3, 5]))
    act = str(rng.choice(["linear", "sigmoid", "leaky_relu", "elu"]))
    x = rng.normal(size=(h, w, c_in)).astype(np.float32)
    spec = ConvSpec.random(rng, c_in, c_out, k, act)
    mask = rng.random((h, w)) < rng.random()
    out = conv2d_sparse(x, spec, mask)
    assert np.array_equal(out[mask], conv2d_dense(x, spec)[mask])


def test_dilate():
    m = np.zeros((5, 5), bool)
    m[0, 0] = True
    d = dilate(m, 1)
    assert d.sum() == 4 and d[:2, :2].all()


def test_chain_sparse_equals_dense_on_mask(rng):
    x = rng.normal(size=(12, 10, 4)).astype(np.float32)
    chain = [ConvSpec.random(rng, 4, 5, 1, "leaky_relu"), ConvSpec.random(rng, 5, 3, 3, "elu"),
             ConvSpec.random(rng, 3, 2, 3)]
    mask = rng.random((12, 10)) < 0.2
    sparse = run_chain(x, chain, mask)
    dense = run_chain(x, chain)
    assert np.array_equal(sparse[mask], dense[mask])


def _two_sigmoid(rng, c, same=False):
    plus = [ConvSpec.random(rng, c, c, 1, "leaky_relu"), ConvSpec.random(rng, c, 3, 3, "sigmoid")]
    minus = plus if same else [ConvSpec.random(rng, c, c, 1, "leaky_relu"),
                               ConvSpec.random(rng, c, 3, 3, "sigmoid")]
    return WaveHeadSpec("two_sigmoid_difference", plus, minus)


def test_identical_branches_give_zero(rng):
    f = rng.normal(size=(8, 8, 4)).astype(np.float32)
    lvl = wave_head(f, _two_sigmoid(rng, 4, same=True))
    assert all(not b.any() for b in lvl.bands())


def test_two_sigmoid_saturation_and_bounds():
    c = 2
    big = ConvSpec(np.zeros((3, c, 3, 3), np.float32), np.full(3, 60, np.float32), "sigmoid")
    small = ConvSpec(np.zeros((3, c, 3, 3), np.float32), np.full(3, -60, np.float32), "sigmoid")
    head = WaveHeadSpec("two_sigmoid_difference", [big], [small])
    lvl = wave_head(np.zeros((4, 4, c), np.float32), head)
    for b in lvl.bands():
        assert np.all(b < 1) and np.all(b > 0.999)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 50))
def test_property_two_sigmoid_open_interval(seed, gain):
    rng = np.random.default_rng(seed)
    head = _two_sigmoid(rng, 3)
    f = (rng.normal(size=(6, 6, 3)) * gain).astype(np.float32)
    for b in wave_head(f, head).bands():
        assert np.all(np.abs(b) < 1)


def test_linear_head_selects_channels(rng):
    f = rng.normal(size=(6, 5, 6)).astype(np.float32)
    spec = ConvSpec.zeros(6, 3, 3)
    for o, c in enumerate((4, 0, 2)):
        spec.weights[o, c, 1, 1] = 1
    lvl = wave_head(f, WaveHeadSpec("linear", [spec]))
    np.testing.assert_array_equal(lvl.lh, f[:, :, 4])
    np.testing.assert_array_equal(lvl.hl, f[:, :, 0])
    np.testing.assert_array_equal(lvl.hh, conv2d_dense(f, spec)[:, :, 2])


def test_head_masked_matches_dense_and_counts(rng):
    f = rng.normal(size=(10, 12, 4)).astype(np.float32)
    head = _two_sigmoid(rng, 4)
    mask = rng.random((10, 12)) < 0.25
    report = MacReport()
    sparse = wave_head(f, head, mask, report)
    dense = wave_head(f, head)
    for s, d in zip(sparse.bands(), dense.bands()):
        assert np.array_equal(s[mask], d[mask])
        assert not s[~mask].any()
    # final 3x3 layers evaluate exactly the mask, 1x1 layers its 3x3 dilation
    finals = [c for c in report.layers if c.name.endswith("(2)")]
    firsts = [c for c in report.layers if c.name.endswith("(1)")]
    assert all(c.active == mask.sum() for c in finals)
    assert all(c.active == dilate(mask, 1).sum() for c in firsts)


def test_head_validation(rng):
    with pytest.raises(ValueError):
        WaveHeadSpec("cubic", [ConvSpec.zeros(2, 3)])
    with pytest.raises(ShapeMismatch):
        WaveHeadSpec("linear", [ConvSpec.zeros(2, 4)])
    with pytest.raises(ValueError):
        WaveHeadSpec("two_sigmoid_difference", [ConvSpec.zeros(2, 3)], [ConvSpec.zeros(2, 3)])
    with pytest.raises(ChannelMismatch):
        wave_head(np.zeros((4, 4, 3), np.float32), WaveHeadSpec("linear", [ConvSpec.zeros(2, 3)]))
