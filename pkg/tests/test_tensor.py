import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import naive_conv, rand, rel_err
from pixie import kernels
from pixie.errors import ShapeError, UnsupportedError
from pixie.tensor import (
    Conv2dParams, area_resize, bicubic_resize, bilinear_resize, concat_channels, conv2d,
    elementwise_map, gelu, matmul_batched, pixel_shuffle, pixel_unshuffle, rms_norm, softmax_axis,
)

BACKENDS = sorted(kernels.BACKENDS)


# -------------------------------------------------------------- conv2d

def test_pointwise_unit_kernel_is_identity():
    x = rand((2, 1, 5, 7), 0)
    out = conv2d(x, Conv2dParams(np.ones((1, 1, 1, 1), np.float32)))
    assert np.array_equal(out, x)


def test_all_ones_3x3_counts_neighbours():
    out = conv2d(np.ones((1, 1, 3, 3), np.float32),
                 Conv2dParams(np.ones((1, 1, 3, 3), np.float32), padding=1))
    expect = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], np.float32)
    assert np.array_equal(out[0, 0], expect)


def test_depthwise_channels_are_independent():
    x = np.concatenate([np.ones((1, 1, 6, 6)), 2 * np.ones((1, 1, 6, 6))], axis=1).astype(np.float32)
    p = Conv2dParams(np.ones((2, 1, 3, 3), np.float32), padding=1, groups=2)
    out = conv2d(x, p)
    assert np.array_equal(out[0, 1], 2 * out[0, 0])


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("cin,cout,k,stride,pad,groups,mode", [
    (3, 8, 3, 1, 1, 1, "zeros"),
    (8, 8, 3, 1, 1, 8, "zeros"),
    (8, 4, 1, 1, 0, 1, "zeros"),
    (4, 6, 5, 1, 2, 1, "reflect"),
    (4, 4, 3, 2, 1, 2, "reflect"),
])
def test_conv_matches_loop_oracle(backend, cin, cout, k, stride, pad, groups, mode):
    x = rand((2, cin, 16, 16), 1)
    w = rand((cout, cin // groups, k, k), 2)
    b = rand((cout,), 3)
    p = Conv2dParams(w, b, stride, pad, groups, mode)
    got = conv2d(x, p, backend=backend)
    assert rel_err(got, naive_conv(x, w, b, stride, pad, groups, mode)) <= 1e-5


def test_backends_are_bit_identical():
    x = rand((2, 8, 20, 24), 4)
    for groups, k, stride in ((1, 3, 1), (8, 3, 1), (1, 1, 1), (2, 5, 2)):
        w = rand((8, 8 // groups, k, k), 5)
        p = Conv2dParams(w, rand((8,), 6), stride, k // 2, groups)
        outs = [conv2d(x, p, backend=b) for b in BACKENDS]
        assert all(np.array_equal(outs[0], o) for o in outs[1:])
    a, b = rand((3, 7, 40), 7), rand((3, 40, 5), 8)
    mms = [matmul_batched(a, b, backend=bk) for bk in BACKENDS]
    assert all(np.array_equal(mms[0], m) for m in mms[1:])


def test_conv_errors():
    with pytest.raises(ShapeError):
        conv2d(np.zeros((1, 3, 4, 4), np.float32), Conv2dParams(np.zeros((2, 4, 1, 1), np.float32)))
    with pytest.raises(UnsupportedError):
        conv2d(np.zeros((1, 1, 2, 2), np.float32),
               Conv2dParams(np.zeros((1, 1, 5, 5), np.float32), padding=2, pad_mode="reflect"))


def test_conv_is_deterministic():
    x = rand((1, 4, 12, 12), 9)
    p = Conv2dParams(rand((4, 4, 3, 3), 10), padding=1)
    assert np.array_equal(conv2d(x, p), conv2d(x, p))


# -------------------------------------------------------------- shuffle

def test_unshuffle_declared_order():
    x = np.array([[[[1, 2], [3, 4]]]], np.float32)
    assert pixel_unshuffle(x, 2).ravel().tolist() == [1, 2, 3, 4]
    assert np.array_equal(pixel_shuffle(np.arange(1, 5, dtype=np.float32).reshape(1, 4, 1, 1), 2), x)


def test_unit_factor_is_identity():
    x = rand((2, 3, 4, 6), 11)
    assert np.array_equal(pixel_unshuffle(x, 1), x)
    assert np.array_equal(pixel_shuffle(x, 1), x)


def test_shuffle_errors():
    with pytest.raises(ShapeError):
        pixel_unshuffle(np.zeros((1, 1, 3, 4), np.float32), 2)
    with pytest.raises(ShapeError):
        pixel_shuffle(np.zeros((1, 3, 2, 2), np.float32), 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31))
def test_shuffle_roundtrips(r, c, hb, wb, seed):
    x = rand((1, c, hb * r, wb * r), seed)
    assert np.array_equal(pixel_shuffle(pixel_unshuffle(x, r), r), x)
    y = rand((1, c * r * r, hb, wb), seed + 1)
    assert np.array_equal(pixel_unshuffle(pixel_shuffle(y, r), r), y)


# -------------------------------------------------------------- resize

def test_bilinear_golden_rows():
    up = bilinear_resize(np.array([[[[0, 1]]]], np.float32), 1, 4)
    assert np.allclose(up.ravel(), [0, 0.25, 0.75, 1.0], atol=1e-7)
    down = bilinear_resize(np.array([[[[0, 1 / 3, 2 / 3, 1]]]], np.float32), 1, 2)
    assert np.allclose(down.ravel(), [1 / 6, 5 / 6], atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(-100, 100, width=32), st.integers(1, 9), st.integers(1, 9), st.integers(1, 20), st.integers(1, 20))
def test_resizes_keep_constants_exact(v, h, w, oh, ow):
    x = np.full((1, 2, h, w), v, np.float32)
    assert np.all(bilinear_resize(x, oh, ow) == np.float32(v))
    assert np.all(bicubic_resize(x, oh, ow) == np.float32(v))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10, width=32), min_size=2, max_size=9), st.integers(1, 30))
def test_bilinear_preserves_monotone_rows(vals, ow):
    row = np.sort(np.array(vals, np.float32))[None, None, None, :]
    out = bilinear_resize(row, 1, ow).ravel()
    assert np.all(np.diff(out) >= 0)


def test_bicubic_identity_and_overshoot():
    x = rand((1, 2, 5, 7), 12)
    assert np.array_equal(bicubic_resize(x, 5, 7), x)
    row = np.array([[[[0, 0, 1, 0, 0]]]], np.float32)
    assert (bicubic_resize(row, 1, 10) < 0).any()


def test_area_resize():
    assert area_resize(np.array([[[[1, 2], [3, 4]]]], np.float32), 2).item() == 2.5
    x = rand((1, 3, 4, 4), 13)
    assert np.array_equal(area_resize(x, 1), x)
    with pytest.raises(ShapeError):
        area_resize(np.zeros((1, 1, 3, 3), np.float32), 2)


# -------------------------------------------------------------- softmax, norm, matmul

def test_softmax_golden():
    assert np.allclose(softmax_axis(np.zeros((1, 2), np.float32)), [[0.5, 0.5]])
    assert np.allclose(softmax_axis(np.array([[math.log(2), 0]], np.float32)), [[2 / 3, 1 / 3]], atol=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50), st.integers(0, 3))
def test_softmax_sums_to_one_and_shift_invariant(seed, shift, axis):
    x = rand((2, 3, 4, 5), seed, -20, 20)
    s = softmax_axis(x, axis)
    assert np.allclose(s.sum(axis=axis), 1.0, atol=1e-6)
    assert np.allclose(softmax_axis(x + np.float32(shift), axis), s, atol=1e-6)


def test_rms_norm_golden_and_properties():
    x = np.array([3, 4], np.float32).reshape(1, 2, 1, 1)
    got = rms_norm(x, np.ones(2), eps=0.0).ravel()
    assert np.allclose(got, np.array([3, 4]) / math.sqrt(12.5), atol=1e-7)
    assert np.array_equal(rms_norm(np.zeros((1, 3, 2, 2), np.float32), np.ones(3)), np.zeros((1, 3, 2, 2)))
    y = rand((2, 5, 3, 3), 14)
    assert np.array_equal(rms_norm(y, 2 * np.ones(5)), 2 * rms_norm(y, np.ones(5)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_rms_norm_output_has_unit_rms(seed):
    y = rms_norm(rand((1, 6, 4, 4), seed, 0.5, 3.0), np.ones(6))
    assert np.allclose(np.sqrt(np.mean(y.astype(np.float64) ** 2, axis=1)), 1.0, atol=1e-5)


def test_matmul_golden_and_associativity():
    a = np.array([[1, 2], [3, 4]], np.float32)
    assert matmul_batched(a, np.array([[5], [6]], np.float32)).tolist() == [[17], [39]]
    x = rand((3, 4, 6), 15)
    assert np.array_equal(matmul_batched(np.broadcast_to(np.eye(4, dtype=np.float32), (3, 4, 4)), x), x)
    A, B = rand((4, 4), 16), rand((4, 4), 17)
    for j in range(4):
        e = np.zeros((4, 1), np.float32)
        e[j] = 1
        assert np.allclose(matmul_batched(matmul_batched(A, B), e), matmul_batched(A, matmul_batched(B, e)), atol=1e-6)
    with pytest.raises(ShapeError):
        matmul_batched(rand((2, 3), 0), rand((2, 3), 1))


# -------------------------------------------------------------- concat, elementwise

def test_concat_order_and_roundtrip():
    a, b = rand((2, 2, 3, 3), 18), rand((2, 3, 3, 3), 19)
    c = concat_channels([a, b])
    assert c.shape == (2, 5, 3, 3)
    assert np.array_equal(c[:, 2], b[:, 0])
    assert np.array_equal(c[:, :2], a) and np.array_equal(c[:, 2:], b)
    assert np.array_equal(concat_channels([a]), a)
    with pytest.raises(ShapeError):
        concat_channels([a, rand((2, 1, 4, 3), 20)])


def test_elementwise():
    assert gelu(np.float32(0)) == 0
    assert abs(float(gelu(np.float32(-1))) + 0.15866) < 1e-5
    x = rand((1, 2, 3, 3), 21)
    assert np.array_equal(elementwise_map("add", x, np.zeros_like(x)), x)
    assert np.array_equal(elementwise_map("mul", x, np.ones_like(x)), x)
    assert np.array_equal(elementwise_map("gelu", x), gelu(x))
    with pytest.raises(ShapeError):
        elementwise_map("add", x, x[:, :1])


@pytest.mark.parametrize("flag,expect", [("numpy", "numpy"), ("numba", "numba"), ("gpu", None)])
def test_backend_env_flag(flag, expect):
    import os
    import subprocess
    import sys
    env = dict(os.environ, PIXIE_BACKEND=flag)
    proc = subprocess.run([sys.executable, "-c", "import pixie; print(pixie.BACKEND)"],
                          env=env, capture_output=True, text=True)
    if expect is None:
        assert proc.returncode != 0 and "PIXIE_BACKEND" in proc.stderr
    else:
        assert proc.stdout.strip() == expect
