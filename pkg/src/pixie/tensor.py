"""Dense NCHW float32 primitives.

Tensors are plain ``numpy.ndarray`` objects of rank 4 in (batch, channel,
height, width) order. Every function returns a new float32 array and never
mutates its inputs.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import ShapeError, UnsupportedError


def _as4(x, name="input"):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank 4 (B, C, H, W), got shape {x.shape}")
    return x.astype(np.float32, copy=False)


@dataclass(frozen=True)
class Conv2dParams:
    weight: np.ndarray  # (C_out, C_in / groups, k, k)
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0
    groups: int = 1
    pad_mode: str = "zeros"

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[-1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups


def pad2d(x, padding, mode="zeros"):
    if padding == 0:
        return x
    if mode == "zeros":
        return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if mode == "reflect":
        if padding >= x.shape[2] or padding >= x.shape[3]:
            raise UnsupportedError(
                f"reflect padding {padding} needs spatial dims > {padding}, got {x.shape[2:]}"
            )
        return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), mode="reflect")
    raise UnsupportedError(f"unknown pad mode {mode!r}")


def conv2d(x, p: Conv2dParams, backend=None):
    x = _as4(x)
    w = p.weight
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv weight must be (C_out, C_in/g, k, k), got {w.shape}")
    cout, cin_g, k, _ = w.shape
    if p.groups < 1 or x.shape[1] % p.groups or cout % p.groups:
        raise ShapeError(f"groups={p.groups} must divide C_in={x.shape[1]} and C_out={cout}")
    if x.shape[1] // p.groups != cin_g:
        raise ShapeError(
            f"input has {x.shape[1]} channels, weight expects {cin_g * p.groups}"
        )
    if p.bias is not None and p.bias.shape != (cout,):
        raise ShapeError(f"bias shape {p.bias.shape} does not match C_out={cout}")
    xp = pad2d(x, p.padding, p.pad_mode)
    if xp.shape[2] < k or xp.shape[3] < k:
        raise ShapeError(f"padded input {xp.shape[2:]} smaller than kernel {k}")
    out = kernels.conv2d_raw(xp, w, p.stride, p.groups, backend=backend)
    if p.bias is not None:
        out += p.bias.astype(np.float32)[None, :, None, None]
    return out


def pixel_unshuffle(x, r: int):
    """Space-to-depth; output channel ``c*r*r + dy*r + dx``."""
    x = _as4(x)
    B, C, H, W = x.shape
    if r < 1 or H % r or W % r:
        raise ShapeError(f"spatial dims {(H, W)} not divisible by r={r}")
    y = x.reshape(B, C, H // r, r, W // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y.reshape(B, C * r * r, H // r, W // r))


def pixel_shuffle(x, r: int):
    x = _as4(x)
    B, C, H, W = x.shape
    if r < 1 or C % (r * r):
        raise ShapeError(f"channels {C} not divisible by r^2={r * r}")
    y = x.reshape(B, C // (r * r), r, r, H, W).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(B, C // (r * r), H * r, W * r))


def _source_coords(n_in, n_out):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(src, 0.0, n_in - 1)


def _linear_axis(x, n_out, axis):
    n_in = x.shape[axis]
    src = _source_coords(n_in, n_out)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    shape = [1] * x.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    a = np.take(x, i0, axis=axis)
    b = np.take(x, i1, axis=axis)
    # a + f*(b - a) keeps constant runs exact
    return a + frac * (b - a)


def bilinear_resize(x, out_h: int, out_w: int):
    """Half-pixel-centre bilinear resize with edge clamp; rows then columns."""
    x = _as4(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {(out_h, out_w)}")
    y = _linear_axis(x.astype(np.float64), out_h, 2)
    y = _linear_axis(y, out_w, 3)
    return y.astype(np.float32)


def _catmull_rom(t):
    """Weights for taps at offsets -1, 0, 1, 2 (a = -0.5)."""
    a = -0.5
    d = [1.0 + t, t, 1.0 - t, 2.0 - t]
    ws = []
    for dist in d:
        near = ((a + 2.0) * dist - (a + 3.0)) * dist * dist + 1.0
        far = ((a * dist - 5.0 * a) * dist + 8.0 * a) * dist - 4.0 * a
        ws.append(np.where(dist <= 1.0, near, far))
    return ws


def _cubic_axis(x, n_out, axis):
    n_in = x.shape[axis]
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    t = src - base
    ws = _catmull_rom(t)
    shape = [1] * x.ndim
    shape[axis] = n_out
    center = np.take(x, np.clip(base, 0, n_in - 1), axis=axis)
    out = center.copy()
    for offset, w in zip((-1, 0, 1, 2), ws):
        if offset == 0:
            continue
        tap = np.take(x, np.clip(base + offset, 0, n_in - 1), axis=axis)
        out += w.reshape(shape) * (tap - center)
    return out


def bicubic_resize(x, out_h: int, out_w: int):
    """Catmull-Rom (a = -0.5) resize, half-pixel centres, clamped taps."""
    x = _as4(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {(out_h, out_w)}")
    y = _cubic_axis(x.astype(np.float64), out_h, 2)
    y = _cubic_axis(y, out_w, 3)
    return y.astype(np.float32)


def area_resize(x, factor: int):
    x = _as4(x)
    B, C, H, W = x.shape
    if factor < 1 or H % factor or W % factor:
        raise ShapeError(f"spatial dims {(H, W)} not divisible by factor {factor}")
    if factor == 1:
        return x.copy()
    blocks = x.astype(np.float64).reshape(B, C, H // factor, factor, W // factor, factor)
    return blocks.mean(axis=(3, 5)).astype(np.float32)


def softmax_axis(x, axis=-1):
    x = np.asarray(x, dtype=np.float32)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def rms_norm(x, scale, eps=1e-6):
    """Normalise over channels at every pixel, then apply a per-channel gain."""
    x = _as4(x)
    scale = np.asarray(scale, dtype=np.float32)
    if scale.shape != (x.shape[1],):
        raise ShapeError(f"scale length {scale.shape} does not match C={x.shape[1]}")
    ms = np.mean(x * x, axis=1, keepdims=True)
    inv = np.float32(1.0) / np.sqrt(ms + np.float32(eps))
    return (x * inv) * scale[None, :, None, None]


def matmul_batched(a, b, backend=None):
    """Matrix products over leading batch dims; k summed sequentially."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.ndim < 2 or b.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    lead = a.shape[:-2]
    m, k = a.shape[-2:]
    n = b.shape[-1]
    out = kernels.matmul_raw(a.reshape(-1, m, k), b.reshape(-1, k, n), backend=backend)
    return out.reshape(*lead, m, n)


def concat_channels(parts: Sequence[np.ndarray]):
    parts = [_as4(p, "part") for p in parts]
    if not parts:
        raise ShapeError("nothing to concatenate")
    ref = parts[0].shape
    for p in parts[1:]:
        if p.shape[0] != ref[0] or p.shape[2:] != ref[2:]:
            raise ShapeError(f"cannot concatenate {p.shape} with {ref} along channels")
    return np.concatenate(parts, axis=1)


def gelu(x):
    x = np.asarray(x, dtype=np.float32)
    xd = x.astype(np.float64)
    return (0.5 * xd * (1.0 + erf(xd / np.sqrt(2.0)))).astype(np.float32)


def add(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"add of mismatched shapes {np.shape(a)} and {np.shape(b)}")
    return np.add(a, b, dtype=np.float32)


def mul(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"mul of mismatched shapes {np.shape(a)} and {np.shape(b)}")
    return np.multiply(a, b, dtype=np.float32)


_UNARY = {"gelu": gelu}
_BINARY = {"add": add, "mul": mul}


def elementwise_map(op, *args):
    if op in _UNARY and len(args) == 1:
        return _UNARY[op](args[0])
    if op in _BINARY and len(args) == 2:
        return _BINARY[op](*args)
    raise ValueError(f"unknown elementwise op {op!r} with {len(args)} operand(s)")
