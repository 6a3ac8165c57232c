"""Restormer-style transformer blocks and the fine-to-coarse denoise stream.

MDTA attends over channels: per head the attention map is d x d where d is
the head width, so cost grows linearly with the pixel count.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import (
    Conv2dParams,
    concat_channels,
    conv2d,
    gelu,
    matmul_batched,
    pixel_unshuffle,
    rms_norm,
    softmax_axis,
)
from .weights import TensorSpec, conv_from, conv_specs

L2_EPS = 1e-12
NORM_EPS = 1e-6
ELEMENTWISE_COST = 5  # flops per element charged for norms and softmax
GDFN_EXPANSION = 2
SCALES = 3


@dataclass(frozen=True)
class MdtaParams:
    norm: np.ndarray
    q_pw: Conv2dParams
    k_pw: Conv2dParams
    v_pw: Conv2dParams
    q_dw: Conv2dParams
    k_dw: Conv2dParams
    v_dw: Conv2dParams
    out: Conv2dParams
    temperature: np.ndarray  # (heads,)
    heads: int

    @property
    def width(self):
        return self.norm.shape[0]


@dataclass(frozen=True)
class GdfnParams:
    norm: np.ndarray
    u1_pw: Conv2dParams
    u1_dw: Conv2dParams
    u2_pw: Conv2dParams
    u2_dw: Conv2dParams
    out: Conv2dParams


@dataclass(frozen=True)
class BlockParams:
    mdta: MdtaParams
    gdfn: GdfnParams


@dataclass(frozen=True)
class DenoiseScaleParams:
    blocks: Tuple[BlockParams, BlockParams]
    in_proj: Conv2dParams = None  # scales > 1
    fuse: Tuple[Conv2dParams, Conv2dParams] = None  # scales > 1


@dataclass(frozen=True)
class DenoiseStreamParams:
    scales: List[DenoiseScaleParams]


def scale_heads(s: int) -> int:
    return 2 ** (s - 1)


# --------------------------------------------------------------------------
# forward

def _split_heads(t, heads):
    B, C, H, W = t.shape
    return t.reshape(B, heads, C // heads, H * W)


def _l2_normalize(t):
    norm = np.sqrt(np.sum(t * t, axis=-1, keepdims=True))
    return t / np.maximum(norm, np.float32(L2_EPS))


def channel_attention(q, k, v, temperature, heads, return_attention=False):
    """Per-head transposed attention on already-projected q, k, v maps.

    ``A[i, j] = softmax_i(k_i . q_j / alpha)`` is d x d; output channel j is
    ``sum_i A[i, j] v_i``.
    """
    B, C, H, W = q.shape
    qh = _l2_normalize(_split_heads(q, heads))
    kh = _l2_normalize(_split_heads(k, heads))
    vh = _split_heads(v, heads)
    logits = matmul_batched(kh, np.swapaxes(qh, -1, -2))
    logits = logits / temperature.astype(np.float32)[None, :, None, None]
    attn = softmax_axis(logits, axis=-2)
    d = C // heads
    assert attn.shape[-2:] == (d, d)
    out = matmul_batched(np.swapaxes(attn, -1, -2), vh).reshape(B, C, H, W)
    if return_attention:
        return out, attn
    return out


def mdta_forward(x, p: MdtaParams):
    if x.shape[1] != p.width:
        raise ShapeError(f"MDTA expects {p.width} channels, got {x.shape[1]}")
    y = rms_norm(x, p.norm, NORM_EPS)
    q = conv2d(conv2d(y, p.q_pw), p.q_dw)
    k = conv2d(conv2d(y, p.k_pw), p.k_dw)
    v = conv2d(conv2d(y, p.v_pw), p.v_dw)
    return conv2d(channel_attention(q, k, v, p.temperature, p.heads), p.out)


def gdfn_forward(x, p: GdfnParams):
    if x.shape[1] != p.norm.shape[0]:
        raise ShapeError(f"GDFN expects {p.norm.shape[0]} channels, got {x.shape[1]}")
    y = rms_norm(x, p.norm, NORM_EPS)
    u1 = conv2d(conv2d(y, p.u1_pw), p.u1_dw)
    u2 = conv2d(conv2d(y, p.u2_pw), p.u2_dw)
    return conv2d(gelu(u1) * u2, p.out)


def transformer_block_forward(x, mdta: MdtaParams, gdfn: GdfnParams):
    x = x + mdta_forward(x, mdta)
    return x + gdfn_forward(x, gdfn)


def denoise_stream_forward(f0, p: DenoiseStreamParams):
    """Run the three-scale stream and return the denoised map of each scale."""
    B, C, H, W = f0.shape
    if H % 4 or W % 4:
        raise ShapeError(f"denoise stream needs H, W divisible by 4, got {(H, W)}")
    outputs = []
    prev_input = None
    prev_blocks = None
    for s, sp in enumerate(p.scales, start=1):
        if s == 1:
            x = f0
        else:
            x = conv2d(pixel_unshuffle(prev_input, 2), sp.in_proj)
        prev_input = x
        block_outs = []
        for k, blk in enumerate(sp.blocks):
            x = transformer_block_forward(x, blk.mdta, blk.gdfn)
            if s > 1:
                x = conv2d(concat_channels([x, pixel_unshuffle(prev_blocks[k], 2)]), sp.fuse[k])
            block_outs.append(x)
        prev_blocks = block_outs
        outputs.append(x)
    return tuple(outputs)


# --------------------------------------------------------------------------
# layout and parameter assembly

def mdta_layout(prefix, width, heads):
    specs = [TensorSpec(f"{prefix}.norm.scale", (width,), "ones")]
    for n in "qkv":
        specs += conv_specs(f"{prefix}.{n}_pw", width, width, 1)
    for n in "qkv":
        specs += conv_specs(f"{prefix}.{n}_dw", width, width, 3, groups=width)
    specs.append(TensorSpec(f"{prefix}.temperature", (heads,), "ones"))
    specs += conv_specs(f"{prefix}.out", width, width, 1)
    return specs


def gdfn_layout(prefix, width, expansion=GDFN_EXPANSION):
    hidden = width * expansion
    specs = [TensorSpec(f"{prefix}.norm.scale", (width,), "ones")]
    for u in ("u1", "u2"):
        specs += conv_specs(f"{prefix}.{u}_pw", width, hidden, 1)
        specs += conv_specs(f"{prefix}.{u}_dw", hidden, hidden, 3, groups=hidden)
    specs += conv_specs(f"{prefix}.out", hidden, width, 1)
    return specs


def denoise_layout(C, prefix="denoise"):
    specs = []
    for s in range(1, SCALES + 1):
        width = C * 2 ** (s - 1)
        sp = f"{prefix}.s{s}"
        if s > 1:
            specs += conv_specs(f"{sp}.in_proj", 2 * width, width, 1)
        for k in (1, 2):
            specs += mdta_layout(f"{sp}.block{k}.mdta", width, scale_heads(s))
            specs += gdfn_layout(f"{sp}.block{k}.gdfn", width)
            if s > 1:
                specs += conv_specs(f"{sp}.fuse{k}", 3 * width, width, 1)
    return specs


def mdta_from(store, prefix, heads):
    width = store[f"{prefix}.norm.scale"].shape[0]
    return MdtaParams(
        norm=store[f"{prefix}.norm.scale"],
        q_pw=conv_from(store, f"{prefix}.q_pw"),
        k_pw=conv_from(store, f"{prefix}.k_pw"),
        v_pw=conv_from(store, f"{prefix}.v_pw"),
        q_dw=conv_from(store, f"{prefix}.q_dw", groups=width),
        k_dw=conv_from(store, f"{prefix}.k_dw", groups=width),
        v_dw=conv_from(store, f"{prefix}.v_dw", groups=width),
        out=conv_from(store, f"{prefix}.out"),
        temperature=store[f"{prefix}.temperature"],
        heads=heads,
    )


def gdfn_from(store, prefix):
    hidden = store[f"{prefix}.u1_pw.weight"].shape[0]
    return GdfnParams(
        norm=store[f"{prefix}.norm.scale"],
        u1_pw=conv_from(store, f"{prefix}.u1_pw"),
        u1_dw=conv_from(store, f"{prefix}.u1_dw", groups=hidden),
        u2_pw=conv_from(store, f"{prefix}.u2_pw"),
        u2_dw=conv_from(store, f"{prefix}.u2_dw", groups=hidden),
        out=conv_from(store, f"{prefix}.out"),
    )


def denoise_from(store, prefix="denoise"):
    scales = []
    for s in range(1, SCALES + 1):
        sp = f"{prefix}.s{s}"
        blocks = tuple(
            BlockParams(mdta_from(store, f"{sp}.block{k}.mdta", scale_heads(s)),
                        gdfn_from(store, f"{sp}.block{k}.gdfn"))
            for k in (1, 2)
        )
        if s == 1:
            scales.append(DenoiseScaleParams(blocks))
        else:
            scales.append(DenoiseScaleParams(
                blocks,
                in_proj=conv_from(store, f"{sp}.in_proj"),
                fuse=(conv_from(store, f"{sp}.fuse1"), conv_from(store, f"{sp}.fuse2")),
            ))
    return DenoiseStreamParams(scales)


# --------------------------------------------------------------------------
# analytic cost, in multiply-adds

def conv_macs(B, cin, cout, h, w, k=1, groups=1):
    return B * cout * h * w * (cin // groups) * k * k


def mdta_cost(B, width, heads, h, w):
    """MACs split into ``proj`` (convolutions), ``core`` (the two attention
    products) and ``norm`` (rms norm, q/k l2 norm, softmax)."""
    hw = h * w
    d = width // heads
    proj = 4 * conv_macs(B, width, width, h, w) + 3 * conv_macs(B, width, width, h, w, 3, width)
    core = 2 * B * heads * d * d * hw
    norm = ELEMENTWISE_COST * (B * width * hw + 2 * B * width * hw + B * heads * d * d)
    return {"proj": proj, "core": core, "norm": norm}


def gdfn_cost(B, width, h, w, expansion=GDFN_EXPANSION):
    hidden = width * expansion
    proj = (2 * conv_macs(B, width, hidden, h, w)
            + 2 * conv_macs(B, hidden, hidden, h, w, 3, hidden)
            + conv_macs(B, hidden, width, h, w))
    return {"proj": proj, "norm": ELEMENTWISE_COST * B * width * h * w}


def denoise_cost(B, C, H, W):
    """Returns ``{"core": ..., "other": ...}`` for the whole stream."""
    core = other = 0
    for s in range(1, SCALES + 1):
        width = C * 2 ** (s - 1)
        h, w = H // 2 ** (s - 1), W // 2 ** (s - 1)
        if s > 1:
            other += conv_macs(B, 2 * width, width, h, w)
            other += 2 * conv_macs(B, 3 * width, width, h, w)
        for _ in range(2):
            m = mdta_cost(B, width, scale_heads(s), h, w)
            g = gdfn_cost(B, width, h, w)
            core += m["core"]
            other += m["proj"] + m["norm"] + g["proj"] + g["norm"]
    return {"core": core, "other": other}
