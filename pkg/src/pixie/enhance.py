"""Pixel-space refinement: multi-receptive-field embedding, compacted
attention, token-driven modulation fields and the prompted residual block."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ShapeError
from .restormer import (
    ELEMENTWISE_COST,
    MdtaParams,
    conv_macs,
    mdta_cost,
    mdta_forward,
    mdta_from,
    mdta_layout,
    scale_heads,
)
from .tensor import (
    Conv2dParams,
    bicubic_resize,
    bilinear_resize,
    concat_channels,
    conv2d,
    gelu,
    pixel_shuffle,
    pixel_unshuffle,
    rms_norm,
)
from .weights import TensorSpec, conv_from, conv_specs

PATCH = 16
D_ATTN = 16
ATTN_HEADS = 4
FFN_EXPANSION = 2
MOD_HIDDEN = 4  # modulation MLP hidden width, in multiples of C
NORM_EPS = 1e-6

SCC_VARIANTS = ("full", "channel_only", "spatial_only", "none")
STRATEGIES = ("global", "patchwise", "continuous")
UPSAMPLE_MODES = ("bilinear", "bicubic")
FIELD_NAMES = ("alpha_a", "beta_a", "gamma_a", "alpha_f", "beta_f", "gamma_f")


def mrpe_widths(D: int) -> Tuple[int, int, int]:
    """Channel split 25 / 37.5 / 37.5 across the 1x1, 3x3 and 5x5 branches."""
    if D % 8:
        raise ShapeError(f"MRPE width {D} must be divisible by 8")
    return D // 4, 3 * D // 8, 3 * D // 8


@dataclass(frozen=True)
class MrpeParams:
    b1: Conv2dParams
    b3: Conv2dParams
    b5: Conv2dParams
    mix: Conv2dParams


@dataclass(frozen=True)
class SccParams:
    variant: str
    mdta: MdtaParams
    compress: Conv2dParams = None
    expand: Conv2dParams = None
    patch: int = PATCH


@dataclass(frozen=True)
class ModulationField:
    alpha_a: np.ndarray
    beta_a: np.ndarray
    gamma_a: np.ndarray
    alpha_f: np.ndarray
    beta_f: np.ndarray
    gamma_f: np.ndarray

    @classmethod
    def split(cls, full):
        C6 = full.shape[1]
        if C6 % 6:
            raise ShapeError(f"modulation field needs 6C channels, got {C6}")
        c = C6 // 6
        return cls(*(full[:, i * c:(i + 1) * c] for i in range(6)))

    @classmethod
    def zeros(cls, shape):
        return cls(*(np.zeros(shape, np.float32) for _ in range(6)))

    @property
    def shape(self):
        return self.alpha_a.shape


@dataclass(frozen=True)
class DppbParams:
    mod_fc1: Conv2dParams
    mod_fc2: Conv2dParams
    smoother: Conv2dParams
    attn_norm: np.ndarray
    ffn_norm: np.ndarray
    scc: SccParams
    ffn_fc1: Conv2dParams
    ffn_fc2: Conv2dParams
    strategy: str = "continuous"
    upsample_mode: str = "bilinear"
    patch: int = PATCH


# --------------------------------------------------------------------------
# MRPE

def mrpe_forward(x, p: MrpeParams):
    parts = [conv2d(x, p.b1), conv2d(x, p.b3), conv2d(x, p.b5)]
    return conv2d(concat_channels(parts), p.mix)


# --------------------------------------------------------------------------
# modulation

def predict_modulation(tokens, p: DppbParams):
    if tokens.shape[1] != p.mod_fc1.in_channels:
        raise ShapeError(
            f"modulation MLP expects {p.mod_fc1.in_channels} token channels, got {tokens.shape[1]}"
        )
    return conv2d(gelu(conv2d(tokens, p.mod_fc1)), p.mod_fc2)


def upsample_modulation(m, H, W, p: DppbParams):
    """Full-resolution 6C field before the channel split."""
    B, C6, hp, wp = m.shape
    P = p.patch
    if p.strategy == "global":
        pooled = m.astype(np.float64).mean(axis=(2, 3), keepdims=True).astype(np.float32)
        return np.broadcast_to(pooled, (B, C6, H, W)).copy()
    if H != P * hp or W != P * wp:
        raise ShapeError(f"target {(H, W)} is not {P} x token grid {(hp, wp)}")
    if p.strategy == "patchwise":
        return np.repeat(np.repeat(m, P, axis=2), P, axis=3)
    if p.strategy == "continuous":
        up = bicubic_resize if p.upsample_mode == "bicubic" else bilinear_resize
        return conv2d(up(m, H, W), p.smoother)
    raise ValueError(f"unknown modulation strategy {p.strategy!r}")


def build_modulation_field(m, target, p: DppbParams) -> ModulationField:
    H, W = target
    return ModulationField.split(upsample_modulation(m, H, W, p))


# --------------------------------------------------------------------------
# compacted attention

def scc_attention_forward(x, p: SccParams):
    B, C, H, W = x.shape
    P = p.patch
    if p.variant in ("full", "spatial_only") and (H % P or W % P):
        raise ShapeError(f"SCC fold needs H, W divisible by {P}, got {(H, W)}")
    if p.variant == "full":
        xc = conv2d(pixel_unshuffle(x, P), p.compress)
        return pixel_shuffle(conv2d(mdta_forward(xc, p.mdta), p.expand), P)
    if p.variant == "channel_only":
        return conv2d(mdta_forward(conv2d(x, p.compress), p.mdta), p.expand)
    if p.variant == "spatial_only":
        return pixel_shuffle(mdta_forward(pixel_unshuffle(x, P), p.mdta), P)
    if p.variant == "none":
        return mdta_forward(x, p.mdta)
    raise ValueError(f"unknown SCC variant {p.variant!r}")


def modulate(u, alpha, beta):
    return alpha * u + beta


def ffn_forward(x, p: DppbParams):
    return conv2d(gelu(conv2d(x, p.ffn_fc1)), p.ffn_fc2)


def dppb_forward(x, field: ModulationField, p: DppbParams):
    if field.shape != x.shape:
        raise ShapeError(f"field shape {field.shape} does not match features {x.shape}")
    a = scc_attention_forward(
        modulate(rms_norm(x, p.attn_norm, NORM_EPS), field.alpha_a, field.beta_a), p.scc)
    x = x + field.gamma_a * a
    f = ffn_forward(modulate(rms_norm(x, p.ffn_norm, NORM_EPS), field.alpha_f, field.beta_f), p)
    return x + field.gamma_f * f


# --------------------------------------------------------------------------
# layout and parameter assembly

def scc_inner(width, variant, s, patch=PATCH, d_attn=D_ATTN):
    """(attention width, heads) of the MDTA inside an SCC variant."""
    if variant in ("full", "channel_only"):
        return d_attn, ATTN_HEADS
    if variant == "spatial_only":
        return width * patch * patch, scale_heads(s)
    if variant == "none":
        return width, scale_heads(s)
    raise ValueError(f"unknown SCC variant {variant!r}")


def mrpe_layout(prefix, width):
    d1, d3, d5 = mrpe_widths(width)
    return (conv_specs(f"{prefix}.b1", width, d1, 1)
            + conv_specs(f"{prefix}.b3", width, d3, 3)
            + conv_specs(f"{prefix}.b5", width, d5, 5)
            + conv_specs(f"{prefix}.mix", width, width, 1))


def scc_layout(prefix, width, variant, s, d_attn=D_ATTN, patch=PATCH):
    inner, heads = scc_inner(width, variant, s, patch, d_attn)
    specs = []
    if variant == "full":
        specs += conv_specs(f"{prefix}.compress", width * patch * patch, inner, 1)
    elif variant == "channel_only":
        specs += conv_specs(f"{prefix}.compress", width, inner, 1)
    specs += mdta_layout(f"{prefix}.mdta", inner, heads)
    if variant == "full":
        specs += conv_specs(f"{prefix}.expand", inner, width * patch * patch, 1)
    elif variant == "channel_only":
        specs += conv_specs(f"{prefix}.expand", inner, width, 1)
    return specs


def dppb_layout(prefix, width, token_channels, variant, s, d_attn=D_ATTN):
    hidden = MOD_HIDDEN * width
    return (conv_specs(f"{prefix}.mod.fc1", token_channels, hidden, 1)
            + conv_specs(f"{prefix}.mod.fc2", hidden, 6 * width, 1, init="zeros")
            + conv_specs(f"{prefix}.mod.smooth", 6 * width, 6 * width, 3,
                         groups=6 * width, init="identity")
            + [TensorSpec(f"{prefix}.attn_norm.scale", (width,), "ones"),
               TensorSpec(f"{prefix}.ffn_norm.scale", (width,), "ones")]
            + scc_layout(f"{prefix}.scc", width, variant, s, d_attn)
            + conv_specs(f"{prefix}.ffn.fc1", width, FFN_EXPANSION * width, 1)
            + conv_specs(f"{prefix}.ffn.fc2", FFN_EXPANSION * width, width, 1))


def mrpe_from(store, prefix):
    return MrpeParams(
        b1=conv_from(store, f"{prefix}.b1"),
        b3=conv_from(store, f"{prefix}.b3", pad_mode="reflect"),
        b5=conv_from(store, f"{prefix}.b5", pad_mode="reflect"),
        mix=conv_from(store, f"{prefix}.mix"),
    )


def scc_from(store, prefix, variant, s, patch=PATCH):
    width = store[f"{prefix}.mdta.norm.scale"].shape[0]
    if variant in ("full", "channel_only"):
        heads = ATTN_HEADS
    else:
        heads = scale_heads(s)
    if heads > width or width % heads:
        raise ShapeError(f"{heads} heads do not divide SCC width {width}")
    has_proj = variant in ("full", "channel_only")
    return SccParams(
        variant=variant,
        mdta=mdta_from(store, f"{prefix}.mdta", heads),
        compress=conv_from(store, f"{prefix}.compress") if has_proj else None,
        expand=conv_from(store, f"{prefix}.expand") if has_proj else None,
        patch=patch,
    )


def dppb_from(store, prefix, variant, s, strategy="continuous", upsample_mode="bilinear"):
    c6 = store[f"{prefix}.mod.smooth.weight"].shape[0]
    return DppbParams(
        mod_fc1=conv_from(store, f"{prefix}.mod.fc1"),
        mod_fc2=conv_from(store, f"{prefix}.mod.fc2"),
        smoother=conv_from(store, f"{prefix}.mod.smooth", groups=c6),
        attn_norm=store[f"{prefix}.attn_norm.scale"],
        ffn_norm=store[f"{prefix}.ffn_norm.scale"],
        scc=scc_from(store, f"{prefix}.scc", variant, s),
        ffn_fc1=conv_from(store, f"{prefix}.ffn.fc1"),
        ffn_fc2=conv_from(store, f"{prefix}.ffn.fc2"),
        strategy=strategy,
        upsample_mode=upsample_mode,
    )


# --------------------------------------------------------------------------
# analytic cost

RESIZE_MACS = {"bilinear": 4, "bicubic": 16}


def mrpe_cost(B, width, h, w):
    d1, d3, d5 = mrpe_widths(width)
    return (conv_macs(B, width, d1, h, w, 1) + conv_macs(B, width, d3, h, w, 3)
            + conv_macs(B, width, d5, h, w, 5) + conv_macs(B, width, width, h, w, 1))


def scc_cost(B, width, h, w, variant, s, patch=PATCH, d_attn=D_ATTN):
    """``core`` is the attention products; ``proj`` everything else."""
    inner, heads = scc_inner(width, variant, s, patch, d_attn)
    if variant in ("full", "spatial_only"):
        ah, aw = h // patch, w // patch
    else:
        ah, aw = h, w
    m = mdta_cost(B, inner, heads, ah, aw)
    proj = m["proj"] + m["norm"]
    if variant == "full":
        proj += 2 * conv_macs(B, width * patch * patch, inner, ah, aw)
    elif variant == "channel_only":
        proj += 2 * conv_macs(B, width, inner, h, w)
    return {"core": m["core"], "proj": proj}


def dppb_cost(B, width, h, w, token_channels, variant, s, strategy="continuous",
              upsample_mode="bilinear", patch=PATCH, d_attn=D_ATTN):
    hp, wp = h // patch, w // patch
    hidden = MOD_HIDDEN * width
    mod = (conv_macs(B, token_channels, hidden, hp, wp)
           + conv_macs(B, hidden, 6 * width, hp, wp)
           + ELEMENTWISE_COST * B * hidden * hp * wp)
    if strategy == "continuous":
        mod += RESIZE_MACS[upsample_mode] * B * 6 * width * h * w
        mod += conv_macs(B, 6 * width, 6 * width, h, w, 3, 6 * width)
    sc = scc_cost(B, width, h, w, variant, s, patch, d_attn)
    norms = 2 * ELEMENTWISE_COST * B * width * h * w
    ffn = (2 * conv_macs(B, width, FFN_EXPANSION * width, h, w)
           + ELEMENTWISE_COST * B * FFN_EXPANSION * width * h * w)
    return {"modulation": mod, "core": sc["core"], "proj": sc["proj"] + norms, "ffn": ffn}
