"""Full network assembly: configuration, deterministic initialisation,
forward pass and analytic parameter / multiply-add accounting."""
import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from typing import List, Tuple

import numpy as np

from . import rng
from .enhance import (
    ATTN_HEADS,
    SCC_VARIANTS,
    STRATEGIES,
    UPSAMPLE_MODES,
    DppbParams,
    MrpeParams,
    build_modulation_field,
    dppb_cost,
    dppb_forward,
    dppb_from,
    dppb_layout,
    mrpe_cost,
    mrpe_forward,
    mrpe_from,
    mrpe_layout,
    predict_modulation,
)
from .errors import ConfigError, ShapeError
from .prompt import DEFAULT_LAYERS, DEFAULT_TOKEN_DIM, PromptSet, concat_prompt_layers, resize_prompts_for_scale
from .restormer import (
    SCALES,
    DenoiseStreamParams,
    conv_macs,
    denoise_cost,
    denoise_from,
    denoise_layout,
    denoise_stream_forward,
)
from .tensor import Conv2dParams, concat_channels, conv2d, pixel_shuffle
from .weights import TensorSpec, WeightStore, conv_from, conv_specs

IMAGE_CHANNELS = 3
# 5e8 float32 weights is ~2 GB; larger stores are refused rather than
# swapping the host to death (spatial-only SCC crosses this at any legal C)
MAX_INIT_PARAMS = 500_000_000


@dataclass(frozen=True)
class PipelineConfig:
    base_channels: int = 32
    patch: int = 16
    dppb_per_scale: int = 4
    d_attn: int = 16
    layers: Tuple[int, ...] = field(default=DEFAULT_LAYERS)
    token_dim: int = DEFAULT_TOKEN_DIM
    scales: int = SCALES
    strategy: str = "continuous"
    upsample_mode: str = "bilinear"
    scc_variant: str = "full"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(i) for i in self.layers))
        self.validate()

    def validate(self):
        if self.base_channels < 8 or self.base_channels % 8:
            raise ConfigError(f"base_channels must be a positive multiple of 8, got {self.base_channels}")
        if self.patch != 16:
            raise ConfigError(f"patch size is fixed at 16, got {self.patch}")
        if self.scales != SCALES:
            raise ConfigError(f"only {SCALES} scales are supported, got {self.scales}")
        if self.dppb_per_scale < 1:
            raise ConfigError("dppb_per_scale must be >= 1")
        if self.d_attn < ATTN_HEADS or self.d_attn % ATTN_HEADS:
            raise ConfigError(f"d_attn must be a multiple of {ATTN_HEADS}, got {self.d_attn}")
        if not self.layers:
            raise ConfigError("at least one prompt layer is required")
        if self.token_dim < 1:
            raise ConfigError("token_dim must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.upsample_mode not in UPSAMPLE_MODES:
            raise ConfigError(f"upsample_mode must be one of {UPSAMPLE_MODES}, got {self.upsample_mode!r}")
        if self.scc_variant not in SCC_VARIANTS:
            raise ConfigError(f"scc_variant must be one of {SCC_VARIANTS}, got {self.scc_variant!r}")

    @property
    def token_channels(self):
        return len(self.layers) * self.token_dim

    @property
    def min_divisor(self):
        return 2 ** (self.scales - 1) * self.patch

    def to_json(self):
        d = asdict(self)
        d["layers"] = list(self.layers)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


def scale_width(cfg, s):
    return cfg.base_channels * 2 ** (s - 1)


def layout(cfg: PipelineConfig) -> List[TensorSpec]:
    C = cfg.base_channels
    specs = conv_specs("stem", IMAGE_CHANNELS, C, 3)
    specs += denoise_layout(C)
    for s in range(1, cfg.scales + 1):
        width = scale_width(cfg, s)
        specs += mrpe_layout(f"enhance.s{s}.mrpe", width)
        for n in range(1, cfg.dppb_per_scale + 1):
            specs += dppb_layout(f"enhance.s{s}.dppb{n}", width, cfg.token_channels,
                                 cfg.scc_variant, s, cfg.d_attn)
    fused = C + C // 2 + C // 4
    specs += conv_specs("fusion.conv1", fused, C, 3)
    specs += conv_specs("fusion.conv2", C, IMAGE_CHANNELS, 3, init="zeros")
    return specs


def _init_tensor(spec: TensorSpec, seed):
    if spec.init == "uniform":
        bound = 1.0 / math.sqrt(spec.fan_in)
        return rng.uniform(rng.stream_state(seed, spec.name), spec.shape, bound)
    if spec.init == "zeros":
        return np.zeros(spec.shape, np.float32)
    if spec.init == "ones":
        return np.ones(spec.shape, np.float32)
    if spec.init == "identity":
        w = np.zeros(spec.shape, np.float32)
        k = spec.shape[-1]
        w[..., k // 2, k // 2] = 1.0
        return w
    raise ValueError(f"unknown init kind {spec.init!r}")


def init_weights(cfg: PipelineConfig, max_params=MAX_INIT_PARAMS) -> WeightStore:
    """Uniform(-a, a), a = 1/sqrt(fan_in), one SplitMix64 stream per tensor.

    Exempt: modulation output layers and the residual head start at zero,
    smoothers at the identity kernel, norm gains and temperatures at one.
    """
    cfg.validate()
    specs = layout(cfg)
    total = sum(s.size for s in specs)
    if total > max_params:
        raise ConfigError(
            f"{cfg.scc_variant} at C={cfg.base_channels} needs {total:,} weights, "
            f"over the materialisation limit of {max_params:,}; use count_params / count_flops"
        )
    return WeightStore((s.name, _init_tensor(s, cfg.seed)) for s in specs)


def check_weights(store: WeightStore, cfg: PipelineConfig):
    """Raise ConfigError naming the first tensor that disagrees with ``cfg``."""
    specs = layout(cfg)
    expected = OrderedDict((s.name, s.shape) for s in specs)
    for name, arr in store:
        if name not in expected:
            raise ConfigError(f"weight {name!r} is not part of this config (C={cfg.base_channels}, "
                              f"scc={cfg.scc_variant}, N={cfg.dppb_per_scale})")
        if tuple(arr.shape) != tuple(expected[name]):
            raise ConfigError(f"weight {name!r} has shape {tuple(arr.shape)}, config expects "
                              f"{tuple(expected[name])} (C={cfg.base_channels})")
    missing = [n for n in expected if n not in store]
    if missing:
        raise ConfigError(f"weights missing {len(missing)} tensors, first {missing[0]!r}")


@dataclass(frozen=True)
class Network:
    stem: Conv2dParams
    denoise: DenoiseStreamParams
    mrpe: Tuple[MrpeParams, ...]
    dppb: Tuple[Tuple[DppbParams, ...], ...]
    fusion: Tuple[Conv2dParams, Conv2dParams]


def build_network(store: WeightStore, cfg: PipelineConfig) -> Network:
    check_weights(store, cfg)
    mrpe, dppb = [], []
    for s in range(1, cfg.scales + 1):
        mrpe.append(mrpe_from(store, f"enhance.s{s}.mrpe"))
        dppb.append(tuple(
            dppb_from(store, f"enhance.s{s}.dppb{n}", cfg.scc_variant, s,
                      cfg.strategy, cfg.upsample_mode)
            for n in range(1, cfg.dppb_per_scale + 1)
        ))
    return Network(
        stem=conv_from(store, "stem"),
        denoise=denoise_from(store),
        mrpe=tuple(mrpe),
        dppb=tuple(dppb),
        fusion=(conv_from(store, "fusion.conv1"), conv_from(store, "fusion.conv2")),
    )


def pipeline_forward(image, weights, prompts: PromptSet, cfg: PipelineConfig,
                     return_intermediates=False):
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 4 or image.shape[1] != IMAGE_CHANNELS:
        raise ShapeError(f"image must be (B, 3, H, W), got {image.shape}")
    B, _, H, W = image.shape
    d = cfg.min_divisor
    if H % d or W % d:
        raise ShapeError(f"H, W must be multiples of {d}, got {(H, W)}")
    if prompts.grid_shape != (H // cfg.patch, W // cfg.patch):
        raise ShapeError(f"prompt grid {prompts.grid_shape} does not match image "
                         f"{(H, W)} / {cfg.patch}")
    if prompts.batch != B:
        raise ShapeError(f"prompt batch {prompts.batch} != image batch {B}")
    if prompts.token_dim * len(prompts.layers) != cfg.token_channels:
        raise ShapeError(f"prompts carry {len(prompts.layers)} x {prompts.token_dim} channels, "
                         f"config expects {cfg.token_channels}")
    net = weights if isinstance(weights, Network) else build_network(weights, cfg)

    f0 = conv2d(image, net.stem)
    denoised = denoise_stream_forward(f0, net.denoise)
    refined = []
    for s in range(1, cfg.scales + 1):
        tokens = concat_prompt_layers(resize_prompts_for_scale(prompts, s))
        x = mrpe_forward(denoised[s - 1], net.mrpe[s - 1])
        for blk in net.dppb[s - 1]:
            m = predict_modulation(tokens, blk)
            x = dppb_forward(x, build_modulation_field(m, x.shape[2:], blk), blk)
        refined.append(x)
    fused = concat_channels([refined[0], pixel_shuffle(refined[1], 2), pixel_shuffle(refined[2], 4)])
    residual = conv2d(conv2d(fused, net.fusion[0]), net.fusion[1])
    out = image + residual
    if return_intermediates:
        return out, {"f0": f0, "denoised": denoised, "refined": tuple(refined),
                     "residual": residual}
    return out


# --------------------------------------------------------------------------
# accounting

STAGES = ("stem", "denoise", "denoise-attn-core", "mrpe", "dppb-modulation",
          "dppb-attn-core", "dppb-projections", "ffn", "fusion")
PARAM_GROUPS = ("stem", "denoise", "mrpe", "dppb-modulation", "dppb-attention", "ffn", "fusion")


def _param_group(name):
    head = name.split(".")
    if head[0] in ("stem", "denoise", "fusion"):
        return head[0]
    if head[2] == "mrpe":
        return "mrpe"
    part = head[3]
    if part == "mod":
        return "dppb-modulation"
    if part in ("scc", "attn_norm"):
        return "dppb-attention"
    return "ffn"


def count_params(cfg: PipelineConfig):
    """Exact per-group and total parameter counts (no tensors allocated)."""
    counts = OrderedDict((g, 0) for g in PARAM_GROUPS)
    for spec in layout(cfg):
        counts[_param_group(spec.name)] += spec.size
    counts["total"] = sum(counts[g] for g in PARAM_GROUPS)
    return counts


def count_flops(cfg: PipelineConfig, H, W, B=1):
    """Closed-form multiply-add counts per stage.

    Convolutions cost B*C_out*H'*W'*(C_in/groups)*k^2, matrix products the
    product of their dims, norms and softmax 5 per element, resizes 4
    (bilinear) or 16 (bicubic) per output element. The attention products
    are reported apart from everything else around them.
    """
    d = cfg.min_divisor
    if H % d or W % d:
        raise ShapeError(f"H, W must be multiples of {d}, got {(H, W)}")
    C = cfg.base_channels
    macs = OrderedDict((s, 0) for s in STAGES)
    macs["stem"] = conv_macs(B, IMAGE_CHANNELS, C, H, W, 3)
    den = denoise_cost(B, C, H, W)
    macs["denoise"] = den["other"]
    macs["denoise-attn-core"] = den["core"]
    for s in range(1, cfg.scales + 1):
        width = scale_width(cfg, s)
        h, w = H // 2 ** (s - 1), W // 2 ** (s - 1)
        macs["mrpe"] += mrpe_cost(B, width, h, w)
        for _ in range(cfg.dppb_per_scale):
            c = dppb_cost(B, width, h, w, cfg.token_channels, cfg.scc_variant, s,
                          cfg.strategy, cfg.upsample_mode, cfg.patch, cfg.d_attn)
            macs["dppb-modulation"] += c["modulation"]
            macs["dppb-attn-core"] += c["core"]
            macs["dppb-projections"] += c["proj"]
            macs["ffn"] += c["ffn"]
    fused = C + C // 2 + C // 4
    macs["fusion"] = conv_macs(B, fused, C, H, W, 3) + conv_macs(B, C, IMAGE_CHANNELS, H, W, 3)
    macs["total"] = sum(macs[s] for s in STAGES)
    return macs
