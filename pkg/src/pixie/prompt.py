"""Semantic token grids: PIXT files, a deterministic offline generator,
per-scale resizing and layer concatenation.

PIXT (little-endian)::

    b"PIXT"  u32 version=1  u32 L  u32 D_d  u32 H_p  u32 W_p  u32 B
    u32 layer_index[L]
    L grids of B*D_d*H_p*W_p float32, each (b, c, h, w) row-major
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from . import rng
from .errors import FormatError, LengthError, ShapeError
from .tensor import area_resize, concat_channels

MAGIC = b"PIXT"
VERSION = 1
PATCH = 16
DEFAULT_LAYERS = (2, 5, 8, 11)
DEFAULT_TOKEN_DIM = 384


@dataclass(frozen=True)
class PromptSet:
    layers: Tuple[int, ...]
    grids: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.layers) < 1 or len(self.layers) != len(self.grids):
            raise ShapeError(f"{len(self.layers)} layer indices for {len(self.grids)} grids")
        ref = self.grids[0].shape
        for g in self.grids:
            if g.ndim != 4 or g.shape != ref:
                raise ShapeError(f"token grids disagree in shape: {g.shape} vs {ref}")

    @property
    def token_dim(self):
        return self.grids[0].shape[1]

    @property
    def grid_shape(self):
        return self.grids[0].shape[2:]

    @property
    def batch(self):
        return self.grids[0].shape[0]

    def equals(self, other) -> bool:
        return self.layers == other.layers and all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.grids, other.grids)
        )


@dataclass(frozen=True)
class SyntheticPromptConfig:
    seed: int = 0
    token_dim: int = DEFAULT_TOKEN_DIM
    layers: Tuple[int, ...] = field(default=DEFAULT_LAYERS)


def encode_prompts(p: PromptSet) -> bytes:
    B, D, hp, wp = p.grids[0].shape
    L = len(p.layers)
    head = MAGIC + struct.pack("<6I", VERSION, L, D, hp, wp, B)
    table = struct.pack(f"<{L}I", *p.layers)
    return head + table + b"".join(g.astype("<f4").tobytes() for g in p.grids)


def decode_prompts(data: bytes) -> PromptSet:
    if data[:4] != MAGIC:
        raise FormatError("not a PIXT file (bad magic)")
    if len(data) < 28:
        raise LengthError(f"PIXT header needs 28 bytes, file has {len(data)}")
    version, L, D, hp, wp, B = struct.unpack_from("<6I", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported PIXT version {version}")
    if L < 1:
        raise ShapeError("PIXT file declares zero layers")
    table_end = 28 + 4 * L
    if len(data) < table_end:
        raise LengthError(f"PIXT layer table truncated ({len(data)} < {table_end} bytes)")
    layers = struct.unpack_from(f"<{L}I", data, 28)
    n = B * D * hp * wp
    expected = table_end + 4 * n * L
    if len(data) < expected:
        have = (len(data) - table_end) // max(4 * n, 1)
        raise LengthError(f"header declares {L} grids of {n} floats, payload holds {have}")
    if len(data) > expected:
        raise LengthError(f"{len(data) - expected} trailing bytes after PIXT payload")
    payload = np.frombuffer(data, dtype="<f4", count=n * L, offset=table_end)
    grids = tuple(payload[i * n:(i + 1) * n].astype(np.float32).reshape(B, D, hp, wp)
                  for i in range(L))
    return PromptSet(tuple(int(i) for i in layers), grids)


def save_prompts(p: PromptSet, path):
    Path(path).write_bytes(encode_prompts(p))


def load_prompts(path) -> PromptSet:
    return decode_prompts(Path(path).read_bytes())


def patch_descriptors(image, patch=PATCH):
    """Per patch and channel: mean, std, mean horizontal and vertical forward
    difference. Returns (B, 4*C, H/patch, W/patch), stats grouped by kind."""
    image = np.asarray(image, dtype=np.float64)
    B, C, H, W = image.shape
    if H % patch or W % patch:
        raise ShapeError(f"image {(H, W)} not divisible by patch {patch}; pad it first")
    hp, wp = H // patch, W // patch
    blocks = image.reshape(B, C, hp, patch, wp, patch).transpose(0, 1, 2, 4, 3, 5)
    mean = blocks.mean(axis=(-2, -1))
    std = blocks.std(axis=(-2, -1))
    gx = np.diff(blocks, axis=-1).mean(axis=(-2, -1))
    gy = np.diff(blocks, axis=-2).mean(axis=(-2, -1))
    return np.concatenate([mean, std, gx, gy], axis=1)


def synth_prompts(image, cfg: SyntheticPromptConfig) -> PromptSet:
    """Offline stand-in for a frozen ViT encoder.

    Each layer projects the patch descriptors with its own +-1 matrix drawn
    from the SplitMix64 stream keyed by (seed, layer index).
    """
    if cfg.token_dim < 1:
        raise ShapeError("token_dim must be >= 1")
    desc = patch_descriptors(image)
    B, F, hp, wp = desc.shape
    flat = desc.transpose(0, 2, 3, 1).reshape(-1, F)
    grids = []
    for layer in cfg.layers:
        proj = rng.signs(rng.stream_state(cfg.seed, f"prompt.layer{layer}"), (cfg.token_dim, F))
        tokens = flat @ proj.astype(np.float64).T
        grids.append(tokens.reshape(B, hp, wp, cfg.token_dim).transpose(0, 3, 1, 2)
                     .astype(np.float32))
    return PromptSet(tuple(cfg.layers), tuple(np.ascontiguousarray(g) for g in grids))


def resize_prompts_for_scale(p: PromptSet, s: int) -> PromptSet:
    factor = 2 ** (s - 1)
    hp, wp = p.grid_shape
    if hp % factor or wp % factor:
        raise ShapeError(f"token grid {(hp, wp)} not divisible by {factor} for scale {s}")
    if factor == 1:
        return p
    return PromptSet(p.layers, tuple(area_resize(g, factor) for g in p.grids))


def concat_prompt_layers(p: PromptSet):
    return concat_channels(list(p.grids))
