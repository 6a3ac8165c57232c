"""Named tensor storage, the PIXW binary format, and layout helpers.

PIXW (little-endian)::

    b"PIXW"  u32 version=1  u32 tensor_count
    repeated: u32 name_len, utf-8 name, u8 dtype (0 = f32), u8 rank,
              u32 dims[rank], float32 payload in row-major order
"""
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError, ShapeError
from .tensor import Conv2dParams

MAGIC = b"PIXW"
VERSION = 1
DTYPE_F32 = 0


class WeightStore:
    """Ordered name -> float32 array mapping; iteration follows insertion."""

    def __init__(self, items=()):
        self._tensors = OrderedDict()
        for name, arr in items:
            self.add(name, arr)

    def add(self, name, arr):
        if name in self._tensors:
            raise ValueError(f"duplicate tensor name {name!r}")
        self._tensors[name] = np.ascontiguousarray(arr, dtype=np.float32)

    def __getitem__(self, name):
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"weight store has no tensor {name!r}") from None

    def __setitem__(self, name, arr):
        if name not in self._tensors:
            raise KeyError(f"weight store has no tensor {name!r}")
        old = self._tensors[name]
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.shape != old.shape:
            raise ShapeError(f"{name}: shape {arr.shape} != stored {old.shape}")
        self._tensors[name] = arr

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors.items())

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def num_elements(self):
        return sum(int(a.size) for a in self._tensors.values())

    def copy(self):
        return WeightStore((n, a.copy()) for n, a in self)

    def equals(self, other) -> bool:
        """Bit-level equality including name order."""
        if self.names() != other.names():
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for (_, a), (_, b) in zip(self, other)
        )


def encode_weights(store: WeightStore) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, arr in store:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise LengthError(
                f"truncated file: need {n} bytes for {what} at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_weights(data: bytes) -> WeightStore:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("not a PIXW file (bad magic)")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported PIXW version {version}")
    store = WeightStore()
    for i in range(count):
        if r.pos == len(data):
            raise LengthError(f"header declares {count} tensors, file holds {i}")
        (name_len,) = r.unpack("<I", "name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"tensor {i}: name is not valid UTF-8") from exc
        dtype, rank = r.unpack("<BB", f"{name} dtype/rank")
        if dtype != DTYPE_F32:
            raise FormatError(f"{name}: unsupported dtype code {dtype}")
        dims = r.unpack(f"<{rank}I", f"{name} dims")
        n = int(np.prod(dims, dtype=np.int64))
        payload = r.take(4 * n, f"{name} payload")
        store.add(name, np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims))
    if r.pos != len(data):
        raise LengthError(f"{len(data) - r.pos} trailing bytes after {count} tensors")
    return store


def save_weights(store: WeightStore, path):
    Path(path).write_bytes(encode_weights(store))


def load_weights(path) -> WeightStore:
    return decode_weights(Path(path).read_bytes())


# --------------------------------------------------------------------------
# layout: the declarative list of tensors a network owns

@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple
    init: str = "uniform"  # uniform | zeros | ones | identity
    fan_in: int = 1

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=np.int64))


def conv_specs(name, cin, cout, k=1, groups=1, init="uniform"):
    fan = (cin // groups) * k * k
    bias_init = "uniform" if init == "uniform" else "zeros"
    return [
        TensorSpec(f"{name}.weight", (cout, cin // groups, k, k), init, fan),
        TensorSpec(f"{name}.bias", (cout,), bias_init, fan),
    ]


def conv_from(store, name, padding=None, groups=1, pad_mode="zeros"):
    w = store[f"{name}.weight"]
    k = w.shape[-1]
    return Conv2dParams(
        weight=w,
        bias=store[f"{name}.bias"],
        padding=k // 2 if padding is None else padding,
        groups=groups,
        pad_mode=pad_mode,
    )
