"""Binary PPM (P6) and PGM (P5) codecs, maxval 255 only."""
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError, UnsupportedError

_WS = b" \t\n\r\v\f"


def _parse_header(data, magic):
    if data[:2] != magic:
        raise FormatError(f"expected {magic.decode()} magic, got {data[:2]!r}")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise LengthError("header ended early")
        c = data[pos:pos + 1]
        if c in _WS:
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            start = pos
            while pos < len(data) and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise FormatError(f"bad header token {tok!r}")
            tokens.append(int(tok))
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise FormatError("header must end with a single whitespace byte")
    width, height, maxval = tokens
    if maxval != 255:
        raise UnsupportedError(f"only maxval 255 is supported, got {maxval}")
    return width, height, pos + 1


def decode_ppm(data: bytes):
    """Returns a (1, 3, H, W) float32 tensor scaled to [0, 1]."""
    w, h, start = _parse_header(data, b"P6")
    n = w * h * 3
    payload = data[start:start + n]
    if len(payload) < n:
        raise LengthError(f"pixel payload has {len(payload)} bytes, expected {n}")
    px = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return (px.transpose(2, 0, 1)[None].astype(np.float32) / np.float32(255.0))


def to_bytes(values):
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def encode_ppm(image) -> bytes:
    image = np.asarray(image)
    if image.ndim == 4:
        image = image[0]
    if image.ndim != 3 or image.shape[0] != 3:
        raise FormatError(f"PPM needs a (3, H, W) image, got {image.shape}")
    _, h, w = image.shape
    px = to_bytes(image).transpose(1, 2, 0)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + px.tobytes()


def encode_pgm(plane) -> bytes:
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise FormatError(f"PGM needs a 2-D plane, got {plane.shape}")
    h, w = plane.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + to_bytes(plane).tobytes()


def decode_pgm(data: bytes):
    w, h, start = _parse_header(data, b"P5")
    payload = data[start:start + w * h]
    if len(payload) < w * h:
        raise LengthError(f"pixel payload has {len(payload)} bytes, expected {w * h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.float32) / np.float32(255.0)


def read_ppm(path):
    return decode_ppm(Path(path).read_bytes())


def write_ppm(path, image):
    Path(path).write_bytes(encode_ppm(image))


def write_pgm(path, plane):
    Path(path).write_bytes(encode_pgm(plane))
