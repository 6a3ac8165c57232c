"""Full-reference quality metrics and the patch-seam diagnostic."""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ShapeError

SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare shapes {a.shape} and {b.shape}")
    return a, b


def psnr(a, b, peak=1.0) -> float:
    """PSNR in dB; ``math.inf`` when the inputs are identical."""
    a, b = _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(a, b) -> float:
    """Mean SSIM of the channel-mean grayscale images (NCHW inputs).

    8x8 uniform windows at stride 1 with reflected borders, unit dynamic range.
    """
    a, b = _same_shape(a, b)
    if a.ndim != 4:
        raise ShapeError(f"ssim expects (B, C, H, W), got {a.shape}")
    x = a.mean(axis=1)
    y = b.mean(axis=1)
    size = (1, SSIM_WINDOW, SSIM_WINDOW)
    mx = uniform_filter(x, size, mode="reflect")
    my = uniform_filter(y, size, mode="reflect")
    sxx = uniform_filter(x * x, size, mode="reflect") - mx * mx
    syy = uniform_filter(y * y, size, mode="reflect") - my * my
    sxy = uniform_filter(x * y, size, mode="reflect") - mx * my
    num = (2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    per_channel_psnr: Tuple[float, ...]


def compare(a, b, peak=1.0) -> MetricReport:
    a, b = _same_shape(a, b)
    per = tuple(psnr(a[:, c], b[:, c], peak) for c in range(a.shape[1]))
    return MetricReport(psnr(a, b, peak), ssim(a, b), per)


def seam_energy_ratio(field, P: int) -> float:
    """Mean |neighbour difference| over pairs straddling a P-grid line,
    divided by the same mean over pairs inside a patch.

    Returns 1.0 when both are zero and ``math.inf`` when only the interior
    is flat.
    """
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 4:
        raise ShapeError(f"field must be (B, C, H, W), got {f.shape}")
    H, W = f.shape[2:]
    if H % P or W % P:
        raise ShapeError(f"field {(H, W)} not divisible by P={P}")
    dx = np.abs(np.diff(f, axis=3))
    dy = np.abs(np.diff(f, axis=2))
    bx = (np.arange(1, W) % P) == 0
    by = (np.arange(1, H) % P) == 0
    b_sum = dx[..., bx].sum() + dy[:, :, by, :].sum()
    b_cnt = dx[..., bx].size + dy[:, :, by, :].size
    i_sum = dx[..., ~bx].sum() + dy[:, :, ~by, :].sum()
    i_cnt = dx[..., ~bx].size + dy[:, :, ~by, :].size
    boundary = b_sum / b_cnt if b_cnt else 0.0
    interior = i_sum / i_cnt if i_cnt else 0.0
    if interior == 0.0:
        return 1.0 if boundary == 0.0 else math.inf
    return float(boundary / interior)
