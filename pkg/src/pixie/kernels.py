"""Hot loops: direct convolution and batched matrix products.

Every kernel exists twice, once under ``numba.njit`` and once as plain numpy.
Both perform the same float32 multiply and add steps in the same order, so
the two backends agree bit for bit. The backend is picked at import time:

    PIXIE_BACKEND=numba   (default when numba imports)
    PIXIE_BACKEND=numpy

PIXIE_THREADS caps the numba worker count.
"""
import os
import warnings

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

# numba probes an old TBB on some hosts and falls back to another layer
warnings.filterwarnings("ignore", message="The TBB threading layer")


def _select_backend():
    requested = os.environ.get("PIXIE_BACKEND", "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"PIXIE_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and numba is None:
        return "numpy"
    return requested


BACKEND = _select_backend()

if numba is not None:
    _threads = os.environ.get("PIXIE_THREADS")
    if _threads:
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


# --------------------------------------------------------------------------
# convolution
#
# Input arrives already padded. Per output element the accumulation order is
# kernel row, kernel column, then input channel within the group; bias is
# added by the caller afterwards.

def conv2d_numpy(x, w, stride, groups):
    B, cin, hp, wp = x.shape
    cout, cin_g, k, _ = w.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    cout_g = cout // groups
    out = np.zeros((B, groups, cout_g, ho, wo), dtype=np.float32)
    xg = x.reshape(B, groups, cin_g, hp, wp)
    wg = w.reshape(groups, cout_g, cin_g, k, k)
    for ky in range(k):
        ys = slice(ky, ky + stride * (ho - 1) + 1, stride)
        for kx in range(k):
            xs = slice(kx, kx + stride * (wo - 1) + 1, stride)
            for cl in range(cin_g):
                tap = wg[None, :, :, cl, ky, kx, None, None]
                out += tap * xg[:, :, cl, None, ys, xs]
    return out.reshape(B, cout, ho, wo)


def _conv2d_loops(x, w, stride, groups, out):
    B, cin, hp, wp = x.shape
    cout, cin_g, k, _ = w.shape
    ho = out.shape[2]
    wo = out.shape[3]
    cout_g = cout // groups
    for idx in numba.prange(B * cout):
        b = idx // cout
        co = idx % cout
        g = co // cout_g
        for ky in range(k):
            for kx in range(k):
                for cl in range(cin_g):
                    ci = g * cin_g + cl
                    wv = w[co, cl, ky, kx]
                    for oy in range(ho):
                        iy = oy * stride + ky
                        for ox in range(wo):
                            out[b, co, oy, ox] += wv * x[b, ci, iy, ox * stride + kx]


def _conv2d_unit_stride_loops(x, w, groups, out):
    # same order as _conv2d_loops; contiguous row views let LLVM vectorise
    B, cin, hp, wp = x.shape
    cout, cin_g, k, _ = w.shape
    ho = out.shape[2]
    wo = out.shape[3]
    cout_g = cout // groups
    for idx in numba.prange(B * cout):
        b = idx // cout
        co = idx % cout
        g = co // cout_g
        for ky in range(k):
            for kx in range(k):
                for cl in range(cin_g):
                    ci = g * cin_g + cl
                    wv = w[co, cl, ky, kx]
                    for oy in range(ho):
                        orow = out[b, co, oy]
                        xrow = x[b, ci, oy + ky, kx:kx + wo]
                        for ox in range(wo):
                            orow[ox] += wv * xrow[ox]


def conv2d_numba(x, w, stride, groups):
    B, _, hp, wp = x.shape
    cout, _, k, _ = w.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros((B, cout, ho, wo), dtype=np.float32)
    if stride == 1:
        _conv2d_s1_nb(x, w, groups, out)
    else:
        _conv2d_nb(x, w, stride, groups, out)
    return out


# --------------------------------------------------------------------------
# batched matmul, (n, M, K) @ (n, K, N), k summed sequentially per element

def matmul_numpy(a, b):
    n, m, kdim = a.shape
    ncols = b.shape[2]
    if kdim <= m * ncols:
        out = np.zeros((n, m, ncols), dtype=np.float32)
        for k in range(kdim):
            out += a[:, :, k, None] * b[:, None, k, :]
        return out
    # long inner dimension: reducing over a non-contiguous axis adds the
    # rows one after another, which keeps the sequential k order
    out = np.empty((n, m, ncols), dtype=np.float32)
    for i in range(m):
        out[:, i, :] = (a[:, i, :, None] * b).sum(axis=1)
    return out


def _matmul_loops(a, b, out):
    n, m, kdim = a.shape
    ncols = b.shape[2]
    for bi in numba.prange(n):
        for i in range(m):
            for k in range(kdim):
                aik = a[bi, i, k]
                for j in range(ncols):
                    out[bi, i, j] += aik * b[bi, k, j]


def matmul_numba(a, b):
    out = np.zeros((a.shape[0], a.shape[1], b.shape[2]), dtype=np.float32)
    _matmul_nb(a, b, out)
    return out


if numba is not None:
    _conv2d_nb = numba.njit(parallel=True, cache=True)(_conv2d_loops)
    _conv2d_s1_nb = numba.njit(parallel=True, cache=True)(_conv2d_unit_stride_loops)
    _matmul_nb = numba.njit(parallel=True, cache=True)(_matmul_loops)
    BACKENDS = {
        "numba": (conv2d_numba, matmul_numba),
        "numpy": (conv2d_numpy, matmul_numpy),
    }
else:  # pragma: no cover
    BACKENDS = {"numpy": (conv2d_numpy, matmul_numpy)}


def conv2d_raw(x, w, stride=1, groups=1, backend=None):
    """Unbiased convolution of a pre-padded float32 input."""
    conv, _ = BACKENDS[backend or BACKEND]
    return conv(np.ascontiguousarray(x, dtype=np.float32),
                np.ascontiguousarray(w, dtype=np.float32), int(stride), int(groups))


def matmul_raw(a, b, backend=None):
    _, mm = BACKENDS[backend or BACKEND]
    return mm(np.ascontiguousarray(a, dtype=np.float32),
              np.ascontiguousarray(b, dtype=np.float32))
