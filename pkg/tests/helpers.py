"""Independent float64 reference implementations and random parameter
builders shared by the test modules.

The oracles here deliberately avoid the package's own primitives: loops and
plain numpy in double precision.
"""
import math

import numpy as np

from pixie.weights import WeightStore


def rand(shape, seed, lo=-1.0, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, size=shape).astype(np.float32)


def rel_err(got, ref):
    got = np.asarray(got, np.float64)
    ref = np.asarray(ref, np.float64)
    scale = max(float(np.max(np.abs(ref))), 1e-30)
    return float(np.max(np.abs(got - ref))) / scale


def random_store(specs, seed):
    """Every tensor random, including the ones the real init pins to zero or
    identity. Gains and temperatures stay positive."""
    g = np.random.default_rng(seed)
    items = []
    for s in specs:
        if s.name.endswith(("temperature", "norm.scale")):
            arr = g.uniform(0.5, 1.5, s.shape)
        else:
            a = 1.0 / math.sqrt(s.fan_in)
            arr = g.uniform(-a, a, s.shape)
        items.append((s.name, arr.astype(np.float32)))
    return WeightStore(items)


# --------------------------------------------------------------------------
# float64 oracles

def naive_pad(x, pad, mode):
    if pad == 0:
        return x
    B, C, H, W = x.shape
    out = np.zeros((B, C, H + 2 * pad, W + 2 * pad), np.float64)
    for i in range(H + 2 * pad):
        for j in range(W + 2 * pad):
            si, sj = i - pad, j - pad
            if mode == "reflect":
                si = -si if si < 0 else (2 * (H - 1) - si if si >= H else si)
                sj = -sj if sj < 0 else (2 * (W - 1) - sj if sj >= W else sj)
            elif not (0 <= si < H and 0 <= sj < W):
                continue
            out[:, :, i, j] = x[:, :, si, sj]
    return out


def naive_conv(x, w, b=None, stride=1, pad=0, groups=1, mode="zeros"):
    x = naive_pad(np.asarray(x, np.float64), pad, mode)
    w = np.asarray(w, np.float64)
    B, cin, H, W = x.shape
    cout, cin_g, k, _ = w.shape
    ho = (H - k) // stride + 1
    wo = (W - k) // stride + 1
    cout_g = cout // groups
    out = np.zeros((B, cout, ho, wo))
    for n in range(B):
        for co in range(cout):
            g = co // cout_g
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for cl in range(cin_g):
                        for ky in range(k):
                            for kx in range(k):
                                acc += w[co, cl, ky, kx] * x[n, g * cin_g + cl, oy * stride + ky, ox * stride + kx]
                    out[n, co, oy, ox] = acc
    if b is not None:
        out += np.asarray(b, np.float64)[None, :, None, None]
    return out


def conv_p(p, x):
    """Oracle conv driven by a Conv2dParams."""
    return naive_conv(x, p.weight, p.bias, p.stride, p.padding, p.groups, p.pad_mode)


def naive_rms(x, scale, eps=1e-6):
    x = np.asarray(x, np.float64)
    r = np.sqrt(np.mean(x * x, axis=1, keepdims=True) + eps)
    return x / r * np.asarray(scale, np.float64)[None, :, None, None]


def naive_gelu(x):
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def naive_mdta(x, p):
    """Restormer-style channel attention with explicit d x d loops."""
    y = naive_rms(x, p.norm)
    q = conv_p(p.q_dw, conv_p(p.q_pw, y))
    k = conv_p(p.k_dw, conv_p(p.k_pw, y))
    v = conv_p(p.v_dw, conv_p(p.v_pw, y))
    B, C, H, W = x.shape
    d = C // p.heads
    out = np.zeros((B, C, H * W))
    for n in range(B):
        for h in range(p.heads):
            sl = slice(h * d, (h + 1) * d)
            qh = q[n, sl].reshape(d, -1)
            kh = k[n, sl].reshape(d, -1)
            vh = v[n, sl].reshape(d, -1)
            qh = qh / np.maximum(np.linalg.norm(qh, axis=1, keepdims=True), 1e-12)
            kh = kh / np.maximum(np.linalg.norm(kh, axis=1, keepdims=True), 1e-12)
            logits = np.zeros((d, d))
            for i in range(d):
                for j in range(d):
                    logits[i, j] = sum(kh[i, t] * qh[j, t] for t in range(qh.shape[1])) / p.temperature[h]
            A = np.exp(logits - logits.max(axis=0, keepdims=True))
            A /= A.sum(axis=0, keepdims=True)
            for j in range(d):
                out[n, h * d + j] = sum(A[i, j] * vh[i] for i in range(d))
    return conv_p(p.out, out.reshape(B, C, H, W))


def naive_gdfn(x, p):
    y = naive_rms(x, p.norm)
    u1 = conv_p(p.u1_dw, conv_p(p.u1_pw, y))
    u2 = conv_p(p.u2_dw, conv_p(p.u2_pw, y))
    return conv_p(p.out, naive_gelu(u1) * u2)


def naive_unshuffle(x, r):
    B, C, H, W = x.shape
    out = np.zeros((B, C * r * r, H // r, W // r), x.dtype)
    for c in range(C):
        for dy in range(r):
            for dx in range(r):
                out[:, c * r * r + dy * r + dx] = x[:, c, dy::r, dx::r]
    return out


def naive_shuffle(x, r):
    B, C, H, W = x.shape
    out = np.zeros((B, C // (r * r), H * r, W * r), x.dtype)
    for c in range(C // (r * r)):
        for dy in range(r):
            for dx in range(r):
                out[:, c, dy::r, dx::r] = x[:, c * r * r + dy * r + dx]
    return out


def naive_scc(x, p):
    P = p.patch
    x = np.asarray(x, np.float64)
    if p.variant == "full":
        xc = conv_p(p.compress, naive_unshuffle(x, P))
        return naive_shuffle(conv_p(p.expand, naive_mdta(xc, p.mdta)), P)
    if p.variant == "channel_only":
        return conv_p(p.expand, naive_mdta(conv_p(p.compress, x), p.mdta))
    if p.variant == "spatial_only":
        return naive_shuffle(naive_mdta(naive_unshuffle(x, P), p.mdta), P)
    return naive_mdta(x, p.mdta)
