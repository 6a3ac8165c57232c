"""Time the numba and numpy kernels against each other.

    python benchmarks/bench_backends.py [--size 128] [--repeat 3] [--skip-pipeline]

Each row reports the best-of-N wall time per backend, the speedup, and
whether the two outputs are bit-identical (they should always be).
"""
import argparse
import time

import numpy as np

from pixie import kernels
from pixie.pipeline import PipelineConfig, init_weights, pipeline_forward
from pixie.prompt import SyntheticPromptConfig, synth_prompts
from pixie.tensor import Conv2dParams, conv2d, matmul_batched


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation or cache load
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def cases(size, with_pipeline):
    g = np.random.default_rng(0)
    x = g.standard_normal((1, 32, size, size)).astype(np.float32)
    dense = Conv2dParams(g.standard_normal((32, 32, 3, 3)).astype(np.float32), padding=1)
    depthwise = Conv2dParams(g.standard_normal((32, 1, 3, 3)).astype(np.float32), padding=1, groups=32)
    pointwise = Conv2dParams(g.standard_normal((64, 32, 1, 1)).astype(np.float32))
    strided = Conv2dParams(g.standard_normal((32, 32, 3, 3)).astype(np.float32), stride=2, padding=1)
    yield "conv 3x3 32->32", lambda: conv2d(x, dense)
    yield "conv dw 3x3 32", lambda: conv2d(x, depthwise)
    yield "conv 1x1 32->64", lambda: conv2d(x, pointwise)
    yield "conv 3x3 stride 2", lambda: conv2d(x, strided)
    a = g.standard_normal((8, 16, size * size)).astype(np.float32)
    b = g.standard_normal((8, size * size, 16)).astype(np.float32)
    yield "matmul 8x16xHW @ HWx16", lambda: matmul_batched(a, b)
    if with_pipeline:
        cfg = PipelineConfig()
        store = init_weights(cfg)
        edge = max(64, size // 64 * 64)
        img = g.uniform(0, 1, (1, 3, edge, edge)).astype(np.float32)
        prompts = synth_prompts(img, SyntheticPromptConfig())
        yield f"pipeline C=32 {edge}x{edge}", lambda: pipeline_forward(img, store, prompts, cfg)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args()

    backends = sorted(kernels.BACKENDS)
    print(f"{'case':28s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}  identical")
    original = kernels.BACKEND
    try:
        for name, fn in cases(args.size, not args.skip_pipeline):
            times, outs = {}, {}
            for b in backends:
                kernels.BACKEND = b
                times[b], outs[b] = best_of(fn, args.repeat)
            same = all(np.array_equal(outs[backends[0]], outs[b]) for b in backends[1:])
            speed = times["numpy"] / times["numba"] if "numba" in times else 1.0
            print(f"{name:28s}" + "".join(f"{times[b]:11.4f}s" for b in backends) + f"{speed:9.2f}x  {same}")
    finally:
        kernels.BACKEND = original


if __name__ == "__main__":
    main()
