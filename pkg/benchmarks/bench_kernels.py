#!/usr/bin/env python3
"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also times one MaFormer micro training step under each backend.
"""

import argparse
import time

import numpy as np

from fdmnet import _kernels
from fdmnet.maformer import MaFormer, ModelConfig


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def kernel_cases(rng):
    xp = rng.standard_normal((2, 16, 71, 71))
    k, stride, ho, wo = 8, 4, 16, 16
    cols = _kernels.im2col(xp, k, stride, ho, wo)
    x = rng.standard_normal((2, 16, 64, 64))
    g = rng.standard_normal((2, 16, 32, 32))
    return {
        "im2col 8x8/4": lambda: _kernels.im2col(xp, k, stride, ho, wo),
        "col2im 8x8/4": lambda: _kernels.col2im(cols, k, stride, ho, wo, 71, 71),
        "msfa_pool p=4": lambda: _kernels.msfa_pool(x, 4),
        "msfa_pool backward": lambda: _kernels.msfa_pool_backward(g, 4, 64, 64),
    }


def train_step_case(rng):
    net = MaFormer(ModelConfig.micro())
    y = rng.uniform(0, 1, (2, 1, 64, 64))
    dy = rng.standard_normal((2, 16, 64, 64))

    def step():
        net.zero_grad()
        net.forward(y)
        net.backward(dy)
    return step


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"{'case':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    rng = np.random.default_rng(0)
    cases = dict(kernel_cases(rng), **{"micro train step": train_step_case(rng)})
    for name, fn in cases.items():
        times = {}
        for backend in ("numba", "numpy"):
            with _kernels.use_backend(backend):
                times[backend] = _time(fn, args.repeat if "step" not in name else 2)
        print(f"{name:<22}{1e3 * times['numba']:>12.2f}{1e3 * times['numpy']:>12.2f}"
              f"{times['numpy'] / times['numba']:>9.2f}x")


if __name__ == "__main__":
    main()
