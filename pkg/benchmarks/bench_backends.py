#!/usr/bin/env python3
"""Benchmark the numba kernels against the numpy/BLAS fallback.

Times the three convolution kernels on shapes representative of the
desk-scale model, plus one full forward+backward training step, for
both backends. Run from the repository root:

    python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

import gisr  # noqa: F401  (pins BLAS threads before numpy loads BLAS)
from gisr import backend
from gisr.model import MADUNet, ModelConfig
from gisr.tensor import Tensor
from gisr.training import mae_loss

SHAPES = [
    # (B, Cin, Cout, H, k, stride, pad), training-like mixes
    (4, 16, 16, 32, 3, 1, 1),
    (4, 64, 16, 32, 3, 1, 1),
    (4, 4, 16, 32, 3, 1, 1),
    (4, 16, 16, 32, 5, 2, 2),
]


def time_it(fn, min_time=0.3):
    fn()
    n, elapsed = 0, 0.0
    while elapsed < min_time:
        t0 = time.perf_counter()
        fn()
        elapsed += time.perf_counter() - t0
        n += 1
    return elapsed / n


def bench_kernels(name, dtype):
    backend.use(name)
    rng = np.random.default_rng(0)
    rows = []
    for b, cin, cout, h, k, s, p in SHAPES:
        x = rng.normal(size=(b, cin, h, h)).astype(dtype)
        w = rng.normal(size=(cout, cin, k, k)).astype(dtype)
        y = backend.conv2d_forward(x, w, s, p)
        g = np.ones_like(y)
        t_f = time_it(lambda: backend.conv2d_forward(x, w, s, p))
        t_i = time_it(lambda: backend.conv2d_input_grad(g, w, s, p, h, h))
        t_w = time_it(lambda: backend.conv2d_weight_grad(x, g, s, p, k, k))
        flops = 2 * b * cin * cout * k * k * y.shape[2] * y.shape[3] * 3
        total = t_f + t_i + t_w
        rows.append((f"B{b} {cin}->{cout} {h}x{h} k{k} s{s}",
                     total * 1e3, flops / total / 1e9))
    return rows


def bench_model_step(name):
    backend.use(name)
    cfg = ModelConfig(K=2, C=16, r=2, target_bands=4, guide_bands=1)
    model = MADUNet(cfg, seed=0)
    rng = np.random.default_rng(0)
    low = rng.random((4, 4, 16, 16)).astype(np.float32)
    guide = rng.random((4, 1, 32, 32)).astype(np.float32)
    gt = Tensor(rng.random((4, 4, 32, 32)).astype(np.float32))

    def step():
        out, _ = model.forward(low, guide)
        loss = mae_loss(out, gt)
        model.zero_grad()
        loss.backward()

    return time_it(step, min_time=2.0)


def main():
    # numpy first: numba's worker threads keep spinning briefly after use
    # and would pollute timings taken right after it
    names = sorted(backend.available(), reverse=True)
    print(f"backends: {', '.join(names)} (default {backend.active_name()})\n")
    for dtype in (np.float32, np.float64):
        print(f"-- conv kernel triple (fwd + input grad + weight grad), "
              f"{np.dtype(dtype).name} --")
        results = {name: bench_kernels(name, dtype) for name in names}
        for i, (label, _, _) in enumerate(results[names[0]]):
            cells = "  ".join(
                f"{name}: {results[name][i][1]:7.2f} ms ({results[name][i][2]:5.1f} GF/s)"
                for name in names)
            print(f"  {label:28s} {cells}")
        print()
    print("-- full K=2 C=16 training step (batch 4, 32x32) --")
    for name in names:
        dt = bench_model_step(name)
        print(f"  {name:6s} {dt * 1e3:8.1f} ms/step")
    backend.use("numpy")


if __name__ == "__main__":
    main()
