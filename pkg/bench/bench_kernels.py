"""Benchmark the compiled kernel backend against the NumPy fallback.

Times the individual hot kernels at training-realistic shapes, then a full
stage-1 training step through whichever backend is selected for the process.
Usage::

    python bench/bench_kernels.py [--repeats 2000]

The per-kernel section imports both implementations directly; the end-to-end
section honors ALPHAMIX_KERNELS, so run it twice to compare:

    ALPHAMIX_KERNELS=numpy  python bench/bench_kernels.py
    ALPHAMIX_KERNELS=cython python bench/bench_kernels.py
"""

import argparse
import time

import numpy as np

from alphamix._kernels import numpy_backend

try:
    from alphamix._kernels import _cykernels
except ImportError:
    _cykernels = None


def timeit(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1e6  # us/call


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    batch, dim, hidden = 64, 55, 32
    x = np.ascontiguousarray(rng.normal(size=(batch, dim)))
    w = np.ascontiguousarray(rng.normal(size=(hidden, dim)))
    b = np.ascontiguousarray(rng.normal(size=hidden))
    h = np.ascontiguousarray(rng.normal(size=(batch, hidden)))
    g = np.ascontiguousarray(rng.normal(size=(batch, hidden)))
    logits = np.ascontiguousarray(rng.normal(size=(batch, 2)))
    p = np.ascontiguousarray(rng.normal(size=(hidden, hidden)))
    grad = np.ascontiguousarray(rng.normal(size=(hidden, hidden)))
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    cases = {
        f"linear {batch}x{dim}->{hidden}": lambda k: k.linear(x, w, b),
        "linear_grads": lambda k: k.linear_grads(g, x, w),
        f"matmul {hidden}x{batch} @ {batch}x{hidden}": lambda k: k.matmul(h.T.copy(), h),
        "leaky_relu": lambda k: k.leaky_relu(h, 0.01),
        "sigmoid": lambda k: k.sigmoid(h),
        "softmax_rows (B,2)": lambda k: k.softmax_rows(logits),
        "logsumexp_rows (B,2)": lambda k: k.logsumexp_rows(logits),
        "adam_update 32x32": lambda k: k.adam_update(p, grad, m, v, 1, 1e-3,
                                                     0.9, 0.999, 1e-8),
    }
    print(f"{'kernel':36s} {'numpy (us)':>12s} {'cython (us)':>12s} {'speedup':>9s}")
    for name, call in cases.items():
        t_np = timeit(lambda: call(numpy_backend), repeats)
        if _cykernels is None:
            print(f"{name:36s} {t_np:12.2f} {'n/a':>12s} {'n/a':>9s}")
            continue
        t_cy = timeit(lambda: call(_cykernels), repeats)
        print(f"{name:36s} {t_np:12.2f} {t_cy:12.2f} {t_np / t_cy:8.2f}x")


def bench_training_step(repeats):
    from alphamix import KERNEL_BACKEND
    from alphamix.autodiff import Tensor2
    from alphamix.moe import LossWeights, MoEModel, loss_total
    from alphamix.optim import Adam

    rng = np.random.default_rng(1)
    model = MoEModel(rng, input_dim=55, hidden=32, n_experts=4)
    opt = Adam(model.params(), lr=1e-3)
    x = rng.normal(size=(64, 55))
    y = rng.integers(0, 2, size=64)
    r = rng.normal(size=(64, 1)) * 0.02
    weights = LossWeights()

    def step():
        loss = loss_total(model.forward(Tensor2(x)), y, Tensor2(r), weights)
        opt.zero_grad()
        loss.backward()
        opt.step()

    us = timeit(step, max(50, repeats // 20))
    print(f"\nfull training step (backend={KERNEL_BACKEND}): {us:.0f} us "
          f"({1e6 / us:.0f} steps/s)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()
    if _cykernels is None:
        print("note: compiled kernels not importable; showing NumPy only\n")
    bench_kernels(args.repeats)
    bench_training_step(args.repeats)


if __name__ == "__main__":
    main()
