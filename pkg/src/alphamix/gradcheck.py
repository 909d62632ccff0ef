"""Central finite-difference gradient verification.

The numeric side only ever calls the loss closure (forward evaluations), so
it stays independent of the reverse-mode path it is checking.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from alphamix.autodiff import Tensor2

# Relative error uses max(|analytic|, |numeric|) as denominator, floored at
# ABS_FLOOR so near-zero gradient entries are judged on absolute error.
ABS_FLOOR = 1e-3


def analytic_gradients(loss_fn: Callable[[], Tensor2], params: list[Tensor2]) -> list[np.ndarray]:
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]


def numeric_gradients(loss_fn: Callable[[], Tensor2], params: list[Tensor2],
                      step: float = 1e-5) -> list[np.ndarray]:
    """Central differences (f(x+h) - f(x-h)) / 2h, element by element."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(loss_fn: Callable[[], Tensor2], params: list[Tensor2],
                       step: float = 1e-5) -> float:
    """Worst-case discrepancy between reverse-mode and finite differences."""
    analytic = analytic_gradients(loss_fn, params)
    numeric = numeric_gradients(loss_fn, params, step)
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), ABS_FLOOR)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst
