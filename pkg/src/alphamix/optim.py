"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from alphamix import _kernels as K
from alphamix.autodiff import ShapeError, Tensor2


class Adam:
    """Standard Adam over a fixed parameter list.

    State (first/second moment accumulators, step counter) mirrors the
    parameter shapes. A missing gradient counts as zero, so a step with no
    gradients still advances the counter but moves nothing from a cold start.
    """

    def __init__(self, params: list[Tensor2], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        """One update from the gradients currently stored on the parameters."""
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            elif grad.shape != p.data.shape:
                raise ShapeError(f"gradient shape {grad.shape} != parameter shape {p.data.shape}")
            K.adam_update(p.data, grad, m, v, self.t,
                          self.lr, self.beta1, self.beta2, self.eps)
