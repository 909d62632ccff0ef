"""NumPy implementations of the hot numeric kernels.

This is the fallback backend: same contracts as the compiled Cython module
(`_cykernels`), pure vectorized NumPy. All arrays are float64; 2-D arrays are
C-contiguous row-major.
"""

import numpy as np

BACKEND = "numpy"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of (m,k) and (k,n)."""
    return a @ b


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map y = x @ w.T + b with x (B,in), w (out,in), b (out,)."""
    return x @ w.T + b


def linear_grads(gout: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Backward of `linear`: returns (gx, gw, gb) for upstream gout (B,out)."""
    gx = gout @ w
    gw = gout.T @ x
    gb = gout.sum(axis=0)
    return gx, gw, gb


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, gout: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, gout, slope * gout)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(y: np.ndarray, gout: np.ndarray) -> np.ndarray:
    """Backward of sigmoid given its output y."""
    return gout * y * (1.0 - y)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    shifted = x - x.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def logsumexp_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise log(sum(exp(x))), shape (m,1)."""
    m = x.max(axis=1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))


def adam_update(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """One bias-corrected Adam update, in place on param/m/v. t is 1-based."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
