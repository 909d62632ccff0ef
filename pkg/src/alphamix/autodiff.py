"""Dense 2-D float64 tensors with reverse-mode automatic differentiation.

Every value is a ``Tensor2``: a rows x cols float64 array. Ops executed while
recording is enabled build a computation graph (the gradient tape); calling
``backward()`` on a scalar result walks that graph in reverse topological
order and accumulates exact gradients into every reachable tensor that has
``requires_grad``. The graph is rebuilt on every forward pass, so "clearing
the tape" is just dropping references to the old loss node and resetting
``.grad`` on the parameters.

Shapes are strict: everything is 2-D. Elementwise ops broadcast a (1,n),
(m,1) or (1,1) operand against an (m,n) one; nothing else. All heavy inner
loops go through the selected kernel backend (see ``alphamix._kernels``).
"""

from __future__ import annotations

import contextlib

import numpy as np

from alphamix import _kernels as K

LEAKY_SLOPE = 0.01


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class UsageError(RuntimeError):
    """The autodiff API was used outside its contract."""


_recording = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / frozen passes)."""
    global _recording
    prev = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = prev


def _as2d(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"Tensor2 holds 2-D data, got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


class Tensor2:
    """A rows x cols float64 tensor, optionally a node in the gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as2d(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor2, ...] = ()
        self._backward = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor2(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.shape != (1, 1):
            raise UsageError(f"backward() starts from a scalar loss, got shape {self.data.shape}")
        if self._backward is None and not self._parents:
            raise UsageError("backward() called on a tensor that no recorded forward pass produced")
        order: list[Tensor2] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor2, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones((1, 1))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _wrap(x) -> Tensor2:
    return x if isinstance(x, Tensor2) else Tensor2(x)


def _accum(t: Tensor2, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Reduce an (m,n) upstream gradient back to the broadcast operand shape."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")
    return out


def _broadcastable(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def _node(data: np.ndarray, parents: tuple[Tensor2, ...], backward) -> Tensor2:
    out = Tensor2(data)
    if _recording and any(p.requires_grad or p._parents for p in parents):
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Elementwise arithmetic (with limited broadcasting)
# ---------------------------------------------------------------------------


def add(a: Tensor2, b: Tensor2) -> Tensor2:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"add: shapes {a.shape} and {b.shape}")
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(data, (a, b), backward)


def sub(a: Tensor2, b: Tensor2) -> Tensor2:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape}")
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node(data, (a, b), backward)


def neg(a: Tensor2) -> Tensor2:
    def backward(g):
        _accum(a, -g)

    return _node(-a.data, (a,), backward)


def mul(a: Tensor2, b: Tensor2) -> Tensor2:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape}")
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward)


def div(a: Tensor2, b: Tensor2) -> Tensor2:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"div: shapes {a.shape} and {b.shape}")
    data = a.data / b.data

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(data, (a, b), backward)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    data = K.matmul(a.data, b.data)

    def backward(g):
        _accum(a, K.matmul(g, np.ascontiguousarray(b.data.T)))
        _accum(b, K.matmul(np.ascontiguousarray(a.data.T), g))

    return _node(data, (a, b), backward)


def linear(x: Tensor2, w: Tensor2, b: Tensor2) -> Tensor2:
    """y = x @ w.T + bias with x (B,in), w (out,in), bias (1,out)."""
    if x.cols != w.cols:
        raise ShapeError(f"linear: input dim {x.cols} != weight fan-in {w.cols}")
    if b.shape != (1, w.rows):
        raise ShapeError(f"linear: bias shape {b.shape}, expected (1,{w.rows})")
    data = K.linear(x.data, w.data, b.data[0])

    def backward(g):
        gx, gw, gb = K.linear_grads(g, x.data, w.data)
        _accum(x, gx)
        _accum(w, gw)
        _accum(b, gb.reshape(1, -1))

    return _node(data, (x, w, b), backward)


def transpose(a: Tensor2) -> Tensor2:
    data = np.ascontiguousarray(a.data.T)

    def backward(g):
        _accum(a, np.ascontiguousarray(g.T))

    return _node(data, (a,), backward)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def tsum(a: Tensor2, axis: int | None = None) -> Tensor2:
    if axis is None:
        data = a.data.sum().reshape(1, 1)
    elif axis in (0, 1):
        data = a.data.sum(axis=axis, keepdims=True)
    else:
        raise ShapeError(f"sum: axis {axis}")

    def backward(g):
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _node(data, (a,), backward)


def tmean(a: Tensor2, axis: int | None = None) -> Tensor2:
    n = a.data.size if axis is None else a.data.shape[axis]
    out = tsum(a, axis)
    return mul(out, Tensor2(1.0 / n))


# ---------------------------------------------------------------------------
# Nonlinearities and composites
# ---------------------------------------------------------------------------


def log(a: Tensor2) -> Tensor2:
    """Natural log; caller guarantees positive input (clip first if unsure)."""
    data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _node(data, (a,), backward)


def exp(a: Tensor2) -> Tensor2:
    data = np.exp(a.data)

    def backward(g):
        _accum(a, g * data)

    return _node(data, (a,), backward)


def sigmoid(a: Tensor2) -> Tensor2:
    data = K.sigmoid(a.data)

    def backward(g):
        _accum(a, K.sigmoid_grad(data, g))

    return _node(data, (a,), backward)


def leaky_relu(a: Tensor2, slope: float = LEAKY_SLOPE) -> Tensor2:
    data = K.leaky_relu(a.data, slope)

    def backward(g):
        _accum(a, K.leaky_relu_grad(a.data, g, slope))

    return _node(data, (a,), backward)


def softmax(a: Tensor2) -> Tensor2:
    """Row-wise softmax, max-subtracted for stability."""
    s = K.softmax_rows(a.data)

    def backward(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        _accum(a, s * (g - dot))

    return _node(s, (a,), backward)


def logsumexp(a: Tensor2) -> Tensor2:
    """Row-wise log-sum-exp, shape (m,1)."""
    data = K.logsumexp_rows(a.data)

    def backward(g):
        _accum(a, K.softmax_rows(a.data) * g)

    return _node(data, (a,), backward)


def minimum(a: Tensor2, b: Tensor2) -> Tensor2:
    """Elementwise min; on ties the gradient goes to the first argument."""
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape}")
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        _accum(a, np.where(take_a, g, 0.0))
        _accum(b, np.where(take_a, 0.0, g))

    return _node(data, (a, b), backward)


def clip(a: Tensor2, lo: float, hi: float) -> Tensor2:
    """Clamp values to [lo, hi]; gradient passes through only inside."""
    inside = (a.data >= lo) & (a.data <= hi)
    data = np.clip(a.data, lo, hi)

    def backward(g):
        _accum(a, np.where(inside, g, 0.0))

    return _node(data, (a,), backward)


def concat_cols(parts: list[Tensor2]) -> Tensor2:
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols: row counts differ")
    data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.cols for p in parts]

    def backward(g):
        start = 0
        for p, w in zip(parts, widths):
            _accum(p, np.ascontiguousarray(g[:, start : start + w]))
            start += w

    return _node(data, tuple(parts), backward)


def col(a: Tensor2, j: int) -> Tensor2:
    """Select column j as an (m,1) tensor."""
    data = np.ascontiguousarray(a.data[:, j : j + 1])

    def backward(g):
        full = np.zeros_like(a.data)
        full[:, j : j + 1] = g
        _accum(a, full)

    return _node(data, (a,), backward)


def cross_entropy_logits(logits: Tensor2, labels: np.ndarray) -> Tensor2:
    """Mean cross-entropy of row-wise logits against integer class labels.

    Computed as logsumexp(logits) - logit[label], which never exponentiates
    un-shifted logits.
    """
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    if labels.shape[0] != logits.rows:
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for {logits.rows} rows")
    onehot = np.zeros_like(logits.data)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    picked = tsum(mul(logits, Tensor2(onehot)), axis=1)
    return tmean(sub(logsumexp(logits), picked))


def mse(pred: Tensor2, target: Tensor2) -> Tensor2:
    """Mean squared error over all entries."""
    d = sub(pred, target)
    return tmean(mul(d, d))
