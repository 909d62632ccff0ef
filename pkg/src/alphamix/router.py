"""Stage-2 gating: train n-1 routers and gate experts sequentially.

Router k decides whether expert k+1 is worth activating. It sees the
L2-normalized backbone embedding squeezed through a shared reduction layer
(LeakyReLU, 8 dims by default) concatenated with two running statistics of
the first k experts: their mean up-probability and mean return estimate. A
sigmoid turns the per-router projection into an activation value v in [0,1].

Training labels come from the frozen stage-1 model: y_on = 0 (switch the next
expert off) exactly when the first k experts' mean logits pick the true
movement class and the sign of their mean return matches the sign of the true
return; otherwise y_on = 1. Ties break upward: equal mean logits predict a
rise, and sign(0) is +1.

At inference the experts fire in their fixed order: evaluation stops at the
first router whose activation falls below the gate threshold, and the
aggregate prediction is the plain mean over the activated prefix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from alphamix import _kernels as K
from alphamix import autodiff as ad
from alphamix.autodiff import Tensor2
from alphamix.layers import Activation, DenseLayer
from alphamix.moe import MoEModel, TrainingDiverged, sum_losses
from alphamix.optim import Adam

log = logging.getLogger(__name__)

REDUCE_DIM = 8
V_CLAMP = 1e-7  # activation clamped to [V_CLAMP, 1-V_CLAMP] inside the loss

STAT_MODES = ("probability", "logit")


def sign_plus(x: np.ndarray) -> np.ndarray:
    """Sign with the zero-is-positive convention."""
    return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)


def normalize_rows(e: np.ndarray) -> np.ndarray:
    """Rows scaled to unit L2 norm; all-zero rows pass through (flagged)."""
    norms = np.linalg.norm(e, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    if zero.any():
        log.warning("normalize_rows: %d zero embeddings left unnormalized", int(zero.sum()))
        norms = norms.copy()
        norms[zero] = 1.0
    return e / norms


class RouterBank:
    """Shared reduction layer plus one decision layer per gated expert."""

    def __init__(self, rng: np.random.Generator, embed_dim: int, n_experts: int,
                 omega: float = 1.7, gate_threshold: float = 0.5,
                 stat_mode: str = "probability"):
        if n_experts < 2:
            raise ValueError(f"routing needs >= 2 experts, got {n_experts}")
        if stat_mode not in STAT_MODES:
            raise ValueError(f"stat_mode {stat_mode!r} not in {STAT_MODES}")
        self.n_experts = n_experts
        self.embed_dim = embed_dim
        self.omega = omega
        self.gate_threshold = gate_threshold
        self.stat_mode = stat_mode
        self.reduce = DenseLayer(rng, embed_dim, REDUCE_DIM, Activation.LEAKY_RELU)
        self.deciders = [DenseLayer(rng, REDUCE_DIM + 2, 1, Activation.IDENTITY)
                         for _ in range(n_experts - 1)]

    def params(self) -> list[Tensor2]:
        out = self.reduce.params()
        for d in self.deciders:
            out += d.params()
        return out


def prefix_stats(outs: dict[str, np.ndarray], stat_mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Running prefix means over experts 1..n of the movement statistic and
    the return estimate; both (B, n). Column k-1 covers the first k experts.

    stat_mode "probability" feeds mean up-probabilities; "logit" feeds the
    mean logit margin (logit_up - logit_down).
    """
    source = outs["p_up"] if stat_mode == "probability" else outs["logit_margin"]
    n = source.shape[1]
    counts = np.arange(1, n + 1, dtype=np.float64)
    stat_y = np.cumsum(source, axis=1) / counts
    stat_r = np.cumsum(outs["returns"], axis=1) / counts
    return stat_y, stat_r


def make_router_labels(outs: dict[str, np.ndarray], y: np.ndarray,
                       r: np.ndarray) -> np.ndarray:
    """(B, n-1) on/off labels from frozen expert outputs and ground truth.

    Column k-1 holds y_on for router k: 0 when the first k experts already
    predict both the movement class and the return sign correctly, else 1.
    """
    logits = outs["logits"]  # (n, B, 2)
    rets = outs["returns"]   # (B, n)
    n = logits.shape[0]
    y = np.asarray(y).reshape(-1)
    r = np.asarray(r).reshape(-1)
    labels = np.empty((y.shape[0], n - 1), dtype=np.intp)
    cum_logits = np.cumsum(logits, axis=0)
    cum_rets = np.cumsum(rets, axis=1)
    for k in range(1, n):
        mean_logits = cum_logits[k - 1] / k  # (B, 2)
        pred = (mean_logits[:, 1] >= mean_logits[:, 0]).astype(np.intp)
        mean_ret = cum_rets[:, k - 1] / k
        correct = (pred == y) & (sign_plus(mean_ret) == sign_plus(r))
        labels[:, k - 1] = np.where(correct, 0, 1)
    return labels


def router_forward(bank: RouterBank, norm_embed: Tensor2, stat_y: Tensor2,
                   stat_r: Tensor2, k: int) -> Tensor2:
    """Activation v in [0,1] of router k (1-based) for a batch."""
    reduced = bank.reduce(norm_embed)
    joined = ad.concat_cols([reduced, stat_y, stat_r])
    return ad.sigmoid(bank.deciders[k - 1](joined))


def router_loss(v: Tensor2, y_on: np.ndarray, omega: float) -> Tensor2:
    """Weighted binary cross-entropy -omega*y*log(v) - (1-y)*log(1-v), batch mean.

    v is clamped away from {0,1} before the logs.
    """
    v = ad.clip(v, V_CLAMP, 1.0 - V_CLAMP)
    y_on = np.asarray(y_on, dtype=np.float64).reshape(-1, 1)
    on = Tensor2(y_on)
    off = Tensor2(1.0 - y_on)
    one = Tensor2(np.ones_like(y_on))
    term_on = on * ad.log(v) * (-omega)
    term_off = off * ad.log(one - v) * (-1.0)
    return ad.tmean(term_on + term_off)


@dataclass
class RouterTrainLog:
    rows: list[tuple[int, float]]  # (epoch, mean train loss)

    def write_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_loss"]
        for epoch, loss in self.rows:
            lines.append(f"{epoch},{loss!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def train_stage2(bank: RouterBank, model: MoEModel,
                 train: tuple[np.ndarray, np.ndarray, np.ndarray],
                 *,
                 epochs: int,
                 batch_size: int,
                 lr: float,
                 rng: np.random.Generator) -> RouterTrainLog:
    """Joint Adam training of all routers on the summed per-router loss.

    The stage-1 model stays frozen: its outputs are precomputed once and only
    the reduction/decision layers receive gradients.
    """
    x, y, r = train
    outs = model.forward_arrays(x)
    norm_e = normalize_rows(outs["embedding"])
    stat_y, stat_r = prefix_stats(outs, bank.stat_mode)
    labels = make_router_labels(outs, y, r)

    opt = Adam(bank.params(), lr=lr)
    rows: list[tuple[int, float]] = []
    step = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(x))
        loss_sum = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            embed = Tensor2(norm_e[idx])
            terms = []
            for k in range(1, bank.n_experts):
                v = router_forward(bank, embed,
                                   Tensor2(stat_y[idx, k - 1 : k]),
                                   Tensor2(stat_r[idx, k - 1 : k]), k)
                terms.append(router_loss(v, labels[idx, k - 1], bank.omega))
            loss = sum_losses(terms)
            value = loss.item()
            step += 1
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite router loss at epoch {epoch}, step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += value * len(idx)
        rows.append((epoch, loss_sum / len(order)))
    return RouterTrainLog(rows)


def router_activations(bank: RouterBank, outs: dict[str, np.ndarray]) -> np.ndarray:
    """All router activations for precomputed model outputs, shape (B, n-1)."""
    norm_e = normalize_rows(outs["embedding"])
    stat_y, stat_r = prefix_stats(outs, bank.stat_mode)
    reduced = K.leaky_relu(
        K.linear(norm_e, bank.reduce.weight.data, bank.reduce.bias.data[0]),
        ad.LEAKY_SLOPE)
    acts = np.empty((norm_e.shape[0], bank.n_experts - 1))
    for k in range(1, bank.n_experts):
        joined = np.ascontiguousarray(
            np.concatenate([reduced, stat_y[:, k - 1 : k], stat_r[:, k - 1 : k]], axis=1))
        d = bank.deciders[k - 1]
        acts[:, k - 1 : k] = K.sigmoid(K.linear(joined, d.weight.data, d.bias.data[0]))
    return acts


def route_inference(bank: RouterBank | None, model: MoEModel,
                    x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sequential as-needed expert activation.

    Starts from expert 1; router k >= gate keeps going, the first router
    below the gate stops the scan. Returns (m, p_up_mean, return_mean) where
    the means are plain means over each sample's first m experts. With no
    bank every expert is activated (full-ensemble inference).
    """
    outs = model.forward_arrays(x)
    n = model.n_experts
    b = x.shape[0]
    if bank is None:
        m = np.full(b, n, dtype=np.intp)
    else:
        acts = router_activations(bank, outs)
        m = np.full(b, 1, dtype=np.intp)
        alive = np.ones(b, dtype=bool)
        for k in range(1, n):
            advance = alive & (acts[:, k - 1] >= bank.gate_threshold)
            m[advance] = k + 1
            alive = advance
    p_mean = np.empty(b)
    r_mean = np.empty(b)
    for i in range(b):
        p_mean[i] = outs["p_up"][i, : m[i]].mean()
        r_mean[i] = outs["returns"][i, : m[i]].mean()
    return m, p_mean, r_mean
