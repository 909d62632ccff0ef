"""Stage-1 mixture model: shared backbone, expert heads, and the loss stack.

Each expert head sees the shared backbone embedding and emits two movement
logits plus one return estimate. Training jointly minimizes, per sample,

    individual loss      mean_i CE(logits_i, y) + lambda * mean_i (r_i - r)^2
    variation ratio      min(1 - n_up/n, n_up/n), with the soft expert count
                         n_up = sum_i p_up_i so the term stays differentiable
    volatility           population variance of the n return estimates

with the uncertainty terms scaled by w1 and w2. The collaborative variant
(losses on the expert-mean logits / mean return) is kept for comparisons. All
losses are symmetric in the experts and average over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from alphamix import autodiff as ad
from alphamix.autodiff import Tensor2
from alphamix.layers import Activation, DenseLayer, MLP
from alphamix.optim import Adam


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class LossWeights:
    """lam scales the regression half of the individual loss; w1/w2 scale the
    variation-ratio and volatility penalties."""

    lam: float = 0.85
    w1: float = 1.0
    w2: float = 1.0

    def __post_init__(self):
        if self.lam < 0 or self.w1 < 0 or self.w2 < 0:
            raise ValueError(f"loss weights must be >= 0, got {self}")


class ExpertHead:
    """One expert: a hidden layer over the embedding, then logit/return outputs."""

    def __init__(self, rng: np.random.Generator, embed_dim: int, hidden: int):
        self.hidden = DenseLayer(rng, embed_dim, hidden, Activation.LEAKY_RELU)
        self.clf = DenseLayer(rng, hidden, 2, Activation.IDENTITY)
        self.reg = DenseLayer(rng, hidden, 1, Activation.IDENTITY)

    def params(self) -> list[Tensor2]:
        return self.hidden.params() + self.clf.params() + self.reg.params()


@dataclass
class ExpertOutputs:
    """Per-expert movement logits (B,2), up-probabilities (B,1), and return
    estimates (B,1), plus the shared embedding they were computed from."""

    logits: list[Tensor2]
    p_up: list[Tensor2]
    returns: list[Tensor2]
    embedding: Tensor2

    @property
    def n(self) -> int:
        return len(self.logits)


class MoEModel:
    """Shared two-hidden-layer backbone feeding n identical expert heads."""

    def __init__(self, rng: np.random.Generator, input_dim: int, hidden: int, n_experts: int):
        if n_experts < 1:
            raise ValueError(f"n_experts must be >= 1, got {n_experts}")
        self.input_dim = input_dim
        self.hidden = hidden
        self.n_experts = n_experts
        self.backbone = MLP.build(rng, [input_dim, hidden, hidden],
                                  hidden_activation=Activation.LEAKY_RELU,
                                  output_activation=Activation.LEAKY_RELU)
        self.experts = [ExpertHead(rng, hidden, hidden) for _ in range(n_experts)]

    @property
    def embed_dim(self) -> int:
        return self.hidden

    def params(self) -> list[Tensor2]:
        out = self.backbone.params()
        for e in self.experts:
            out += e.params()
        return out

    def forward(self, x: Tensor2) -> ExpertOutputs:
        if x.cols != self.input_dim:
            raise ad.ShapeError(f"input dim {x.cols}, model expects {self.input_dim}")
        e = self.backbone(x)
        logits, p_up, returns = [], [], []
        for expert in self.experts:
            h = expert.hidden(e)
            lg = expert.clf(h)
            logits.append(lg)
            p_up.append(ad.col(ad.softmax(lg), 1))
            returns.append(expert.reg(h))
        return ExpertOutputs(logits, p_up, returns, e)

    def forward_arrays(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Inference pass returning plain arrays: per-expert up-probabilities
        (B,n), return estimates (B,n), logit margins logit_up - logit_down
        (B,n), and the embedding (B,E)."""
        with ad.no_grad():
            out = self.forward(Tensor2(x))
            p_up = np.concatenate([p.data for p in out.p_up], axis=1)
            rets = np.concatenate([r.data for r in out.returns], axis=1)
            margins = np.concatenate(
                [lg.data[:, 1:2] - lg.data[:, 0:1] for lg in out.logits], axis=1)
            mean_logits = [lg.data for lg in out.logits]
        return {
            "p_up": p_up,
            "returns": rets,
            "logit_margin": margins,
            "logits": np.stack(mean_logits, axis=0),  # (n, B, 2)
            "embedding": out.embedding.data,
        }

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params()]

    def restore(self, snap: list[np.ndarray]) -> None:
        for p, data in zip(self.params(), snap):
            p.data[...] = data


# ---------------------------------------------------------------------------
# Losses (scalar Tensor2 results, batch means)
# ---------------------------------------------------------------------------


def loss_individual(out: ExpertOutputs, y: np.ndarray, r: Tensor2,
                    lam: float) -> Tensor2:
    """Expert-averaged cross-entropy plus lam times expert-averaged MSE."""
    n = out.n
    ce = sum_losses([ad.cross_entropy_logits(lg, y) for lg in out.logits])
    total = ce * (1.0 / n)
    if lam != 0.0:
        reg = sum_losses([ad.mse(rh, r) for rh in out.returns])
        total = total + reg * (lam / n)
    return total


def loss_collaborative(out: ExpertOutputs, y: np.ndarray, r: Tensor2,
                       lam: float = 1.0) -> Tensor2:
    """Losses on the expert means: CE of mean logits + lam * MSE of mean return."""
    n = out.n
    mean_logits = sum_losses(out.logits) * (1.0 / n)
    mean_ret = sum_losses(out.returns) * (1.0 / n)
    total = ad.cross_entropy_logits(mean_logits, y)
    if lam != 0.0:
        total = total + ad.mse(mean_ret, r) * lam
    return total


def loss_variation_ratio(out: ExpertOutputs) -> Tensor2:
    """min(1 - n_up/n, n_up/n) with the soft up-vote count sum_i p_up_i.

    Zero exactly when every expert is fully confident the same way; 0.5 at an
    even split. The soft count keeps the term differentiable while matching
    the hard expert count at confident predictions.
    """
    n = out.n
    if n < 2:
        raise ValueError("variation ratio needs at least 2 experts")
    frac = sum_losses(out.p_up) * (1.0 / n)  # (B,1)
    one = Tensor2(np.ones_like(frac.data))
    per_sample = ad.minimum(one - frac, frac)
    return ad.tmean(per_sample)


def variation_ratio_hard(p_up: np.ndarray) -> np.ndarray:
    """Evaluation-time variant on hard votes (p >= 0.5 counts as up).

    p_up is (B, n); returns (B,) dispersion values in [0, 0.5].
    """
    n = p_up.shape[1]
    n_up = (p_up >= 0.5).sum(axis=1)
    frac = n_up / n
    return np.minimum(1.0 - frac, frac)


def loss_volatility(out: ExpertOutputs) -> Tensor2:
    """Population variance of the n return estimates, batch-averaged.

    Computed in the pairwise form sum_{i<j}(r_i - r_j)^2 / n^2, which is
    algebraically the population variance but yields exactly zero when all
    estimates coincide (the two-pass form leaks rounding noise there).
    """
    n = out.n
    if n < 2:
        raise ValueError("volatility needs at least 2 experts")
    acc = None
    for i in range(n):
        for j in range(i + 1, n):
            d = out.returns[i] - out.returns[j]
            acc = d * d if acc is None else acc + d * d
    return ad.tmean(acc) * (1.0 / (n * n))


def loss_total(out: ExpertOutputs, y: np.ndarray, r: Tensor2, weights: LossWeights,
               collaborative: bool = False) -> Tensor2:
    """Individual (or collaborative) loss plus weighted uncertainty terms.

    Each term enters once per sample; the uncertainty terms are dropped for a
    single expert, where dispersion over experts is undefined.
    """
    if collaborative:
        total = loss_collaborative(out, y, r, weights.lam)
    else:
        total = loss_individual(out, y, r, weights.lam)
    if out.n >= 2:
        if weights.w1 != 0.0:
            total = total + loss_variation_ratio(out) * weights.w1
        if weights.w2 != 0.0:
            total = total + loss_volatility(out) * weights.w2
    return total


def sum_losses(terms: list[Tensor2]) -> Tensor2:
    acc = terms[0]
    for t in terms[1:]:
        acc = acc + t
    return acc


# ---------------------------------------------------------------------------
# Stage-1 training
# ---------------------------------------------------------------------------


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    valid_loss: float
    l_individual: float
    l_vr: float
    l_vol: float


@dataclass
class TrainLog:
    rows: list[EpochRow]
    best_epoch: int

    def write_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_loss,valid_loss,l_individual,l_vr,l_vol"]
        for r in self.rows:
            lines.append(f"{r.epoch},{r.train_loss!r},{r.valid_loss!r},"
                         f"{r.l_individual!r},{r.l_vr!r},{r.l_vol!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def _eval_losses(model: MoEModel, x: np.ndarray, y: np.ndarray, r: np.ndarray,
                 weights: LossWeights, collaborative: bool) -> tuple[float, float, float, float]:
    with ad.no_grad():
        out = model.forward(Tensor2(x))
        rt = Tensor2(r.reshape(-1, 1))
        if collaborative:
            l_ind = loss_collaborative(out, y, rt, weights.lam).item()
        else:
            l_ind = loss_individual(out, y, rt, weights.lam).item()
        l_vr = loss_variation_ratio(out).item() if out.n >= 2 else 0.0
        l_vol = loss_volatility(out).item() if out.n >= 2 else 0.0
        total = l_ind
        if out.n >= 2:
            total += weights.w1 * l_vr + weights.w2 * l_vol
    return total, l_ind, l_vr, l_vol


def train_stage1(model: MoEModel,
                 train: tuple[np.ndarray, np.ndarray, np.ndarray],
                 valid: tuple[np.ndarray, np.ndarray, np.ndarray],
                 *,
                 epochs: int,
                 batch_size: int,
                 lr: float,
                 weights: LossWeights,
                 rng: np.random.Generator,
                 collaborative: bool = False) -> TrainLog:
    """Mini-batch Adam over the total loss; restores the best-valid epoch.

    Deterministic given the rng state. Raises TrainingDiverged naming the
    step if any batch loss is non-finite.
    """
    x_tr, y_tr, r_tr = train
    x_va, y_va, r_va = valid
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("train_stage1 needs non-empty train and valid splits")
    opt = Adam(model.params(), lr=lr)
    rows: list[EpochRow] = []
    best_valid = np.inf
    best_epoch = -1
    best_snap = model.snapshot()
    step = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(x_tr))
        train_loss_sum = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            out = model.forward(Tensor2(x_tr[idx]))
            loss = loss_total(out, y_tr[idx], Tensor2(r_tr[idx].reshape(-1, 1)),
                              weights, collaborative)
            value = loss.item()
            step += 1
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            train_loss_sum += value * len(idx)
        train_loss = train_loss_sum / len(order)
        valid_loss, l_ind, l_vr, l_vol = _eval_losses(model, x_va, y_va, r_va,
                                                      weights, collaborative)
        rows.append(EpochRow(epoch, train_loss, valid_loss, l_ind, l_vr, l_vol))
        if valid_loss < best_valid:
            best_valid = valid_loss
            best_epoch = epoch
            best_snap = model.snapshot()
    model.restore(best_snap)
    return TrainLog(rows, best_epoch)
