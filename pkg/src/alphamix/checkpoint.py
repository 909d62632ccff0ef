"""Self-describing checkpoint container for model + routers + normalization.

A checkpoint is a single JSON document: architecture hyperparameters, every
parameter as base64-encoded little-endian float64 bytes, the training seed,
and the feature normalization statistics the model was trained under. The
encoding has no timestamps and a fixed key order, so identical state produces
byte-identical files. A checkpoint without a router section is valid and
forces full-ensemble inference.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from alphamix.dataset import FEATURE_NAMES, FeatureStats
from alphamix.layers import DenseLayer
from alphamix.moe import MoEModel
from alphamix.router import RouterBank

FORMAT = "alphamix-checkpoint-v1"


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


def _encode(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(obj["shape"])


def _layer_params(name: str, layer: DenseLayer) -> dict:
    return {f"{name}.weight": _encode(layer.weight.data),
            f"{name}.bias": _encode(layer.bias.data)}


def _model_params(model: MoEModel) -> dict:
    out: dict = {}
    for i, layer in enumerate(model.backbone.layers):
        out.update(_layer_params(f"backbone.{i}", layer))
    for j, ex in enumerate(model.experts):
        out.update(_layer_params(f"expert.{j}.hidden", ex.hidden))
        out.update(_layer_params(f"expert.{j}.clf", ex.clf))
        out.update(_layer_params(f"expert.{j}.reg", ex.reg))
    return out


def _load_layer(params: dict, name: str, layer: DenseLayer) -> None:
    for part, tensor in (("weight", layer.weight), ("bias", layer.bias)):
        key = f"{name}.{part}"
        if key not in params:
            raise CheckpointError(f"checkpoint missing parameter {key}")
        arr = _decode(params[key])
        if arr.shape != tensor.data.shape:
            raise CheckpointError(f"parameter {key}: shape {arr.shape} != {tensor.data.shape}")
        tensor.data[...] = arr


@dataclass
class Checkpoint:
    model: MoEModel
    bank: RouterBank | None
    stats: FeatureStats
    k: int
    tau: int
    seed: int


def save(path: str | Path, model: MoEModel, bank: RouterBank | None,
         stats: FeatureStats, k: int, tau: int, seed: int) -> None:
    doc = {
        "format": FORMAT,
        "seed": seed,
        "dataset": {
            "k": k,
            "tau": tau,
            "features": list(FEATURE_NAMES),
            "mean": _encode(stats.mean),
            "std": _encode(stats.std),
        },
        "model": {
            "input_dim": model.input_dim,
            "hidden": model.hidden,
            "n_experts": model.n_experts,
            "params": _model_params(model),
        },
        "router": None,
    }
    if bank is not None:
        params: dict = {}
        params.update(_layer_params("reduce", bank.reduce))
        for i, d in enumerate(bank.deciders):
            params.update(_layer_params(f"decider.{i}", d))
        doc["router"] = {
            "omega": bank.omega,
            "gate_threshold": bank.gate_threshold,
            "stat_mode": bank.stat_mode,
            "params": params,
        }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load(path: str | Path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    ds = doc["dataset"]
    if ds["features"] != list(FEATURE_NAMES):
        raise CheckpointError(f"{path}: feature schema {ds['features']} does not match this build")
    md = doc["model"]
    rng = np.random.default_rng(0)  # placeholder init, immediately overwritten
    model = MoEModel(rng, md["input_dim"], md["hidden"], md["n_experts"])
    for i, layer in enumerate(model.backbone.layers):
        _load_layer(md["params"], f"backbone.{i}", layer)
    for j, ex in enumerate(model.experts):
        _load_layer(md["params"], f"expert.{j}.hidden", ex.hidden)
        _load_layer(md["params"], f"expert.{j}.clf", ex.clf)
        _load_layer(md["params"], f"expert.{j}.reg", ex.reg)
    bank = None
    if doc.get("router") is not None:
        rd = doc["router"]
        bank = RouterBank(rng, md["hidden"], md["n_experts"],
                          omega=rd["omega"], gate_threshold=rd["gate_threshold"],
                          stat_mode=rd["stat_mode"])
        _load_layer(rd["params"], "reduce", bank.reduce)
        for i, d in enumerate(bank.deciders):
            _load_layer(rd["params"], f"decider.{i}", d)
    stats = FeatureStats(_decode(ds["mean"]), _decode(ds["std"]))
    return Checkpoint(model, bank, stats, ds["k"], ds["tau"], doc["seed"])
