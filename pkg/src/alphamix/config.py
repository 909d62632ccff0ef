"""Run configuration: YAML schema, validation, and seed derivation.

Schema (all keys optional unless marked; flat YAML mapping with three nested
sections)::

    data:
      csv: path                # CSV file or directory (exactly one of csv /
      synth:                   # synth must be present)
        seed: 7                # market seed; null derives it from each run seed
        stocks: 20
        days: 800
        regime: trend          # trend | meanrevert | noise
    split:
      train_frac: 0.70         # either fractions ...
      valid_frac: 0.15
      train_end: 2001-06-30    # ... or explicit ISO dates
      valid_end: 2001-12-31
      start: null
      test_end: null
    k: 4                       # window holds k+1 feature rows
    tau: 1                     # label horizon in bars
    n_experts: 4
    hidden: 32
    lam: 0.85                  # regression weight in the individual loss
    w1: 1.0                    # variation-ratio weight
    w2: 1.0                    # volatility weight
    omega: 1.7                 # router BCE weight on switch-on labels
    gate_threshold: 0.5
    router_stat_mode: probability   # probability | logit
    lr: 0.001
    batch_size: 64
    epochs: 10
    top_k: 4
    cost_per_trade: 0.0
    annualize: false
    sor_variance_mode: false
    seeds: [0]
    multi_task: true
    uncertainty: true
    router: true
    collaborative: false       # swap the individual loss for the collaborative one
    jobs: 1

One master seed per run expands into named per-component streams (market
synthesis, parameter init, batch shuffling, ...) so toggling one component
never shifts another component's random stream.
"""

from __future__ import annotations

import datetime as dt
import zlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from alphamix.marketdata import REGIMES


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


def component_rng(master_seed: int, component: str) -> np.random.Generator:
    """Independent deterministic stream for one named component of one run."""
    tag = zlib.crc32(component.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, tag]))


@dataclass(frozen=True)
class RunConfig:
    # data source: exactly one of csv_path / synth
    csv_path: str | None = None
    synth_seed: int | None = 7
    synth_stocks: int = 20
    synth_days: int = 800
    synth_regime: str = "trend"
    use_synth: bool = True
    # split
    train_frac: float | None = 0.70
    valid_frac: float | None = 0.15
    train_end: dt.date | None = None
    valid_end: dt.date | None = None
    split_start: dt.date | None = None
    test_end: dt.date | None = None
    # windowing
    k: int = 4
    tau: int = 1
    # model
    n_experts: int = 4
    hidden: int = 32
    # losses
    lam: float = 0.85
    w1: float = 1.0
    w2: float = 1.0
    omega: float = 1.7
    gate_threshold: float = 0.5
    router_stat_mode: str = "probability"
    # optimization
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 10
    # strategy
    top_k: int = 4
    cost_per_trade: float = 0.0
    annualize: bool = False
    sor_variance_mode: bool = False
    # orchestration
    seeds: tuple[int, ...] = (0,)
    multi_task: bool = True
    uncertainty: bool = True
    router: bool = True
    collaborative: bool = False
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.use_synth == (self.csv_path is not None):
            raise ConfigError("field 'data': provide exactly one of data.csv / data.synth")
        if self.use_synth and self.synth_regime not in REGIMES:
            raise ConfigError(f"field 'data.synth.regime': {self.synth_regime!r} not in {REGIMES}")
        if self.use_synth and self.synth_days < 60:
            raise ConfigError(f"field 'data.synth.days': need >= 60, got {self.synth_days}")
        if self.use_synth and self.synth_stocks < 1:
            raise ConfigError(f"field 'data.synth.stocks': need >= 1, got {self.synth_stocks}")
        has_fracs = self.train_frac is not None and self.valid_frac is not None
        has_dates = self.train_end is not None and self.valid_end is not None
        if not (has_fracs or has_dates):
            raise ConfigError("field 'split': give train_frac/valid_frac or train_end/valid_end")
        if self.k < 0:
            raise ConfigError(f"field 'k': need >= 0, got {self.k}")
        if self.tau < 1:
            raise ConfigError(f"field 'tau': need >= 1, got {self.tau}")
        if self.n_experts < 1:
            raise ConfigError(f"field 'n_experts': need >= 1, got {self.n_experts}")
        if self.hidden < 1:
            raise ConfigError(f"field 'hidden': need >= 1, got {self.hidden}")
        for name in ("lam", "w1", "w2", "omega", "lr", "cost_per_trade"):
            if getattr(self, name) < 0:
                raise ConfigError(f"field '{name}': must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.gate_threshold <= 1.0:
            raise ConfigError(f"field 'gate_threshold': must be in [0,1], got {self.gate_threshold}")
        if self.router_stat_mode not in ("probability", "logit"):
            raise ConfigError(f"field 'router_stat_mode': {self.router_stat_mode!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("fields 'batch_size'/'epochs': must be >= 1")
        if self.top_k < 1:
            raise ConfigError(f"field 'top_k': need >= 1, got {self.top_k}")
        if not self.seeds:
            raise ConfigError("field 'seeds': need at least one seed")
        if self.jobs < 1:
            raise ConfigError(f"field 'jobs': need >= 1, got {self.jobs}")
        if self.uncertainty and self.n_experts < 2:
            raise ConfigError("field 'uncertainty': needs n_experts >= 2 "
                              "(dispersion over a single expert is undefined)")
        if self.uncertainty and not self.multi_task:
            raise ConfigError("field 'uncertainty': needs multi_task "
                              "(the volatility term penalizes return estimates)")
        if self.router and self.n_experts < 2:
            raise ConfigError("field 'router': needs n_experts >= 2")
        if self.router and not self.multi_task:
            raise ConfigError("field 'router': needs multi_task "
                              "(switch-off labels check the return sign)")
        return self

    def with_toggles(self, **changes) -> "RunConfig":
        return replace(self, **changes).validate()


def _date(value, where: str) -> dt.date | None:
    if value is None:
        return None
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"field '{where}': not an ISO date: {value!r}") from None


def from_mapping(doc: dict) -> RunConfig:
    """Build and validate a RunConfig from a parsed YAML mapping."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    doc = dict(doc)
    kwargs: dict = {}

    data = doc.pop("data", {}) or {}
    if "csv" in data and data["csv"] is not None:
        kwargs["csv_path"] = str(data["csv"])
        kwargs["use_synth"] = False
    synth = data.get("synth")
    if synth is not None:
        kwargs["use_synth"] = True
        kwargs["synth_seed"] = synth.get("seed", 7)
        kwargs["synth_stocks"] = int(synth.get("stocks", 20))
        kwargs["synth_days"] = int(synth.get("days", 800))
        kwargs["synth_regime"] = str(synth.get("regime", "trend"))

    split = doc.pop("split", {}) or {}
    if "train_end" in split or "valid_end" in split:
        kwargs["train_end"] = _date(split.get("train_end"), "split.train_end")
        kwargs["valid_end"] = _date(split.get("valid_end"), "split.valid_end")
        kwargs["split_start"] = _date(split.get("start"), "split.start")
        kwargs["test_end"] = _date(split.get("test_end"), "split.test_end")
        kwargs["train_frac"] = None
        kwargs["valid_frac"] = None
    else:
        if "train_frac" in split:
            kwargs["train_frac"] = float(split["train_frac"])
        if "valid_frac" in split:
            kwargs["valid_frac"] = float(split["valid_frac"])

    if "seeds" in doc:
        seeds = doc.pop("seeds")
        if not isinstance(seeds, (list, tuple)):
            raise ConfigError("field 'seeds': must be a list of integers")
        kwargs["seeds"] = tuple(int(s) for s in seeds)

    known = {f.name for f in fields(RunConfig)}
    for key, value in doc.items():
        if key not in known:
            raise ConfigError(f"field '{key}': unknown configuration key")
        kwargs[key] = value
    try:
        cfg = RunConfig(**kwargs)
    except TypeError as err:
        raise ConfigError(f"bad configuration: {err}") from None
    return cfg.validate()


def load_yaml(path: str | Path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: not valid YAML: {err}") from None
    return from_mapping(doc or {})


def to_mapping(cfg: RunConfig) -> dict:
    """Round-trippable plain mapping (YAML-safe types only)."""
    out: dict = {
        "data": ({"csv": cfg.csv_path} if not cfg.use_synth else
                 {"synth": {"seed": cfg.synth_seed, "stocks": cfg.synth_stocks,
                            "days": cfg.synth_days, "regime": cfg.synth_regime}}),
        "split": ({"train_frac": cfg.train_frac, "valid_frac": cfg.valid_frac}
                  if cfg.train_frac is not None else
                  {"train_end": str(cfg.train_end), "valid_end": str(cfg.valid_end),
                   "start": None if cfg.split_start is None else str(cfg.split_start),
                   "test_end": None if cfg.test_end is None else str(cfg.test_end)}),
        "seeds": list(cfg.seeds),
    }
    simple = ("k", "tau", "n_experts", "hidden", "lam", "w1", "w2", "omega",
              "gate_threshold", "router_stat_mode", "lr", "batch_size", "epochs",
              "top_k", "cost_per_trade", "annualize", "sor_variance_mode",
              "multi_task", "uncertainty", "router", "collaborative", "jobs")
    for name in simple:
        out[name] = getattr(cfg, name)
    return out


def dump_yaml(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(to_mapping(cfg), sort_keys=True))
