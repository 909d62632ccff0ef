"""Experiment orchestration: single runs, multi-seed aggregation, ablation
tables, and grid search.

A run is fully determined by (config, seed): the market (when synthetic), the
parameter init, and the batch order all derive from named per-run streams.
Artifacts written for a run therefore reproduce byte-identically. Grid and
ablation cells are independent runs and may execute in parallel worker
processes; aggregation happens single-threaded afterwards.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from alphamix import checkpoint
from alphamix.backtest import BacktestReport, realized_returns, run_strategy, signals_from_model
from alphamix.config import ConfigError, RunConfig, component_rng, dump_yaml
from alphamix.dataset import SplitData, SplitSpec, build_dataset, write_manifest
from alphamix.marketdata import MarketFrame, load_csv, synth_market
from alphamix.moe import LossWeights, MoEModel, TrainLog, TrainingDiverged, train_stage1
from alphamix.router import RouterBank, RouterTrainLog, train_stage2

log = logging.getLogger(__name__)

METRIC_NAMES = ("tr", "sr", "cr", "sor", "mdd", "experts_mean")


def prepare_frame(cfg: RunConfig, run_seed: int) -> MarketFrame:
    if not cfg.use_synth:
        return load_csv(cfg.csv_path)
    seed = cfg.synth_seed
    if seed is None:
        seed = int(component_rng(run_seed, "synth-market").integers(0, 2**31 - 1))
    return synth_market(seed, cfg.synth_stocks, cfg.synth_days, cfg.synth_regime)


def prepare_data(cfg: RunConfig, run_seed: int) -> SplitData:
    frame = prepare_frame(cfg, run_seed)
    if cfg.train_frac is not None:
        split = SplitSpec.from_fractions(frame.calendar, cfg.train_frac, cfg.valid_frac)
    else:
        split = SplitSpec(train_end=cfg.train_end, valid_end=cfg.valid_end,
                          start=cfg.split_start, test_end=cfg.test_end)
    return build_dataset(frame, cfg.k, cfg.tau, split)


def data_is_seed_independent(cfg: RunConfig) -> bool:
    return (not cfg.use_synth) or cfg.synth_seed is not None


@dataclass
class RunResult:
    seed: int
    metrics: dict[str, float]
    best_epoch: int
    report: BacktestReport


def train_model(cfg: RunConfig, data: SplitData,
                seed: int) -> tuple[MoEModel, RouterBank | None, TrainLog, RouterTrainLog | None]:
    """Stage-1 training, then stage-2 routing unless toggled off."""
    train = data.matrix(data.train)
    valid = data.matrix(data.valid)
    model = MoEModel(component_rng(seed, "model-init"), data.input_dim,
                     cfg.hidden, cfg.n_experts)
    weights = LossWeights(
        lam=cfg.lam if cfg.multi_task else 0.0,
        w1=cfg.w1 if cfg.uncertainty else 0.0,
        w2=cfg.w2 if cfg.uncertainty else 0.0,
    )
    log1 = train_stage1(model, train, valid,
                        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                        weights=weights, rng=component_rng(seed, "stage1-batches"),
                        collaborative=cfg.collaborative)
    bank = None
    log2 = None
    if cfg.router:
        bank = RouterBank(component_rng(seed, "router-init"), model.embed_dim,
                          cfg.n_experts, omega=cfg.omega,
                          gate_threshold=cfg.gate_threshold,
                          stat_mode=cfg.router_stat_mode)
        log2 = train_stage2(bank, model, train,
                            epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                            rng=component_rng(seed, "stage2-batches"))
    return model, bank, log1, log2


def evaluate_split(model: MoEModel, bank: RouterBank | None, data: SplitData,
                   samples, cfg: RunConfig) -> BacktestReport:
    """Backtest one sample collection (certainty filter needs both tasks)."""
    signals = signals_from_model(model, bank, data, samples)
    report = run_strategy(signals, realized_returns(samples), cfg.top_k,
                          use_certainty=cfg.multi_task,
                          cost_per_trade=cfg.cost_per_trade,
                          annualize=cfg.annualize,
                          sor_variance_mode=cfg.sor_variance_mode)
    used = [s.experts_used for day in signals.values() for s in day.values()]
    report.metrics["experts_mean"] = float(np.mean(used))
    report.metrics["experts_one_frac"] = float(np.mean([u == 1 for u in used]))
    return report


def run_single(cfg: RunConfig, seed: int, outdir: str | Path | None = None,
               data: SplitData | None = None) -> RunResult:
    """Train, route, and backtest the test split for one seed."""
    if data is None:
        data = prepare_data(cfg, seed)
    model, bank, log1, log2 = train_model(cfg, data, seed)
    report = evaluate_split(model, bank, data, data.test, cfg)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        dump_yaml(replace(cfg, seeds=(seed,)), outdir / "config.yaml")
        write_manifest(outdir / "manifest.txt", data)
        checkpoint.save(outdir / "checkpoint.json", model, bank, data.stats,
                        data.k, data.tau, seed)
        log1.write_csv(outdir / "train_log.csv")
        if log2 is not None:
            log2.write_csv(outdir / "router_log.csv")
        report.write_metrics(outdir / "metrics.txt")
        report.write_equity_csv(outdir / "equity.csv")
        report.write_positions_csv(outdir / "positions.csv")
    return RunResult(seed, dict(report.metrics), log1.best_epoch, report)


def _run_single_task(args) -> RunResult:
    cfg, seed, outdir = args
    return run_single(cfg, seed, outdir)


def _map_tasks(tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_single_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_single_task, tasks))


def aggregate(results: list[RunResult]) -> dict[str, tuple[float, float]]:
    """Per-metric (mean, population std) over seeds.

    Sentinel values (inf/NaN from degenerate metrics) propagate into the
    aggregate rather than being dropped.
    """
    out: dict[str, tuple[float, float]] = {}
    for name in METRIC_NAMES:
        values = np.array([r.metrics[name] for r in results if name in r.metrics])
        if values.size:
            with np.errstate(invalid="ignore", over="ignore"):
                out[name] = (float(values.mean()), float(values.std()))
    return out


def write_aggregate(path: str | Path, results: list[RunResult]) -> None:
    stats = aggregate(results)
    lines = [f"seeds = {','.join(str(r.seed) for r in results)}"]
    for name, (mean, std) in stats.items():
        lines.append(f"{name}.mean = {mean!r}")
        lines.append(f"{name}.std = {std!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def run_config(cfg: RunConfig, outdir: str | Path) -> list[RunResult]:
    """All seeds of one config; per-seed artifact dirs plus an aggregate file."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dump_yaml(cfg, outdir / "config.yaml")
    tasks = [(cfg, seed, outdir / f"seed_{seed}") for seed in cfg.seeds]
    results = _map_tasks(tasks, cfg.jobs)
    write_aggregate(outdir / "aggregate.txt", results)
    return results


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

ABLATION_AXES = ("experts", "multi_task", "uncertainty", "router")


def ablation_variants(cfg: RunConfig, axes: list[str],
                      experts_values: list[int] | None = None) -> list[tuple[str, RunConfig]]:
    """Cross product over the chosen axes, pruned to coherent combinations.

    Pruning keeps the canonical component ladder: the uncertainty losses need
    the multi-task head and >= 2 experts, and the router builds on the
    uncertainty-trained mixture. With every axis selected this yields the
    six-variant table (plain/multi-task singles, plain/multi-task mixtures,
    + uncertainty, + router).
    """
    for axis in axes:
        if axis not in ABLATION_AXES:
            raise ConfigError(f"ablation axis {axis!r} not in {ABLATION_AXES}")
    experts = experts_values if experts_values else sorted({1, cfg.n_experts})
    grid = {
        "experts": experts if "experts" in axes else [cfg.n_experts],
        "multi_task": [False, True] if "multi_task" in axes else [cfg.multi_task],
        "uncertainty": [False, True] if "uncertainty" in axes else [cfg.uncertainty],
        "router": [False, True] if "router" in axes else [cfg.router],
    }
    variants: list[tuple[str, RunConfig]] = []
    for n, mt, unc, rt in itertools.product(grid["experts"], grid["multi_task"],
                                            grid["uncertainty"], grid["router"]):
        if unc and (not mt or n < 2):
            continue
        if rt and (not unc or n < 2):
            continue
        name = f"e{n}" + ("-mt" if mt else "") + ("-unc" if unc else "") + ("-router" if rt else "")
        variant = cfg.with_toggles(n_experts=n, multi_task=mt, uncertainty=unc, router=rt)
        variants.append((name, variant))
    return variants


def run_ablation(cfg: RunConfig, axes: list[str], outdir: str | Path,
                 experts_values: list[int] | None = None) -> list[dict]:
    """Run every variant over the config's seeds and emit one table row each."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    variants = ablation_variants(cfg, axes, experts_values)
    rows: list[dict] = []
    for name, variant in variants:
        results = run_config(variant, outdir / name)
        stats = aggregate(results)
        row = {"variant": name, "experts": variant.n_experts,
               "multi_task": variant.multi_task, "uncertainty": variant.uncertainty,
               "router": variant.router}
        for metric, (mean, std) in stats.items():
            row[f"{metric}_mean"] = mean
            row[f"{metric}_std"] = std
        rows.append(row)
    _write_table(outdir / "ablation.csv", rows)
    return rows


def _write_table(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("\n")
        return
    cols = list(rows[0])
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_cell(row.get(c)) for c in cols))
    path.write_text("\n".join(lines) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

DEFAULT_GRID = {
    "n_experts": [2, 3, 4, 5, 6, 7, 8],
    "lam": [0.1, 0.5, 1.0, 5.0, 10.0],
    "hidden": [16, 32, 64],
    "lr": [1e-5, 1e-4, 1e-3],
}


def _search_cell_task(args) -> float:
    return _search_cell(*args)


def _search_cell(cfg: RunConfig, data: SplitData | None) -> float:
    """Mean validation total return over the config's seeds (never test).

    A diverging cell scores -inf so the search can still pick a survivor.
    """
    trs = []
    for seed in cfg.seeds:
        cell_data = data if data is not None else prepare_data(cfg, seed)
        try:
            model, bank, _, _ = train_model(cfg, cell_data, seed)
        except TrainingDiverged as err:
            log.warning("grid cell diverged (seed %d): %s", seed, err)
            return float("-inf")
        report = evaluate_split(model, bank, cell_data, cell_data.valid, cfg)
        trs.append(report.metrics["tr"])
    return float(np.mean(trs))


def run_gridsearch(cfg: RunConfig, grid: dict[str, list], outdir: str | Path
                   ) -> tuple[RunConfig, list[RunResult]]:
    """Pick the cell with the best mean validation TR, then evaluate the
    winner on the test split exactly once.

    The search loop touches only the train and valid splits; the shared
    SplitData access log records markers around it so tests can audit that
    the test split stayed unread during selection.
    """
    if not grid or any(not v for v in grid.values()):
        raise ConfigError("grid search needs at least one axis with values")
    for key in grid:
        if key not in DEFAULT_GRID:
            raise ConfigError(f"grid axis {key!r} not in {tuple(DEFAULT_GRID)}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    shared = prepare_data(cfg, cfg.seeds[0]) if data_is_seed_independent(cfg) else None
    axes = sorted(grid)
    cells = [dict(zip(axes, combo)) for combo in itertools.product(*(grid[a] for a in axes))]

    if shared is not None:
        shared.mark("search_start")
    if cfg.jobs > 1 and len(cells) > 1:
        tasks = [(cfg.with_toggles(**cell), shared) for cell in cells]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            trs = list(pool.map(_search_cell_task, tasks))
    else:
        trs = [_search_cell(cfg.with_toggles(**cell), shared) for cell in cells]
    if shared is not None:
        shared.mark("search_end")

    scored = [(tr, i, cell) for i, (tr, cell) in enumerate(zip(trs, cells))]
    lines = [",".join(axes) + ",valid_tr"]
    for tr, _, cell in scored:
        lines.append(",".join(str(cell[a]) for a in axes) + f",{tr!r}")
    (outdir / "gridsearch.csv").write_text("\n".join(lines) + "\n")

    best_tr, _, best_cell = max(scored, key=lambda s: (s[0], -s[1]))
    best_cfg = cfg.with_toggles(**best_cell)
    dump_yaml(best_cfg, outdir / "best.yaml")
    if shared is None:
        results = run_config(best_cfg, outdir / "best")
    else:
        best_dir = outdir / "best"
        best_dir.mkdir(parents=True, exist_ok=True)
        dump_yaml(best_cfg, best_dir / "config.yaml")
        results = [run_single(best_cfg, seed, best_dir / f"seed_{seed}", data=shared)
                   for seed in best_cfg.seeds]
        write_aggregate(best_dir / "aggregate.txt", results)
    return best_cfg, results
