"""Command-line interface.

Subcommands::

    featurize    build the dataset, write the manifest and a feature dump
    train        stage-1 (+ stage-2) training over all seeds, with artifacts
    backtest     run the trading strategy from a saved checkpoint
    ablate       component on/off table across the chosen axes
    gridsearch   hyperparameter search selected on validation total return
    report       aggregate per-seed metrics and render equity curves to SVG

Every subcommand reads a YAML config (--config); repeated --set key=value
flags override file values (values parsed as YAML, nested keys dotted, e.g.
--set data.synth.days=400). Exit status is 0 on success, 2 on a diagnosed
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from alphamix import checkpoint, config, experiments
from alphamix.backtest import CalendarMismatch, render_equity_svg
from alphamix.checkpoint import CheckpointError
from alphamix.config import ConfigError, RunConfig
from alphamix.dataset import FEATURE_NAMES, ConfigError as SplitError, write_manifest
from alphamix.marketdata import DataError
from alphamix.moe import TrainingDiverged


def _apply_overrides(doc: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = doc
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part!r} is not a mapping")
        node[parts[-1]] = value
    return doc


def _load_config(args) -> RunConfig:
    if args.config:
        doc = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: config root must be a mapping")
    else:
        doc = {}
    _apply_overrides(doc, args.set or [])
    return config.from_mapping(doc)


def cmd_featurize(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = experiments.prepare_data(cfg, cfg.seeds[0])
    write_manifest(out / "manifest.txt", data)
    header = "split,stock,date," + ",".join(FEATURE_NAMES) + ",y,r"
    lines = [header]
    for split_name, samples in (("train", data.train), ("valid", data.valid),
                                ("test", data.test)):
        for s in samples:
            feats = ",".join(repr(float(v)) for v in s.window[-1])
            lines.append(f"{split_name},{s.stock},{s.date},{feats},{s.y},{float(s.r)!r}")
    (out / "features.csv").write_text("\n".join(lines) + "\n")
    print(f"featurize: {len(lines) - 1} samples -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    results = experiments.run_config(cfg, args.out)
    stats = experiments.aggregate(results)
    for name, (mean, std) in stats.items():
        print(f"{name}: {mean:.6f} +/- {std:.6f}")
    print(f"train: artifacts in {args.out}")
    return 0


def cmd_backtest(args) -> int:
    ckpt = checkpoint.load(args.checkpoint)
    cfg = _load_config(args)
    if args.top_k is not None:
        cfg = cfg.with_toggles(top_k=args.top_k)
    cfg = cfg.with_toggles(k=ckpt.k, tau=ckpt.tau, n_experts=ckpt.model.n_experts,
                           router=cfg.router and ckpt.bank is not None)
    data = experiments.prepare_data(cfg, ckpt.seed)
    if data.input_dim != ckpt.model.input_dim:
        raise CheckpointError(
            f"checkpoint expects input dim {ckpt.model.input_dim}, "
            f"data provides {data.input_dim}")
    data.stats = ckpt.stats  # normalize exactly as the model was trained
    report = experiments.evaluate_split(ckpt.model, ckpt.bank, data, data.test, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_metrics(out / "metrics.txt")
    report.write_equity_csv(out / "equity.csv")
    report.write_positions_csv(out / "positions.csv")
    for name in ("tr", "sr", "cr", "sor", "mdd"):
        print(f"{name}: {report.metrics[name]:.6f}")
    print(f"backtest: report in {out}")
    return 0


def _parse_experts_list(raw: str | None) -> list[int] | None:
    if raw is None:
        return None
    if ":" in raw:
        lo, hi = raw.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in raw.split(",") if x]


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    axes = [a.strip() for a in args.axes.split(",") if a.strip()]
    rows = experiments.run_ablation(cfg, axes, args.out,
                                    experts_values=_parse_experts_list(args.experts))
    cols = ("variant", "experts", "multi_task", "uncertainty", "router")
    print(" | ".join(f"{c:>11}" for c in cols) + " | " +
          " | ".join(f"{m + '(%)' if m == 'tr' else m:>14}" for m in ("tr", "sr", "cr", "sor")))
    for row in rows:
        cells = [f"{str(row[c]):>11}" for c in cols]
        for metric in ("tr", "sr", "cr", "sor"):
            mean = row.get(f"{metric}_mean", float("nan"))
            std = row.get(f"{metric}_std", float("nan"))
            scale = 100.0 if metric == "tr" else 1.0
            cells.append(f"{mean * scale:7.2f}+/-{std * scale:5.2f}")
        print(" | ".join(cells))
    print(f"ablate: {len(rows)} variants -> {args.out}")
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _load_config(args)
    if args.grid:
        grid: dict[str, list] = {}
        for item in args.grid:
            if "=" not in item:
                raise ConfigError(f"--grid expects axis=v1,v2,..., got {item!r}")
            axis, raw = item.split("=", 1)
            grid[axis.strip()] = [yaml.safe_load(v) for v in raw.split(",") if v]
    else:
        grid = dict(experiments.DEFAULT_GRID)
    best_cfg, results = experiments.run_gridsearch(cfg, grid, args.out)
    stats = experiments.aggregate(results)
    chosen = {a: getattr(best_cfg, a) for a in grid}
    print(f"best cell: {chosen}")
    for name, (mean, std) in stats.items():
        print(f"test {name}: {mean:.6f} +/- {std:.6f}")
    return 0


def _read_metrics(path: Path) -> dict[str, float]:
    out: dict[str, float] = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            out[key.strip()] = float(value.strip())
    return out


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    seed_dirs = sorted(run_dir.glob("seed_*"))
    if not seed_dirs:
        raise ConfigError(f"{run_dir}: no seed_* run directories found")
    per_seed = []
    for d in seed_dirs:
        metrics = _read_metrics(d / "metrics.txt")
        per_seed.append(metrics)
        dates, equity = _read_equity(d / "equity.csv")
        title = f"{d.name} equity (TR {metrics.get('tr', 0.0) * 100:.2f}%)"
        render_equity_svg(dates, equity, d / "equity.svg", title)
    lines = []
    for name in experiments.METRIC_NAMES:
        values = np.array([m[name] for m in per_seed if name in m])
        if values.size:
            with np.errstate(invalid="ignore", over="ignore"):
                mean, std = float(values.mean()), float(values.std())
            lines.append(f"{name}.mean = {mean!r}")
            lines.append(f"{name}.std = {std!r}")
            print(f"{name}: {mean:.6f} +/- {std:.6f}")
    (run_dir / "aggregate.txt").write_text(
        f"seeds = {','.join(d.name.removeprefix('seed_') for d in seed_dirs)}\n"
        + "\n".join(lines) + "\n")
    print(f"report: {len(seed_dirs)} runs aggregated in {run_dir}")
    return 0


def _read_equity(path: Path):
    import datetime as dt

    dates, values = [], [1.0]
    for line in path.read_text().splitlines()[1:]:
        parts = line.split(",")
        dates.append(dt.date.fromisoformat(parts[0]))
        values.append(float(parts[1]))
    return dates, np.array(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alphamix",
                                     description="Routed mixture-of-experts trading pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("featurize", help="build features/labels and the dataset manifest")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="two-stage training over all seeds")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("backtest", help="backtest a checkpoint on the test split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("ablate", help="component ablation table")
    common(p)
    p.add_argument("--axes", required=True,
                   help="comma list from: experts,multi_task,uncertainty,router")
    p.add_argument("--experts", default=None,
                   help="expert counts for the experts axis, e.g. 2:8 or 2,4,8")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gridsearch", help="hyperparameter grid search on validation TR")
    common(p)
    p.add_argument("--grid", action="append", metavar="AXIS=V1,V2,...",
                   help="grid axis values (repeatable); default mirrors the full sweep")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("report", help="aggregate per-seed reports and render SVG curves")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SplitError, DataError, CheckpointError,
            CalendarMismatch, TrainingDiverged, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
