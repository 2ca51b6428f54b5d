"""Command-line entry points: train, backtest, search, report.

Every run directory is self-describing: it holds the exact config snapshot and
seed that produced it, and re-running a command with the same config and seed
reproduces its report files byte for byte (reports carry no timestamps).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (
    BacktestResult,
    EquityCurve,
    compute_metrics,
    quarterly_returns,
    run_backtest,
    write_trace_jsonl,
)
from .baselines import index_hold
from .config import (
    RunConfig,
    SearchSpace,
    apply_overrides,
    dump_config,
    load_config,
    save_config,
    trader_kwargs,
)
from .data import PricePanel, load_panel, read_asset_csv, split_panel
from .errors import ConfigError, FinxploreError, MissingArtifactsError
from .strategies import (
    DrlTrader,
    FollowLoserStrategy,
    FollowWinnerStrategy,
    MeanVarianceStrategy,
)

TRAINED_STRATEGIES = ("finxplore", "no-explore")
ALL_STRATEGIES = TRAINED_STRATEGIES + ("mvo", "winner", "loser", "index")

METRIC_COLUMNS = (
    "cumulative_return_pct",
    "annualized_return_pct",
    "sharpe",
    "calmar",
    "annual_volatility_pct",
    "max_drawdown",
)


def _json_dump(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _load_universe(config: RunConfig):
    spec = config.data.universe_spec()
    existing, extended = load_panel(config.data.resolved_directory(), spec)
    warmup = config.environment.warmup
    train_ex, trade_ex = split_panel(existing, spec, warmup)
    if extended.n_assets:
        train_ext, trade_ext = split_panel(extended, spec, warmup)
    else:
        train_ext = trade_ext = None
    return train_ex, trade_ex, train_ext, trade_ext


def _build_trader(config: RunConfig, strategy: str) -> DrlTrader:
    return DrlTrader(explore=strategy == "finxplore", **trader_kwargs(config))


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = apply_overrides(config, {"run.seed": args.seed})
    out = Path(args.out) if args.out else Path(config.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    train_ex, _, train_ext, _ = _load_universe(config)
    trader = _build_trader(config, args.strategy)
    trader.fit(train_ex, train_ext if trader.explore else None)

    save_config(config, out / "config.toml")
    trader.save_checkpoint(out / "checkpoint.npz")
    if trader.best_snapshot_ is not None:
        trader.save_checkpoint(out / "checkpoint_best.npz", which="best")
    report = trader.report_
    payload = {
        "package_version": __version__,
        "strategy": args.strategy,
        "seed": config.run.seed,
        "best_episode": report.best_episode,
        "best_train_sharpe": report.best_train_sharpe
        if np.isfinite(report.best_train_sharpe)
        else None,
        "episodes": report.episodes,
    }
    _json_dump(payload, out / "training_report.json")
    print(
        f"trained {args.strategy} for {config.run.episodes} episodes "
        f"(best train Sharpe {report.best_train_sharpe:.4f} at episode "
        f"{report.best_episode}); artifacts in {out}"
    )
    return 0


def _index_backtest(config: RunConfig, panel: PricePanel, start_index: int) -> BacktestResult:
    if not config.data.index:
        raise ConfigError("data.index: required for --strategy index")
    path = config.data.resolved_directory() / f"{config.data.index}.csv"
    rows = read_asset_csv(path)
    wanted = set(panel.dates[start_index:])
    dates = sorted(d for d in rows if d in wanted)
    if not dates:
        raise MissingArtifactsError(f"index {config.data.index} has no rows in the range")
    closes = np.array([rows[d][3] for d in dates])
    curve = EquityCurve(tuple(dates), index_hold(closes, config.environment.initial_capital))
    trace = [
        {"date": d.isoformat(), "wealth": float(w)} for d, w in zip(curve.dates, curve.wealth)
    ]
    return BacktestResult(curve=curve, trace=trace, metrics=compute_metrics(curve))


def cmd_backtest(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = apply_overrides(config, {"run.seed": args.seed})
    out = Path(args.out) if args.out else Path(config.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    train_ex, trade_ex, train_ext, trade_ext = _load_universe(config)
    warnings = []
    if args.split == "train":
        warnings.append(
            "backtest ran on the training split: results are in-sample (data leak)"
        )
        panel, extended = train_ex, train_ext
    else:
        panel, extended = trade_ex, trade_ext
    warmup = config.environment.warmup

    if args.strategy == "index":
        result = _index_backtest(config, panel, warmup)
    else:
        if args.strategy in TRAINED_STRATEGIES:
            if not args.checkpoint:
                raise ConfigError(f"--checkpoint is required for --strategy {args.strategy}")
            strategy = _build_trader(config, args.strategy).load_checkpoint(args.checkpoint)
        elif args.strategy == "mvo":
            strategy = MeanVarianceStrategy(
                window=config.baselines.mvo_window,
                risk_aversion=config.baselines.mvo_risk_aversion,
            )
        elif args.strategy == "winner":
            strategy = FollowWinnerStrategy()
        else:
            strategy = FollowLoserStrategy()
        result = run_backtest(
            strategy,
            panel,
            extended if strategy.uses_extended else None,
            start_index=warmup,
            transaction_cost=config.environment.transaction_cost,
            reward_window=config.environment.reward_window,
            initial_capital=config.environment.initial_capital,
            cov_window=config.environment.covariance_window,
        )

    save_config(config, out / "config.toml")
    payload = {
        "package_version": __version__,
        "strategy": args.strategy,
        "seed": config.run.seed,
        "split": args.split,
        "warnings": warnings,
        "metrics": result.metrics.to_dict(),
    }
    _json_dump(payload, out / "metrics.json")
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("strategy", "seed") + METRIC_COLUMNS)
        row = result.metrics.csv_row()
        writer.writerow([args.strategy, config.run.seed] + [row[c] for c in METRIC_COLUMNS])
    result.curve.write_csv(out / "equity.csv")
    write_trace_jsonl(result.trace, out / "trace.jsonl")
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    sharpe = result.metrics.sharpe
    print(
        f"backtested {args.strategy} on the {args.split} split: cumulative return "
        f"{result.metrics.cumulative_return:.2f}%, Sharpe "
        f"{'n/a' if sharpe is None else f'{sharpe:.3f}'}; artifacts in {out}"
    )
    return 0


def _search_worker(payload):
    """Train one sampled config on the fit slice, score Sharpe on the validation slice."""
    sample_id, config, overrides, panels = payload
    train_ex, train_ext = panels
    warmup = config.environment.warmup
    try:
        cfg = apply_overrides(config, overrides)
        split = int(0.8 * train_ex.n_rows)
        if split <= warmup or train_ex.n_rows - split < 2:
            raise ConfigError("training range too short for an 80/20 validation split")
        fit_ex = train_ex.slice_rows(0, split)
        fit_ext = train_ext.slice_rows(0, split) if train_ext is not None else None
        val_ex = train_ex.slice_rows(split - warmup, train_ex.n_rows)
        val_ext = (
            train_ext.slice_rows(split - warmup, train_ex.n_rows)
            if train_ext is not None
            else None
        )
        trader = DrlTrader(explore=True, **trader_kwargs(cfg))
        trader.fit(fit_ex, fit_ext)
        result = run_backtest(
            trader,
            val_ex,
            val_ext,
            start_index=warmup,
            transaction_cost=cfg.environment.transaction_cost,
            reward_window=cfg.environment.reward_window,
            initial_capital=cfg.environment.initial_capital,
            cov_window=cfg.environment.covariance_window,
        )
        sharpe = result.metrics.sharpe
        return {
            "sample": sample_id,
            "status": "ok",
            "val_sharpe": float("-inf") if sharpe is None else sharpe,
            "overrides": overrides,
        }
    except (FinxploreError, ValueError) as exc:
        return {
            "sample": sample_id,
            "status": f"error: {exc}",
            "val_sharpe": float("-inf"),
            "overrides": overrides,
        }


def cmd_search(args) -> int:
    config = load_config(args.config)
    out = Path(args.out) if args.out else Path(config.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else config.run.seed
    rng = np.random.default_rng(seed)
    space = SearchSpace()

    train_ex, _, train_ext, _ = _load_universe(config)
    payloads = [
        (i, config, space.sample(rng), (train_ex, train_ext)) for i in range(args.samples)
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_search_worker, payloads))
    else:
        results = [_search_worker(p) for p in payloads]

    results.sort(key=lambda r: (-r["val_sharpe"], r["sample"]))
    override_keys = sorted(payloads[0][2]) if payloads else []
    with open(out / "leaderboard.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "sample", "status", "val_sharpe"] + override_keys)
        for rank, row in enumerate(results, start=1):
            writer.writerow(
                [rank, row["sample"], row["status"], row["val_sharpe"]]
                + [row["overrides"][k] for k in override_keys]
            )
    _json_dump(
        {
            "package_version": __version__,
            "search_seed": seed,
            "samples": [
                {"sample": r["sample"], "status": r["status"], "val_sharpe": r["val_sharpe"],
                 "overrides": r["overrides"]}
                for r in results
            ],
        },
        out / "search_results.json",
    )
    best = results[0] if results else None
    if best is not None:
        print(
            f"searched {args.samples} samples; best validation Sharpe "
            f"{best['val_sharpe']:.4f} (sample {best['sample']}); leaderboard in {out}"
        )
    return 0


def _aggregate(values: list[float]) -> tuple[float, float]:
    arr = np.array([v for v in values if v is not None and np.isfinite(v)], dtype=np.float64)
    if arr.size == 0:
        return float("nan"), 0.0
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for run_dir in map(Path, args.run_dirs):
        metrics_path = run_dir / "metrics.json"
        equity_path = run_dir / "equity.csv"
        if not metrics_path.is_file() or not equity_path.is_file():
            raise MissingArtifactsError(f"{run_dir} lacks metrics.json/equity.csv")
        payload = json.loads(metrics_path.read_text())
        runs.append(
            {
                "strategy": payload["strategy"],
                "seed": payload["seed"],
                "metrics": payload["metrics"],
                "curve": EquityCurve.read_csv(equity_path),
            }
        )

    by_strategy: dict[str, list[dict]] = {}
    for run in runs:
        by_strategy.setdefault(run["strategy"], []).append(run)

    table = []
    for strategy in sorted(by_strategy):
        group = by_strategy[strategy]
        row: dict = {"strategy": strategy, "n_runs": len(group)}
        for column in METRIC_COLUMNS:
            mean, std = _aggregate([g["metrics"][column] for g in group])
            row[f"{column}_mean"] = mean
            row[f"{column}_std"] = std
        table.append(row)

    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["strategy", "n_runs"]
        for column in METRIC_COLUMNS:
            header += [f"{column}_mean", f"{column}_std"]
        writer.writerow(header)
        for row in table:
            writer.writerow([row[h] for h in header])
    _json_dump({"package_version": __version__, "strategies": table}, out / "report.json")

    labels = [f"{run['strategy']}_seed{run['seed']}" for run in runs]
    common = set(runs[0]["curve"].dates)
    for run in runs[1:]:
        common &= set(run["curve"].dates)
    dates = sorted(common)
    with open(out / "wealth.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + labels)
        lookup = [dict(zip(r["curve"].dates, r["curve"].wealth)) for r in runs]
        for date in dates:
            writer.writerow([date.isoformat()] + [repr(float(m[date])) for m in lookup])

    quarters: dict[str, dict[str, float]] = {}
    for label, run in zip(labels, runs):
        for quarter, value in quarterly_returns(run["curve"]):
            quarters.setdefault(quarter, {})[label] = value
    with open(out / "quarterly.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quarter"] + labels)
        for quarter in sorted(quarters):
            writer.writerow(
                [quarter] + [quarters[quarter].get(label, "") for label in labels]
            )
    print(f"report over {len(runs)} runs ({len(by_strategy)} strategies) written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finxplore",
        description="Dual-agent deep-RL portfolio allocation with extended-universe exploration",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a trader on the training split")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out", default=None)
    train.add_argument("--strategy", choices=TRAINED_STRATEGIES, default="finxplore")
    train.set_defaults(func=cmd_train)

    backtest = sub.add_parser("backtest", help="evaluate a strategy on the trade split")
    backtest.add_argument("--config", required=True)
    backtest.add_argument("--checkpoint", default=None)
    backtest.add_argument("--strategy", choices=ALL_STRATEGIES, default="finxplore")
    backtest.add_argument("--split", choices=("trade", "train"), default="trade")
    backtest.add_argument("--seed", type=int, default=None)
    backtest.add_argument("--out", default=None)
    backtest.set_defaults(func=cmd_backtest)

    search = sub.add_parser("search", help="seeded random hyperparameter search")
    search.add_argument("--config", required=True)
    search.add_argument("--samples", type=int, default=20)
    search.add_argument("--seed", type=int, default=None)
    search.add_argument("--workers", type=int, default=1)
    search.add_argument("--out", default=None)
    search.set_defaults(func=cmd_search)

    report = sub.add_parser("report", help="aggregate completed run directories")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--out", required=True)
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FinxploreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
