"""Command-line runner.

Verbs::

    iotopt run <config> [--workers N] [--output DIR]
    iotopt validate <config>
    iotopt plot <trace.csv>...
    iotopt report <sweep-dir> [--json]

The worker count defaults to ``$IOTOPT_WORKERS`` (1 when unset). Exit status
is 0 on success, 2 when the config fails validation and 1 for runtime errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .experiment import (ConfigError, config_hash, load_toml, normalize_config, run_name, run_seed,
                         summarize)
from .trace import read_trace, write_trace

WORKERS_ENV = "IOTOPT_WORKERS"
EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str):
    path.write_bytes(text.encode("utf-8"))


def _seed_task(args):
    cfg, seed, out_dir = args
    out_dir = Path(out_dir)
    metrics = []
    for res in run_seed(cfg, seed):
        stem = run_name(cfg, res.horizon, res.seed)
        write_trace(res.trace, out_dir / f"{stem}.csv")
        _write(out_dir / f"{stem}.json", _dump(res.metrics))
        if cfg["experiment"]["plot"]:
            from .plotting import plot_trace

            plot_trace(res.trace, out_dir / f"{stem}.svg")
        metrics.append(res.metrics)
    return metrics


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        n = explicit
    else:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(WORKERS_ENV, f"not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError(WORKERS_ENV, "worker count must be >= 1")
    return n


def load_config(path) -> dict:
    return normalize_config(load_toml(path))


def run_experiment(config_path, workers: int | None = None, output: str | None = None) -> Path:
    """Execute a sweep; returns the output directory."""
    cfg = load_config(config_path)
    if output is not None:
        cfg["experiment"]["output_dir"] = output
    out_dir = Path(cfg["experiment"]["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "config.json", _dump(cfg))
    tasks = [(cfg, s, str(out_dir)) for s in cfg["experiment"]["seeds"]]
    n = min(worker_count(workers), len(tasks))
    if n == 1:
        results = [_seed_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_seed_task, tasks))
    metrics = [m for chunk in results for m in chunk]
    _write(out_dir / "summary.json", _dump(summarize(cfg, metrics)))
    return out_dir


def report(sweep_dir) -> dict:
    """Rebuild the sweep summary from the stored config and per-run metric files."""
    sweep_dir = Path(sweep_dir)
    cfg_path = sweep_dir / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"{cfg_path} not found; is this a sweep directory?")
    cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    metrics = []
    for T in cfg["experiment"]["horizons"]:
        for s in cfg["experiment"]["seeds"]:
            p = sweep_dir / f"{run_name(cfg, T, s)}.json"
            if p.exists():
                metrics.append(json.loads(p.read_text(encoding="utf-8")))
    return summarize(cfg, metrics)


def _format_report(summary: dict) -> str:
    lines = [f"{summary['algorithm']} on {summary['environment']} (config {summary['config_hash']})"]
    for row in summary["horizons"]:
        vals = ", ".join(f"{k[5:]}={v:.6g}" for k, v in sorted(row.items()) if k.startswith("mean_"))
        lines.append(f"  T={row['horizon']:<8d} seeds={row['n_seeds']:<3d} {vals}")
    for key, s in summary["slopes"].items():
        if s["better_than_power_law"]:
            lines.append(f"  {key} slope: better than any power law (nonpositive values)")
        else:
            lines.append(f"  {key} slope: {s['slope']:.3f} +- {s['stderr']:.3f} over {s['n_points']} horizons")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iotopt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="execute a sweep")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--output", default=None, help="override experiment.output_dir")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    pl = sub.add_parser("plot", help="render SVG charts for trace files")
    pl.add_argument("traces", nargs="+")
    rp = sub.add_parser("report", help="summarize a finished sweep")
    rp.add_argument("sweep_dir")
    rp.add_argument("--json", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "validate":
            cfg = load_config(args.config)
            print(f"ok {config_hash(cfg)}")
        elif args.verb == "run":
            out = run_experiment(args.config, args.workers, args.output)
            print(f"wrote {out}")
        elif args.verb == "plot":
            from .plotting import plot_trace

            for t in args.traces:
                path = Path(t)
                print(plot_trace(read_trace(path), path.with_suffix(".svg")))
        elif args.verb == "report":
            summary = report(args.sweep_dir)
            print(_dump(summary) if args.json else _format_report(summary), end="" if args.json else "\n")
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # runtime failure: report and exit nonzero
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
