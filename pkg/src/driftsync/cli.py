"""Command line front end: ``driftsync run|sweep|verify --config PATH``.

Exit codes: 0 success, 1 a verification check failed, 2 configuration error,
3 numeric failure during a run.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import ConfigError, load_config
from .protocol import SyncStrategy
from .simulator import ExperimentConfig, NumericalError, RunResult, run
from .verify import run_checks, verify

__all__ = ["main", "cmd_run", "cmd_sweep", "cmd_verify", "RUN_LOG_COLUMNS", "SWEEP_COLUMNS",
           "EXIT_OK", "EXIT_VERIFY_FAILED", "EXIT_CONFIG", "EXIT_NUMERIC"]

log = logging.getLogger("driftsync")

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

RUN_LOG_COLUMNS = ("t", "theta", "violations", "bytes_up", "bytes_down", "cum_loss", "cum_error",
                   "mean_sv_count", "divergence_at_check")
SWEEP_COLUMNS = ("value", "cum_loss", "cum_error", "cum_bytes", "violations", "quiescence_round",
                 "mean_compression_error")
AXES = ("delta", "period", "tau")


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".17g")


def _write(path: Path, text: str, manifest: list):
    path.write_text(text)
    manifest.append({"file": path.name, "sha256": hashlib.sha256(text.encode()).hexdigest(),
                     "bytes": len(text.encode())})


def _write_manifest(out: Path, config_path, manifest: list):
    body = {"config": str(Path(config_path).name), "artifacts": manifest}
    (out / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def run_log_rows(result: RunResult):
    """Rows of the run log, one per sampled round; counts are summed over the window."""
    recs = result.ledger.records
    cl, ce, sv = result.cum_loss_series, result.cum_error_series, result.mean_sv_series
    rows, prev = [], 0
    for j, t in enumerate(result.sample_rounds):
        window = recs[prev:t]
        prev = t
        rows.append([
            int(t), sum(r.theta for r in window), sum(r.violations for r in window),
            sum(r.bytes_up for r in window), sum(r.bytes_down for r in window),
            _num(cl[j]), int(ce[j]), _num(sv[j]), _num(recs[t - 1].divergence_at_check),
        ])
    return rows


def _summary(result: RunResult) -> tuple[str, list]:
    rep = result.report()
    checks = run_checks(result)
    lines = [
        f"strategy = {result.config.strategy.label()}",
        f"rounds = {result.T}",
        f"shortened = {str(result.shortened).lower()}",
        f"cum_loss = {_num(result.cum_loss)}",
        f"cum_error = {result.cum_error}",
        f"cum_bytes = {result.cum_bytes}",
        f"bytes_up = {result.ledger.total_up}",
        f"bytes_down = {result.ledger.total_down}",
        f"peak_round_bytes = {result.ledger.peak_bytes}",
        f"syncs = {rep.syncs}",
        f"violations = {rep.violations}",
        f"false_alarms = {rep.false_alarms}",
        f"control_messages = {result.ledger.control_messages}",
        f"quiescence_round = {rep.quiescence_round}",
        f"drift_total = {_num(result.drift_total)}",
        f"max_compression_error = {_num(result.max_compression_error)}",
        f"support_universe_size = {result.support_universe_size}",
        f"adaptivity_ratio = {_num(rep.adaptivity_ratio)}",
    ]
    for c in checks:
        lines.append(f"check = {c}")
    return "\n".join(lines) + "\n", checks


def _load(config_path, seed):
    cfg = load_config(config_path)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg


def cmd_run(config_path, out_dir, seed=None) -> int:
    cfg = _load(config_path, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run(cfg)
    manifest = []
    _write(out / "run_log.csv", _csv_text(RUN_LOG_COLUMNS, run_log_rows(result)), manifest)
    summary, _ = _summary(result)
    _write(out / "summary.txt", summary, manifest)
    dat = ["# t cum_bytes cum_error cum_loss"]
    for t, b, e, l in zip(result.sample_rounds, result.cum_bytes_series, result.cum_error_series,
                          result.cum_loss_series):
        dat.append(f"{t} {b} {e} {_num(l)}")
    _write(out / "series.dat", "\n".join(dat) + "\n", manifest)
    _write_manifest(out, config_path, manifest)
    print(summary, end="")
    return EXIT_OK


def _sweep_config(cfg: ExperimentConfig, axis: str, value: str) -> ExperimentConfig:
    if axis == "delta":
        if cfg.strategy.kind != "dynamic":
            raise ConfigError("axis 'delta' needs strategy.kind = dynamic")
        return cfg.replace(strategy=dataclasses.replace(cfg.strategy, delta=float(value)))
    if axis == "period":
        if cfg.strategy.kind != "periodic":
            raise ConfigError("axis 'period' needs strategy.kind = periodic")
        return cfg.replace(strategy=SyncStrategy.periodic(int(value)))
    if cfg.params.compression.kind != "truncate":
        raise ConfigError("axis 'tau' needs learner.compression = truncate")
    comp = dataclasses.replace(cfg.params.compression, budget=int(value))
    return cfg.replace(params=dataclasses.replace(cfg.params, compression=comp))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DRIFTSYNC_THREADS", "1")))
    except ValueError:
        return 1


def sweep_rows(cfg: ExperimentConfig, axis: str, values) -> list:
    configs = []
    for v in values:
        try:
            configs.append(_sweep_config(cfg, axis, v))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad sweep value {v!r} for axis {axis!r}: {exc}") from None
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(run, configs))
    rows = []
    for v, r in zip(values, results):
        rows.append([v, _num(r.cum_loss), r.cum_error, r.cum_bytes, r.violations, r.quiescence_round,
                     _num(r.mean_compression_error)])
    return rows


def cmd_sweep(config_path, axis, values, out_dir, seed=None) -> int:
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(AXES)}")
    if isinstance(values, str):
        values = [v.strip() for v in values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no sweep values given")
    cfg = _load(config_path, seed)
    rows = sweep_rows(cfg, axis, values)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    text = _csv_text(SWEEP_COLUMNS, rows)
    _write(out / "sweep.csv", text, manifest)
    dat = ["# " + " ".join(SWEEP_COLUMNS)] + [" ".join(str(c) for c in r) for r in rows]
    _write(out / "sweep.dat", "\n".join(dat) + "\n", manifest)
    _write_manifest(out, config_path, manifest)
    print(text, end="")
    return EXIT_OK


def cmd_verify(config_path, seed=None, corrupt_ledger=False) -> int:
    cfg = _load(config_path, seed)
    _, checks = verify(cfg, corrupt_ledger=corrupt_ledger)
    for c in checks:
        print(c)
    failed = [c for c in checks if not c.holds]
    if failed:
        print(f"{len(failed)} of {len(checks)} checks failed:")
        for c in failed:
            print(f"  {c.name}: lhs = {c.lhs!r}, rhs = {c.rhs!r}")
        return EXIT_VERIFY_FAILED
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftsync", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=("run", "sweep", "verify"))
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--out", metavar="DIR", default="driftsync_out")
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--values", metavar="CSV-LIST")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--corrupt-ledger", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed)
        if args.command == "sweep":
            if not args.axis or not args.values:
                raise ConfigError("sweep needs --axis and --values")
            return cmd_sweep(args.config, args.axis, args.values, args.out, args.seed)
        return cmd_verify(args.config, args.seed, args.corrupt_ledger)
    except ConfigError as exc:
        print(f"driftsync: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"driftsync: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"driftsync: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
