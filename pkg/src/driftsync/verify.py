"""Bound-check battery over simulation runs."""
from __future__ import annotations

import math

import numpy as np

from .protocol import BoundCheck, SyncStrategy, communication_bound, model_average
from .rkhs import KernelModel
from .simulator import ExperimentConfig, RunResult, loss_bound_check, run

__all__ = ["run_checks", "verify", "linearity_check", "safety_check", "monotone_check"]


def safety_check(result: RunResult) -> BoundCheck:
    """Largest true divergence over dynamic checks in which no learner flagged a violation."""
    s = result.config.strategy
    quiet = [r.divergence_at_check for r in result.ledger.records
             if r.divergence_at_check is not None and r.violations == 0]
    return BoundCheck("local-condition safety (max divergence when quiet)", max(quiet, default=0.0), s.delta)


def linearity_check(models, n_probes: int = 200, seed: int = 0) -> BoundCheck:
    """Prediction of the averaged model against the mean prediction on random probes."""
    avg = model_average(models)
    dim = avg.dim if isinstance(avg, KernelModel) else avg.weights.shape[0]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in rng.normal(0.0, 2.0, size=(n_probes, dim)):
        preds = [f(x) for f in models]
        mean = math.fsum(preds) / len(preds)
        scale = max(1.0, max(abs(p) for p in preds))
        worst = max(worst, abs(avg(x) - mean) / scale)
    return BoundCheck("averaging linearity (scaled max error)", worst, 1e-9)


def monotone_check(result: RunResult) -> BoundCheck:
    """Count of decreasing steps across the cumulative loss / bytes / sync series."""
    drops = 0
    for series in (result.cum_loss_series, result.cum_bytes_series, result.cum_syncs_series):
        drops += int(np.sum(np.diff(series) < 0))
    return BoundCheck("monotone cumulative series (decreasing steps)", drops, 0)


def run_checks(result: RunResult, baseline: RunResult | None = None) -> list[BoundCheck]:
    cfg = result.config
    s = cfg.strategy
    checks = []
    if s.kind == "dynamic":
        if baseline is not None:
            checks.append(loss_bound_check(result, baseline))
        rep = result.report()
        checks.append(BoundCheck(f"sync count V*sqrt(delta) <= total drift (V={rep.syncs})",
                                 rep.proof_lhs, rep.proof_rhs))
        checks.append(safety_check(result))
    checks.append(communication_bound(s, result.cum_bytes, result.support_universe_size, result.T,
                                      result.m, result.costs, result.drift_total, cfg.linear))
    replay = result.ledger.replay_bytes(result.costs, result.m)
    checks.append(BoundCheck("ledger replay mismatch (bytes)", abs(replay - result.cum_bytes), 0))
    checks.append(linearity_check(result.final_models))
    checks.append(monotone_check(result))
    return checks


def verify(cfg: ExperimentConfig, corrupt_ledger: bool = False):
    """Run ``cfg`` (plus a continuous baseline for dynamic strategies) and check every bound.

    ``corrupt_ledger`` inflates one ledger record after the run; it exists so
    the failure path can be exercised.
    """
    result = run(cfg)
    baseline = None
    if cfg.strategy.kind == "dynamic":
        baseline = run(cfg.replace(strategy=SyncStrategy.periodic(1)))
    if corrupt_ledger and result.ledger.records:
        result.ledger.records[-1].bytes_up += 10 ** 15
    return result, run_checks(result, baseline)
