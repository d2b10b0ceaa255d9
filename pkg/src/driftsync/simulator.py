"""Round-based multi-learner simulation.

Each round every learner observes one example, suffers loss on it with its
current model, updates (and compresses), and then the synchronization
operator runs once over all learners.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .learners import LearnerParams, LinearModel, LossSpec, update
from .protocol import (
    ByteCostModel,
    CommLedger,
    SyncStrategy,
    initial_state,
    sync_step,
    violation_and_quiescence_report,
)
from .rkhs import KernelModel, KernelSpec, point_key
from .streams import StreamExhausted, StreamSpec, make_stream

__all__ = ["ExperimentConfig", "RunResult", "NumericalError", "run", "compare", "ComparisonRow",
           "Comparison", "loss_bound_check"]

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    def __init__(self, t, learner, detail=""):
        super().__init__(f"non-finite model at round {t}, learner {learner}" + (f": {detail}" if detail else ""))
        self.t = t
        self.learner = learner


@dataclass(frozen=True)
class ExperimentConfig:
    m: int = 4
    T: int = 1000
    stream: StreamSpec = field(default_factory=StreamSpec)
    kernel: KernelSpec | None = field(default_factory=KernelSpec)  # None selects linear models
    loss: LossSpec = field(default_factory=LossSpec)
    params: LearnerParams = field(default_factory=LearnerParams)
    strategy: SyncStrategy = field(default_factory=SyncStrategy)
    costs: ByteCostModel | None = None
    metrics_every: int = 1

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError("T must be a positive integer")
        if int(self.metrics_every) != self.metrics_every or self.metrics_every < 1:
            raise ValueError("metrics_every must be a positive integer")
        if self.kernel is None and self.params.compression.kind != "none":
            raise ValueError("compression applies to kernel models only")

    @property
    def linear(self) -> bool:
        return self.kernel is None

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.replace(stream=dataclasses.replace(self.stream, seed=seed))


@dataclass
class RunResult:
    config: ExperimentConfig
    costs: ByteCostModel
    ledger: CommLedger
    # (rounds_completed, m) arrays
    losses: np.ndarray
    errors: np.ndarray
    drift: np.ndarray
    compression_error: np.ndarray
    sv_counts: np.ndarray
    final_models: list
    support_universe_size: int
    rounds_completed: int
    shortened: bool = False

    @property
    def T(self) -> int:
        return self.rounds_completed

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def sample_rounds(self) -> np.ndarray:
        # every k-th round, plus the final round so totals always appear
        k, n = self.config.metrics_every, self.rounds_completed
        rounds = np.arange(k, n + 1, k)
        if n and (rounds.size == 0 or rounds[-1] != n):
            rounds = np.append(rounds, n)
        return rounds

    def _sample(self, per_round: np.ndarray) -> np.ndarray:
        return per_round[self.sample_rounds - 1]

    # sampled cumulative series
    @property
    def cum_loss_series(self):
        return self._sample(np.cumsum(self.losses.sum(axis=1)))

    @property
    def cum_error_series(self):
        return self._sample(np.cumsum(self.errors.sum(axis=1)))

    @property
    def cum_bytes_series(self):
        return self._sample(self.ledger.cumulative_bytes())

    @property
    def cum_syncs_series(self):
        return self._sample(np.cumsum([r.theta for r in self.ledger.records]))

    @property
    def cum_violations_series(self):
        return self._sample(np.cumsum([r.violations for r in self.ledger.records]))

    @property
    def mean_sv_series(self):
        return self._sample(self.sv_counts.mean(axis=1))

    # totals
    @property
    def cum_loss(self) -> float:
        return math.fsum(self.losses.ravel())

    @property
    def cum_error(self) -> int:
        return int(self.errors.sum())

    @property
    def cum_bytes(self) -> int:
        return self.ledger.total_bytes

    @property
    def syncs(self) -> int:
        return self.ledger.syncs

    @property
    def violations(self) -> int:
        return self.ledger.violations

    @property
    def drift_total(self) -> float:
        return math.fsum(self.drift.ravel())

    @property
    def max_compression_error(self) -> float:
        return float(self.compression_error.max()) if self.compression_error.size else 0.0

    @property
    def mean_compression_error(self) -> float:
        return float(self.compression_error.mean()) if self.compression_error.size else 0.0

    @property
    def quiescence_round(self) -> int:
        return self.ledger.quiescence_round()

    def report(self):
        s = self.config.strategy
        delta = s.delta if s.kind == "dynamic" else None
        return violation_and_quiescence_report(self.ledger, self.drift_total, self.cum_loss, self.m, delta)


def _initial_model(cfg: ExperimentConfig, dim: int):
    if cfg.linear:
        return LinearModel.zeros(dim)
    return KernelModel.empty(cfg.kernel, dim)


def run(cfg: ExperimentConfig) -> RunResult:
    stream = make_stream(cfg.stream, cfg.m)
    dim = stream.dim
    costs = cfg.costs or ByteCostModel.for_dim(dim)
    m, T = cfg.m, cfg.T
    models = [_initial_model(cfg, dim)] * m
    coord = initial_state(models)
    ledger = CommLedger()
    losses = np.zeros((T, m))
    errors = np.zeros((T, m), dtype=np.int64)
    drift = np.zeros((T, m))
    comp = np.zeros((T, m))
    svs = np.zeros((T, m), dtype=np.int64)
    universe: set = set()
    completed, shortened = 0, False
    for t in range(1, T + 1):
        try:
            batch = [stream.example(i, t) for i in range(m)]
        except StreamExhausted:
            log.warning("stream exhausted: run shortened to %d of %d rounds", t - 1, T)
            shortened = True
            break
        for i, (x, y) in enumerate(batch):
            try:
                out = update(models[i], x, y, cfg.params, cfg.loss, birth=(t, i))
            except ArithmeticError as exc:
                raise NumericalError(t, i, str(exc)) from exc
            if not math.isfinite(out.loss) or not math.isfinite(out.drift):
                raise NumericalError(t, i, "non-finite loss or drift")
            if out.added_sv:
                universe.add(point_key(x))
            losses[t - 1, i] = out.loss
            errors[t - 1, i] = not (y * out.prediction > 0)
            drift[t - 1, i] = out.drift
            comp[t - 1, i] = out.compression_error
            models[i] = out.model
            svs[t - 1, i] = len(out.model)
        models, coord = sync_step(cfg.strategy, t, models, coord, ledger, costs)
        completed = t
    sl = slice(0, completed)
    return RunResult(cfg, costs, ledger, losses[sl], errors[sl], drift[sl], comp[sl], svs[sl],
                     list(models), len(universe), completed, shortened)


def loss_bound_check(dynamic: RunResult, periodic: RunResult):
    """Loss of the dynamic run against a periodic run plus (T/gamma^2)(delta + 2 eps^2).

    gamma is the learning rate, eps the largest compression error of either run.
    """
    from .protocol import BoundCheck

    s = dynamic.config.strategy
    if s.kind != "dynamic":
        raise ValueError("first run must use the dynamic strategy")
    gamma = dynamic.config.params.learn_rate
    eps = max(dynamic.max_compression_error, periodic.max_compression_error)
    slack = math.inf if gamma == 0 else dynamic.T / gamma ** 2 * (s.delta + 2 * eps ** 2)
    name = f"loss bound {s.label()} vs {periodic.config.strategy.label()}"
    return BoundCheck(name, dynamic.cum_loss, periodic.cum_loss + slack)


@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    cum_loss: float
    cum_error: int
    cum_bytes: int
    syncs: int
    violations: int
    quiescence_round: int


@dataclass
class Comparison:
    rows: list
    results: list
    bound_checks: list

    @property
    def bound_violations(self) -> list:
        return [c for c in self.bound_checks if not c.holds]


def compare(configs) -> Comparison:
    """Run configs that differ only in strategy; check the loss bound for every dynamic/periodic pair."""
    configs = list(configs)
    if not configs:
        raise ValueError("nothing to compare")
    base = configs[0]
    for c in configs[1:]:
        if c.replace(strategy=base.strategy) != base:
            raise ValueError("configs must differ only in their synchronization strategy")
    results = [run(c) for c in configs]
    rows = [ComparisonRow(r.config.strategy.label(), r.cum_loss, r.cum_error, r.cum_bytes, r.syncs,
                          r.violations, r.quiescence_round) for r in results]
    checks = []
    for d in results:
        if d.config.strategy.kind != "dynamic":
            continue
        for p in results:
            if p.config.strategy.kind in ("periodic", "continuous"):
                checks.append(loss_bound_check(d, p))
    return Comparison(rows, results, checks)
