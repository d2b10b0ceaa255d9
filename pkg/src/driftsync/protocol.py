"""Synchronization operators, message sizing and communication accounting.

All learners talk to one coordinator. A synchronization uploads every local
model (coefficients for all supports, points only for supports the
coordinator has not seen since the last sync), averages, and broadcasts the
average back (all coefficients, points only where the learner lacks them).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rkhs
from .learners import LinearModel
from .rkhs import KernelModel

__all__ = [
    "SyncStrategy",
    "ByteCostModel",
    "CoordinatorState",
    "RoundRecord",
    "CommLedger",
    "BoundCheck",
    "ProtocolInvariantError",
    "model_distance_sq",
    "model_average",
    "model_divergence",
    "local_condition",
    "message_size_up",
    "message_size_down",
    "initial_state",
    "sync_step",
    "SyncReport",
    "violation_and_quiescence_report",
    "communication_bound",
    "bound_check_continuous",
]


class ProtocolInvariantError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyncStrategy:
    kind: str = "dynamic"
    period: int = 1
    delta: float = 1.0
    check_period: int = 1

    def __post_init__(self):
        if self.kind not in ("none", "continuous", "periodic", "dynamic"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if int(self.period) != self.period or self.period < 1:
            raise ValueError("period must be a positive integer")
        if int(self.check_period) != self.check_period or self.check_period < 1:
            raise ValueError("check_period must be a positive integer")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def continuous(cls):
        return cls("continuous")

    @classmethod
    def periodic(cls, b: int):
        return cls("periodic", period=b)

    @classmethod
    def dynamic(cls, delta: float, check_period: int = 1):
        return cls("dynamic", delta=delta, check_period=check_period)

    def label(self) -> str:
        if self.kind == "periodic":
            return f"periodic(b={self.period})"
        if self.kind == "dynamic":
            cp = f", cp={self.check_period}" if self.check_period != 1 else ""
            return f"dynamic(delta={self.delta:g}{cp})"
        return self.kind


@dataclass(frozen=True)
class ByteCostModel:
    bytes_per_sv: int
    bytes_per_coeff: int = 8
    bytes_per_linear_model: int = 0

    def __post_init__(self):
        for name in ("bytes_per_sv", "bytes_per_coeff", "bytes_per_linear_model"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer")

    @classmethod
    def for_dim(cls, d: int, bytes_per_sv=None, bytes_per_coeff=None, bytes_per_linear_model=None):
        return cls(bytes_per_sv or 8 * d, bytes_per_coeff or 8, bytes_per_linear_model or 8 * d)


def model_distance_sq(f, g) -> float:
    if isinstance(f, LinearModel):
        diff = f.weights - g.weights
        return float(np.cumsum(diff * diff)[-1]) if diff.size else 0.0
    return rkhs.distance_sq(f, g)


def model_average(models: Sequence):
    if len(models) == 0:
        raise ValueError("cannot average an empty configuration")
    if isinstance(models[0], LinearModel):
        if all(np.array_equal(f.weights, models[0].weights) for f in models):
            return models[0]
        acc = models[0].weights.copy()
        for f in models[1:]:
            acc = acc + f.weights
        return LinearModel(acc / len(models))
    return rkhs.average(models)


def model_divergence(models: Sequence, avg=None) -> float:
    if avg is None:
        avg = model_average(models)
    return math.fsum(model_distance_sq(f, avg) for f in models) / len(models)


def local_condition(f, r, delta: float) -> bool:
    return model_distance_sq(f, r) <= delta


def message_size_up(learner_supports, known_at_coordinator, costs: ByteCostModel) -> int:
    learner_supports = set(learner_supports)
    new = learner_supports - set(known_at_coordinator)
    return len(learner_supports) * costs.bytes_per_coeff + len(new) * costs.bytes_per_sv


def message_size_down(union_supports, learner_supports, costs: ByteCostModel) -> int:
    union_supports = set(union_supports)
    missing = union_supports - set(learner_supports)
    return len(union_supports) * costs.bytes_per_coeff + len(missing) * costs.bytes_per_sv


@dataclass(frozen=True)
class CoordinatorState:
    reference: object
    cached_union: frozenset = frozenset()
    known: tuple = ()


def initial_state(models: Sequence) -> CoordinatorState:
    """Coordinator state before round 1: models are identical, reference is their value."""
    ref = model_average(models)
    return CoordinatorState(ref, frozenset(), tuple(frozenset() for _ in models))


@dataclass
class RoundRecord:
    t: int
    theta: int = 0
    violations: int = 0
    bytes_up: int = 0
    bytes_down: int = 0
    messages_up: int = 0
    messages_down: int = 0
    control_messages: int = 0
    divergence_at_check: float | None = None
    false_alarm: bool = False
    union_size: int = 0
    # per learner (|S_i|, |S_i \ known_i|, |union \ S_i|) at a kernel sync
    sizes: tuple = ()

    @property
    def bytes(self) -> int:
        return self.bytes_up + self.bytes_down


@dataclass
class CommLedger:
    records: list = field(default_factory=list)

    def append(self, rec: RoundRecord):
        if self.records and rec.t <= self.records[-1].t:
            raise ProtocolInvariantError("ledger rounds must increase")
        self.records.append(rec)

    @property
    def total_bytes(self) -> int:
        return sum(r.bytes for r in self.records)

    @property
    def total_up(self) -> int:
        return sum(r.bytes_up for r in self.records)

    @property
    def total_down(self) -> int:
        return sum(r.bytes_down for r in self.records)

    @property
    def syncs(self) -> int:
        return sum(r.theta for r in self.records)

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.records)

    @property
    def peak_bytes(self) -> int:
        return max((r.bytes for r in self.records), default=0)

    @property
    def control_messages(self) -> int:
        return sum(r.control_messages for r in self.records)

    def cumulative_bytes(self) -> np.ndarray:
        return np.cumsum([r.bytes for r in self.records], dtype=np.int64)

    def quiescence_round(self) -> int:
        """Last round with model-channel traffic (0 if there was none)."""
        for r in reversed(self.records):
            if r.bytes:
                return r.t
        return 0

    def replay_bytes(self, costs: ByteCostModel, m: int) -> int:
        """Recompute total bytes from the logged set sizes."""
        total = 0
        for r in self.records:
            if not r.theta:
                continue
            if r.sizes:
                for n_i, new_i, missing_i in r.sizes:
                    total += n_i * costs.bytes_per_coeff + new_i * costs.bytes_per_sv
                    total += r.union_size * costs.bytes_per_coeff + missing_i * costs.bytes_per_sv
            else:
                total += 2 * m * costs.bytes_per_linear_model
        return total


def _full_sync(models, coord: CoordinatorState, costs: ByteCostModel, rec: RoundRecord, avg=None):
    m = len(models)
    if avg is None:
        avg = model_average(models)
    if isinstance(avg, LinearModel):
        rec.bytes_up = m * costs.bytes_per_linear_model
        rec.bytes_down = m * costs.bytes_per_linear_model
        coord = CoordinatorState(avg, frozenset(), coord.known)
    else:
        for known in coord.known:
            if not known <= coord.cached_union:
                raise ProtocolInvariantError("learner view of coordinator cache is not a subset of the cache")
        union = frozenset(avg.keys)
        sizes = []
        for f, known in zip(models, coord.known):
            s = set(f.keys)
            new = s - known
            if not s <= union:
                raise ProtocolInvariantError("average does not cover learner support")
            sizes.append((len(s), len(new), len(union - s)))
            rec.bytes_up += message_size_up(s, known, costs)
            rec.bytes_down += message_size_down(union, s, costs)
        rec.sizes = tuple(sizes)
        rec.union_size = len(union)
        coord = CoordinatorState(avg, union, tuple(union for _ in range(m)))
    rec.theta = 1
    rec.messages_up = m
    rec.messages_down = m
    return [avg] * m, coord


def sync_step(strategy: SyncStrategy, t: int, models: Sequence, coord: CoordinatorState,
              ledger: CommLedger, costs: ByteCostModel):
    """Apply the synchronization operator for round ``t`` (1-based).

    Appends exactly one :class:`RoundRecord` to ``ledger`` and returns the
    new ``(models, coordinator_state)``.
    """
    models = list(models)
    rec = RoundRecord(t)
    kind = strategy.kind
    do_sync = False
    avg = None
    if kind == "continuous":
        do_sync = True
    elif kind == "periodic":
        do_sync = t % strategy.period == 0
    elif kind == "dynamic" and t % strategy.check_period == 0:
        violated = [not local_condition(f, coord.reference, strategy.delta) for f in models]
        rec.violations = sum(violated)
        avg = model_average(models)
        rec.divergence_at_check = model_divergence(models, avg)
        if rec.violations:
            do_sync = True
            rec.false_alarm = rec.divergence_at_check <= strategy.delta
            rec.control_messages = rec.violations + len(models)
    if do_sync:
        models, coord = _full_sync(models, coord, costs, rec, avg)
    ledger.append(rec)
    return models, coord


@dataclass(frozen=True)
class SyncReport:
    syncs: int
    violations: int
    proof_lhs: float
    proof_rhs: float
    proof_holds: bool
    quiescence_round: int
    adaptivity_ratio: float
    false_alarms: int


def violation_and_quiescence_report(ledger: CommLedger, drift_total: float, cum_loss: float,
                                    m: int, delta: float | None) -> SyncReport:
    """Sync count V(T), the check V(T)*sqrt(delta) <= total drift, quiescence and C/(m L)."""
    V = ledger.syncs
    if delta is None:
        lhs, holds = 0.0, True
    else:
        lhs = V * math.sqrt(delta)
        holds = lhs <= drift_total
    C = ledger.total_bytes
    ratio = C / (m * cum_loss) if cum_loss > 0 else (0.0 if C == 0 else math.inf)
    return SyncReport(V, ledger.violations, lhs, drift_total, holds, ledger.quiescence_round(), ratio,
                      sum(r.false_alarm for r in ledger.records))


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def __str__(self):
        verdict = "PASS" if self.holds else "FAIL"
        return f"{verdict} {self.name}: {self.lhs:.6g} <= {self.rhs:.6g}"


def communication_bound(strategy: SyncStrategy, total_bytes: int, union_size: int, T: int, m: int,
                        costs: ByteCostModel, drift_total: float = 0.0, linear: bool = False) -> BoundCheck:
    """Closed-form communication bound for ``strategy`` against the measured total.

    The dynamic bound uses the measured total drift divided by sqrt(delta)
    as the synchronization budget.
    """
    Ba, Bx = costs.bytes_per_coeff, costs.bytes_per_sv
    if strategy.kind == "none":
        return BoundCheck("no communication", total_bytes, 0)
    if strategy.kind == "dynamic":
        rounds = drift_total / math.sqrt(strategy.delta)
        name = "dynamic communication"
    else:
        b = 1 if strategy.kind == "continuous" else strategy.period
        rounds = T / b
        name = "continuous communication" if b == 1 and strategy.kind == "continuous" else f"periodic(b={b}) communication"
    if linear:
        return BoundCheck(name + " (linear)", total_bytes, rounds * 2 * m * costs.bytes_per_linear_model)
    return BoundCheck(name, total_bytes, rounds * 2 * m * union_size * Ba + m * union_size * Bx)


def bound_check_continuous(ledger: CommLedger, final_union_size: int, T: int, m: int,
                           costs: ByteCostModel, strategy: SyncStrategy | None = None,
                           drift_total: float = 0.0, linear: bool = False) -> bool:
    strategy = strategy or SyncStrategy.continuous()
    return communication_bound(strategy, ledger.total_bytes, final_union_size, T, m, costs,
                               drift_total, linear).holds
