"""Online learners: hinge/squared loss, kernel and linear SGD, model compression."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rkhs import KernelModel, distance_sq, norm, point_key

__all__ = [
    "LossSpec",
    "Compression",
    "LearnerParams",
    "LinearModel",
    "UpdateOutcome",
    "loss_eval",
    "loss_subgradient",
    "kernel_sgd_update",
    "linear_sgd_update",
    "truncate",
    "project_onto",
    "project_newest",
    "update_with_compression",
    "update",
    "PROJECTION_JITTER",
]

PROJECTION_JITTER = 1e-10


@dataclass(frozen=True)
class LossSpec:
    kind: str = "hinge"

    def __post_init__(self):
        if self.kind not in ("hinge", "squared"):
            raise ValueError(f"unknown loss {self.kind!r}")


@dataclass(frozen=True)
class Compression:
    kind: str = "none"
    budget: int = 50
    tolerance: float = 0.1

    def __post_init__(self):
        if self.kind not in ("none", "truncate", "project"):
            raise ValueError(f"unknown compression {self.kind!r}")
        if self.kind == "truncate" and (int(self.budget) != self.budget or self.budget < 1):
            raise ValueError("truncation budget must be a positive integer")
        if self.kind == "project" and not self.tolerance > 0:
            raise ValueError("projection tolerance must be positive")


@dataclass(frozen=True)
class LearnerParams:
    learn_rate: float = 0.5
    reg: float = 0.0
    compression: Compression = field(default_factory=Compression)

    def __post_init__(self):
        # learn_rate=0 is accepted as a degenerate "frozen" learner
        if not self.learn_rate >= 0:
            raise ValueError("learn_rate must be nonnegative")
        if not self.reg >= 0:
            raise ValueError("reg must be nonnegative")


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "LinearModel":
        return cls(np.zeros(dim))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape != self.weights.shape:
            raise ValueError(f"dimension mismatch: model has {self.weights.shape[0]}, input has {x.shape[0]}")
        return float(np.cumsum(self.weights * x)[-1]) if x.size else 0.0

    def __len__(self):
        return 0


@dataclass(frozen=True)
class UpdateOutcome:
    model: object
    loss: float
    drift: float
    added_sv: bool
    compression_error: float = 0.0
    prediction: float = math.nan


def _check_label(loss: LossSpec, y):
    if loss.kind == "hinge" and y not in (-1, 1):
        raise ValueError(f"hinge loss needs labels in {{-1, +1}}, got {y!r}")


def loss_eval(loss: LossSpec, f, x, y) -> float:
    _check_label(loss, y)
    p = f(x)
    if loss.kind == "hinge":
        return max(0.0, 1.0 - y * p)
    return (p - y) ** 2


def loss_subgradient(loss: LossSpec, prediction: float, y) -> float:
    """d loss / d f(x); zero at the hinge kink."""
    if loss.kind == "hinge":
        return -float(y) if y * prediction < 1.0 else 0.0
    return 2.0 * (prediction - y)


def _loss_from_prediction(loss: LossSpec, p: float, y) -> float:
    if loss.kind == "hinge":
        return max(0.0, 1.0 - y * p)
    return (p - y) ** 2


def kernel_sgd_update(f: KernelModel, x, y, p: LearnerParams, loss: LossSpec,
                      birth=(0, 0)) -> UpdateOutcome:
    """One NORMA-style step: shrink by (1 - learn_rate*reg), then add -learn_rate*g*k(x, .).

    ``added_sv`` is true only when a new support entry was created; a point
    already in the support just has its coefficient adjusted.
    """
    _check_label(loss, y)
    x = np.asarray(x, dtype=np.float64).ravel()
    pred = f(x)
    ell = _loss_from_prediction(loss, pred, y)
    g = loss_subgradient(loss, pred, y)
    new = f.scaled(1.0 - p.learn_rate * p.reg)
    added = False
    if g != 0.0 and p.learn_rate != 0.0:
        new, added = new.with_term(x, -p.learn_rate * g, birth)
    drift = 0.0 if new is f else math.sqrt(distance_sq(f, new))
    return UpdateOutcome(new, ell, drift, added, 0.0, pred)


def linear_sgd_update(f: LinearModel, x, y, p: LearnerParams, loss: LossSpec) -> UpdateOutcome:
    _check_label(loss, y)
    x = np.asarray(x, dtype=np.float64).ravel()
    pred = f(x)
    ell = _loss_from_prediction(loss, pred, y)
    g = loss_subgradient(loss, pred, y)
    shrink = 1.0 - p.learn_rate * p.reg
    if g == 0.0 and shrink == 1.0:
        return UpdateOutcome(f, ell, 0.0, False, 0.0, pred)
    w = shrink * f.weights - p.learn_rate * g * x
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite linear weights")
    return UpdateOutcome(LinearModel(w), ell, float(np.linalg.norm(w - f.weights)), False, 0.0, pred)


def truncate(f: KernelModel, budget: int) -> tuple[KernelModel, float]:
    """Keep the ``budget`` youngest support vectors; error is the dropped part's norm."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n = len(f)
    if n <= budget:
        return f, 0.0
    order = np.lexsort((f.births[:, 1], f.births[:, 0]))
    drop = np.sort(order[: n - budget])
    keep = np.sort(order[n - budget:])
    return f.take(keep), norm(f.take(drop))


def project_onto(rest: KernelModel, s, alpha: float, tolerance: float) -> tuple[KernelModel, float, bool]:
    """Try to replace alpha*k(s, .) by its projection onto span(rest).

    Returns ``(model, error, folded)``. When not folded the returned model is
    ``rest`` unchanged and the caller keeps ``s`` itself.
    """
    s = np.asarray(s, dtype=np.float64).ravel()
    if len(rest) == 0:
        return rest, 0.0, False
    key = point_key(s)
    if key in rest.keys:
        j = rest.keys.index(key)
        coeffs = rest.coeffs.copy()
        coeffs[j] += alpha
        return KernelModel(rest.kernel, rest.points, coeffs, rest.births, rest.keys), 0.0, True
    K = rest.kernel.gram(rest.points, rest.points)
    kb = rest.kernel.gram(rest.points, s[None, :])[:, 0]
    beta = np.linalg.solve(K + PROJECTION_JITTER * np.eye(len(rest)), kb)
    kss = float(rest.kernel.diag(s[None, :])[0])
    r2 = max(0.0, kss - float(np.dot(kb, beta)))
    if abs(alpha) * math.sqrt(r2) > tolerance:
        return rest, 0.0, False
    folded = KernelModel(rest.kernel, rest.points, rest.coeffs + alpha * beta, rest.births, rest.keys)
    return folded, 0.0, True


def project_newest(f: KernelModel, tolerance: float) -> tuple[KernelModel, float]:
    """Fold the newest support vector into the span of the others if cheap enough.

    The returned error is the exact RKHS distance between input and output.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if len(f) <= 1:
        return f, 0.0
    order = np.lexsort((f.births[:, 1], f.births[:, 0]))
    j = int(order[-1])
    rest = f.take(np.array([i for i in range(len(f)) if i != j], dtype=np.int64))
    out, _, folded = project_onto(rest, f.points[j], float(f.coeffs[j]), tolerance)
    if not folded:
        return f, 0.0
    return out, math.sqrt(distance_sq(f, out))


def update_with_compression(f: KernelModel, x, y, p: LearnerParams, loss: LossSpec,
                            birth=(0, 0)) -> UpdateOutcome:
    """SGD step followed by the configured compression.

    Compression only runs when the step inserted a support vector, so a
    passive step never touches the model.
    """
    step = kernel_sgd_update(f, x, y, p, loss, birth)
    comp = p.compression
    if comp.kind == "none" or not step.added_sv:
        return step
    if comp.kind == "truncate":
        new, eps = truncate(step.model, comp.budget)
    else:
        new, eps = project_newest(step.model, comp.tolerance)
    if new is step.model:
        return step
    if not np.all(np.isfinite(new.coeffs)):
        raise FloatingPointError("non-finite coefficients after compression")
    drift = math.sqrt(distance_sq(f, new))
    return UpdateOutcome(new, step.loss, drift, True, eps, step.prediction)


def update(f, x, y, p: LearnerParams, loss: LossSpec, birth=(0, 0)) -> UpdateOutcome:
    """Dispatch to the kernel or linear learner depending on the model type."""
    if isinstance(f, LinearModel):
        return linear_sgd_update(f, x, y, p, loss)
    out = update_with_compression(f, x, y, p, loss, birth)
    if not np.all(np.isfinite(out.model.coeffs)):
        raise FloatingPointError("non-finite kernel coefficients")
    return out
