"""Labeled example streams.

Every synthetic example is a pure function of ``(seed, learner, round)``:
the generator for it is seeded with that triple, so any example can be
regenerated on its own and parallel learners never share RNG state.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StreamSpec",
    "StreamExhausted",
    "Stream",
    "make_stream",
    "generate_example",
    "hyperplane_normal",
]

KINDS = ("gaussian_xor", "rotating_hyperplane", "susy_like", "csv")
NORMALIZE_ROWS = 200


class StreamExhausted(Exception):
    """A finite (csv) stream ran out of rows for the requested round."""

    def __init__(self, t):
        super().__init__(f"stream exhausted at round {t}")
        self.t = t


@dataclass(frozen=True)
class StreamSpec:
    kind: str = "gaussian_xor"
    seed: int = 0
    d: int = 2
    # gaussian_xor
    cluster_sd: float = 0.5
    drift_rate: float = 0.0
    # rotating_hyperplane
    angular_rate: float = 0.0
    margin: float = 0.0
    noise: float = 0.0
    # susy_like
    separation: float = 1.0
    # csv
    path: str = ""
    label_column: int = -1
    partition: str = "round_robin"
    normalize: bool = False
    header: bool = False
    positive_label: str = "1"
    real_labels: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.kind != "csv" and (int(self.d) != self.d or self.d < 1):
            raise ValueError("d must be a positive integer")
        if self.kind == "gaussian_xor" and self.d < 2:
            raise ValueError("gaussian_xor needs d >= 2")
        if self.kind == "rotating_hyperplane":
            if self.d < 2:
                raise ValueError("rotating_hyperplane needs d >= 2")
            if not 0 <= self.margin < 0.5:
                raise ValueError("margin must lie in [0, 0.5)")
        if not 0 <= self.noise <= 1:
            raise ValueError("noise must lie in [0, 1]")
        if self.partition not in ("round_robin", "contiguous"):
            raise ValueError(f"unknown partition {self.partition!r}")
        if self.kind == "csv" and not self.path:
            raise ValueError("csv stream needs a path")


def _rng(spec: StreamSpec, i: int, t: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed & 0xFFFFFFFFFFFFFFFF, i, t])


def hyperplane_normal(spec: StreamSpec, t: int) -> np.ndarray:
    """Unit normal of the rotating hyperplane at round t (rotation in the first two axes)."""
    w = np.zeros(spec.d)
    angle = spec.angular_rate * t
    w[0] = math.cos(angle)
    w[1] = math.sin(angle)
    return w


def _gaussian_xor(spec: StreamSpec, i: int, t: int):
    rng = _rng(spec, i, t)
    signs = rng.choice([-1.0, 1.0], size=2)
    y = int(signs[0] * signs[1])
    angle = spec.drift_rate * t
    c, s = math.cos(angle), math.sin(angle)
    center = np.array([c * signs[0] - s * signs[1], s * signs[0] + c * signs[1]])
    x = rng.normal(0.0, spec.cluster_sd, size=spec.d)
    x[:2] += center
    return x, y


def _rotating_hyperplane(spec: StreamSpec, i: int, t: int):
    rng = _rng(spec, i, t)
    w = hyperplane_normal(spec, t)
    while True:
        x = rng.uniform(-1.0, 1.0, size=spec.d)
        score = float(np.dot(w, x))
        if abs(score) >= spec.margin and score != 0.0:
            break
    y = 1 if score > 0 else -1
    if spec.noise and rng.random() < spec.noise:
        y = -y
    return x, y


def _susy_like(spec: StreamSpec, i: int, t: int):
    # signal has wider spread in the first half of the features and a mean
    # shift in the rest; the Bayes boundary is quadratic and classes overlap
    rng = _rng(spec, i, t)
    y = 1 if rng.random() < 0.5 else -1
    x = rng.normal(0.0, 1.0, size=spec.d)
    if y == 1:
        h = max(1, spec.d // 2)
        x[:h] *= 1.0 + spec.separation
        x[h:] += 0.5 * spec.separation
    if spec.noise and rng.random() < spec.noise:
        y = -y
    return x, y


@functools.lru_cache(maxsize=8)
def _load_csv(path: str, label_column: int, header: bool, positive_label: str, real_labels: bool,
              normalize: bool):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if header:
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    col = label_column % width
    X, y = [], []
    for lineno, r in enumerate(rows, start=2 if header else 1):
        if len(r) != width:
            raise ValueError(f"{path}: row {lineno} has {len(r)} fields, expected {width}")
        lab = r[col].strip()
        feats = [float(v) for j, v in enumerate(r) if j != col]
        X.append(feats)
        if real_labels:
            y.append(float(lab))
        else:
            y.append(1 if lab == positive_label else -1)
    X = np.array(X, dtype=np.float64)
    if normalize:
        head = X[:NORMALIZE_ROWS]
        lo, hi = head.min(axis=0), head.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = 2.0 * (X - lo) / span - 1.0
    X.setflags(write=False)
    return X, tuple(y)


@dataclass
class Stream:
    """A stream bound to a learner count (needed for csv partitioning)."""

    spec: StreamSpec
    m: int = 1
    _data: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.spec.kind == "csv":
            s = self.spec
            self._data = _load_csv(s.path, s.label_column, s.header, s.positive_label, s.real_labels,
                                   s.normalize)

    @property
    def dim(self) -> int:
        if self.spec.kind == "csv":
            return self._data[0].shape[1]
        return self.spec.d

    @property
    def rounds_available(self) -> int | None:
        if self.spec.kind != "csv":
            return None
        return len(self._data[1]) // self.m

    def example(self, i: int, t: int):
        """Example for learner ``i`` (0-based) at round ``t`` (1-based)."""
        kind = self.spec.kind
        if kind == "gaussian_xor":
            return _gaussian_xor(self.spec, i, t)
        if kind == "rotating_hyperplane":
            return _rotating_hyperplane(self.spec, i, t)
        if kind == "susy_like":
            return _susy_like(self.spec, i, t)
        X, y = self._data
        n = len(y)
        if self.spec.partition == "round_robin":
            row = (t - 1) * self.m + i
        else:
            per = n // self.m
            if t > per:
                raise StreamExhausted(t)
            row = i * per + (t - 1)
        if row >= n or t > n // self.m:
            raise StreamExhausted(t)
        return X[row].copy(), y[row]


def make_stream(spec: StreamSpec, m: int = 1) -> Stream:
    return Stream(spec, m)


def generate_example(spec: StreamSpec, i: int, t: int, m: int = 1):
    return make_stream(spec, m).example(i, t)
