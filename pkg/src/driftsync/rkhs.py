"""Kernels and support-vector-expansion models.

A :class:`KernelModel` stores f(.) = sum_s alpha_s k(s, .) as a point matrix,
a coefficient vector and per-point birth tags. Models are treated as
immutable values; every operation returns a new model.

Sums run strictly left to right over the stored support order (numpy's
``cumsum`` is sequential), so results do not depend on BLAS blocking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "KernelSpec",
    "KernelModel",
    "kernel_eval",
    "predict",
    "inner_product",
    "distance_sq",
    "norm",
    "average",
    "divergence",
    "compact",
    "point_key",
]

# gram blocks larger than this many doubles are computed in row chunks
_GRAM_CHUNK = 4_000_000


def _lsum(v, axis=-1):
    """Sequential left-to-right sum along ``axis``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[axis] == 0:
        return np.sum(v, axis=axis)
    return np.take(np.cumsum(v, axis=axis), -1, axis=axis)


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "gaussian"
    bandwidth: float = 1.0
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear", "polynomial"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("degree must be a positive integer")
        if not self.offset >= 0:
            raise ValueError("offset must be nonnegative")

    def gram(self, A, B) -> np.ndarray:
        """Kernel matrix between the rows of ``A`` and the rows of ``B``."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if A.shape[1] != B.shape[1]:
            raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        n, d = A.shape[0], A.shape[1]
        rows = max(1, _GRAM_CHUNK // max(1, B.shape[0] * d))
        if n > rows:
            return np.vstack([self.gram(A[i:i + rows], B) for i in range(0, n, rows)])
        if self.kind == "gaussian":
            # (a-b)^2 == (b-a)^2 bitwise, so the matrix is exactly symmetric
            sq = _lsum((A[:, None, :] - B[None, :, :]) ** 2)
            return np.exp(-sq / (2.0 * self.bandwidth ** 2))
        dots = _lsum(A[:, None, :] * B[None, :, :])
        if self.kind == "linear":
            return dots
        return (dots + self.offset) ** int(self.degree)

    def diag(self, A) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        if self.kind == "gaussian":
            return np.ones(A.shape[0])
        dots = _lsum(A * A)
        if self.kind == "linear":
            return dots
        return (dots + self.offset) ** int(self.degree)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {x2.shape[0]}")
    return float(spec.gram(x[None, :], x2[None, :])[0, 0])


def point_key(x) -> bytes:
    """Identity of a support vector: the raw bytes of its float64 coordinates."""
    return np.ascontiguousarray(x, dtype=np.float64).tobytes()


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Support vector expansion with a fixed kernel.

    ``births`` is an (n, 2) integer array of (round, learner) tags; the
    lexicographic order of the tags defines "oldest" for truncation.
    ``keys`` mirrors ``points`` row by row (see :func:`point_key`).

    Use :meth:`from_terms` to build a model from raw terms; it merges
    bitwise-identical points. The plain constructor trusts its input.
    """

    kernel: KernelSpec
    points: np.ndarray
    coeffs: np.ndarray
    births: np.ndarray
    keys: tuple = field(default=None)

    def __post_init__(self):
        if self.keys is None:
            object.__setattr__(self, "keys", tuple(point_key(p) for p in self.points))
        if not (len(self.points) == len(self.coeffs) == len(self.births) == len(self.keys)):
            raise ValueError("points, coeffs and births must have equal length")

    @classmethod
    def empty(cls, kernel: KernelSpec, dim: int = 0) -> "KernelModel":
        return cls(kernel, np.zeros((0, dim)), np.zeros(0), np.zeros((0, 2), dtype=np.int64), ())

    @classmethod
    def from_terms(cls, kernel: KernelSpec, points, coeffs, births=None) -> "KernelModel":
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        coeffs = np.asarray(coeffs, dtype=np.float64).ravel()
        if births is None:
            births = np.zeros((len(coeffs), 2), dtype=np.int64)
            births[:, 0] = np.arange(len(coeffs))
        births = np.asarray(births, dtype=np.int64).reshape(-1, 2)
        if len(coeffs) == 0:
            return cls.empty(kernel, points.shape[1] if points.size else 0)
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(coeffs))):
            raise ValueError("support points and coefficients must be finite")
        index: dict[bytes, int] = {}
        keep_pts, keep_c, keep_b, keys = [], [], [], []
        for p, c, b in zip(points, coeffs, births):
            k = point_key(p)
            j = index.get(k)
            if j is None:
                index[k] = len(keys)
                keys.append(k)
                keep_pts.append(p)
                keep_c.append(float(c))
                keep_b.append(tuple(b))
            else:
                keep_c[j] += float(c)
                keep_b[j] = min(keep_b[j], tuple(b))
        return cls(kernel, np.array(keep_pts), np.array(keep_c),
                   np.array(keep_b, dtype=np.int64).reshape(-1, 2), tuple(keys))

    def __len__(self):
        return len(self.coeffs)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __call__(self, x) -> float:
        return predict(self, x)

    @property
    def index(self) -> dict:
        """Map from point key to row; built once per model."""
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {k: j for j, k in enumerate(self.keys)}
            object.__setattr__(self, "_index", idx)
        return idx

    def support_keys(self) -> set:
        return set(self.keys)

    def scaled(self, factor: float) -> "KernelModel":
        if factor == 1.0:
            return self
        return KernelModel(self.kernel, self.points, self.coeffs * factor, self.births, self.keys)

    def take(self, idx) -> "KernelModel":
        idx = np.asarray(idx, dtype=np.int64)
        return KernelModel(self.kernel, self.points[idx], self.coeffs[idx],
                           self.births[idx], tuple(self.keys[i] for i in idx))

    def with_term(self, x, alpha: float, birth) -> tuple["KernelModel", bool]:
        """Add alpha*k(x, .); returns (model, created_new_entry)."""
        x = np.asarray(x, dtype=np.float64).ravel()
        key = point_key(x)
        j = self.index.get(key, -1)
        if j >= 0:
            coeffs = self.coeffs.copy()
            coeffs[j] += alpha
            return KernelModel(self.kernel, self.points, coeffs, self.births, self.keys), False
        pts = x[None, :] if len(self) == 0 else np.vstack([self.points, x[None, :]])
        births = np.vstack([self.births, np.asarray(birth, dtype=np.int64).reshape(1, 2)])
        return KernelModel(self.kernel, pts, np.append(self.coeffs, alpha), births,
                           self.keys + (key,)), True


def _check_same_kernel(f: KernelModel, g: KernelModel):
    if f.kernel != g.kernel:
        raise ValueError(f"kernel mismatch: {f.kernel} vs {g.kernel}")


def predict(f: KernelModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    if len(f) == 0:
        return 0.0
    if x.shape[0] != f.dim:
        raise ValueError(f"dimension mismatch: model has {f.dim}, input has {x.shape[0]}")
    return float(_lsum(f.coeffs * f.kernel.gram(f.points, x[None, :])[:, 0]))


def _bilinear(alpha, K, beta) -> float:
    return float(_lsum(alpha * _lsum(K * beta[None, :])))


def inner_product(f: KernelModel, g: KernelModel) -> float:
    _check_same_kernel(f, g)
    if len(f) == 0 or len(g) == 0:
        return 0.0
    return _bilinear(f.coeffs, f.kernel.gram(f.points, g.points), g.coeffs)


def compact(f: KernelModel) -> KernelModel:
    """Drop entries whose coefficient is exactly zero."""
    nz = np.flatnonzero(f.coeffs != 0.0)
    if len(nz) == len(f):
        return f
    return f.take(nz)


def _difference(f: KernelModel, g: KernelModel) -> KernelModel:
    """f - g on the union support, with exact cancellations removed."""
    if f.keys is g.keys or f.keys == g.keys:
        return compact(KernelModel(f.kernel, f.points, f.coeffs - g.coeffs, f.births, f.keys))
    index = f.index
    rows = np.fromiter((index.get(k, -1) for k in g.keys), dtype=np.int64, count=len(g))
    shared = rows >= 0
    coeffs = f.coeffs.copy()
    # a key occurs at most once per model, so plain fancy-index subtraction is safe
    coeffs[rows[shared]] -= g.coeffs[shared]
    extra = np.flatnonzero(~shared)
    if len(extra):
        pts = g.points[extra] if len(f) == 0 else np.vstack([f.points, g.points[extra]])
        d = KernelModel(f.kernel, pts, np.concatenate([coeffs, -g.coeffs[extra]]),
                        np.vstack([f.births, g.births[extra]]),
                        f.keys + tuple(g.keys[j] for j in extra))
    else:
        d = KernelModel(f.kernel, f.points, coeffs, f.births, f.keys)
    return compact(d)


def _norm_sq(f: KernelModel) -> float:
    if len(f) == 0:
        return 0.0
    K = f.kernel.gram(f.points, f.points)
    val = _bilinear(f.coeffs, K, f.coeffs)
    if val < 0.0:
        scale = float(np.sum(np.abs(f.coeffs))) ** 2 * float(np.max(np.abs(np.diag(K))))
        if val < -1e-8 * max(scale, 1.0):
            raise ArithmeticError(f"negative squared norm {val}; kernel is not PSD here")
        val = 0.0
    return val


def distance_sq(f: KernelModel, g: KernelModel) -> float:
    """||f - g||^2 in the RKHS, clamped at zero.

    Equal to <f,f> + <g,g> - 2<f,g>, evaluated on the explicit difference
    model so shared terms with identical coefficients cancel exactly.
    """
    _check_same_kernel(f, g)
    return _norm_sq(_difference(f, g))


def norm(f: KernelModel) -> float:
    return math.sqrt(_norm_sq(f))


def average(models: Sequence[KernelModel]) -> KernelModel:
    """Coefficient-wise mean over the union of supports.

    Entries whose mean cancels to zero stay in the support. A point held by
    every model with bitwise-equal coefficients keeps that coefficient.
    """
    if len(models) == 0:
        raise ValueError("cannot average an empty configuration")
    kernel = models[0].kernel
    for f in models[1:]:
        _check_same_kernel(models[0], f)
    m = len(models)
    if all(f is models[0] for f in models):
        return models[0]
    nonempty = [f for f in models if len(f)]
    if not nonempty:
        return KernelModel.empty(kernel, max(f.dim for f in models))
    index: dict[bytes, int] = {}
    keys = []
    group = []
    for f in nonempty:
        for k in f.keys:
            i = index.get(k)
            if i is None:
                i = index[k] = len(keys)
                keys.append(k)
            group.append(i)
    group = np.asarray(group, dtype=np.int64)
    n = len(keys)
    all_pts = np.vstack([f.points for f in nonempty])
    all_c = np.concatenate([f.coeffs for f in nonempty])
    all_b = np.vstack([f.births for f in nonempty])
    first = np.full(n, len(group), dtype=np.int64)
    np.minimum.at(first, group, np.arange(len(group)))
    # bincount accumulates in input order, i.e. model order
    total = np.bincount(group, weights=all_c, minlength=n)
    count = np.bincount(group, minlength=n)
    lo = np.full(n, np.inf)
    hi = np.full(n, -np.inf)
    np.minimum.at(lo, group, all_c)
    np.maximum.at(hi, group, all_c)
    coeffs = np.where((count == m) & (lo == hi), all_c[first], total / m)
    order = np.lexsort((all_b[:, 1], all_b[:, 0]))
    _, oldest = np.unique(group[order], return_index=True)
    births = all_b[order[oldest]]
    return KernelModel(kernel, all_pts[first], coeffs, births, tuple(keys))


def divergence(models: Sequence[KernelModel], avg: KernelModel | None = None) -> float:
    """Mean squared distance of the local models to their average."""
    if len(models) == 0:
        raise ValueError("cannot compute divergence of an empty configuration")
    if avg is None:
        avg = average(models)
    return math.fsum(distance_sq(f, avg) for f in models) / len(models)
