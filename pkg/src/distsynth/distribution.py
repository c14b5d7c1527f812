"""Empirical quantile functions, discrete CDFs and the distances between them.

Quantile functions live on a uniform grid ``{q/G : q = 0..G}``. Integrals over
``[q_min, q_max]`` use the trapezoid rule on that grid; when a bound falls between
grid nodes the integrand is linearly interpolated, so the quadrature stays a
fixed weight vector applied to node values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = [
    "QuantileGrid",
    "EmpiricalQuantile",
    "DiscreteCDF",
    "GramDiagnostic",
    "empirical_quantile",
    "empirical_cdf",
    "quadrature_weights",
    "cdf_spacing",
    "wasserstein2",
    "l1_cdf_distance",
    "gram_diagnostic",
    "shared_support",
    "DEFAULT_GRID_SIZE",
    "GRAM_WARN_THRESHOLD",
]

DEFAULT_GRID_SIZE = 1000
GRAM_WARN_THRESHOLD = 1e-8


@dataclass(frozen=True)
class QuantileGrid:
    """Uniform grid of ``size + 1`` quantile levels from 0 to 1."""

    size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.size!r}")

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.size + 1, dtype=np.float64) / self.size

    def __len__(self) -> int:
        return self.size + 1


@dataclass(frozen=True, eq=False)
class EmpiricalQuantile:
    grid: QuantileGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.grid),):
            raise DataError(
                f"quantile vector has shape {values.shape}, grid needs ({len(self.grid)},)"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class DiscreteCDF:
    support: np.ndarray
    cum: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.float64)
        cum = np.asarray(self.cum, dtype=np.float64)
        if support.ndim != 1 or support.shape != cum.shape or support.size == 0:
            raise DataError("support and cum must be non-empty vectors of equal length")
        if np.any(np.diff(support) <= 0):
            raise DataError("support must be strictly increasing")
        if np.any(cum < -1e-12) or np.any(cum > 1 + 1e-12) or np.any(np.diff(cum) < -1e-12):
            raise DataError("cumulative probabilities must be non-decreasing within [0, 1]")
        if abs(cum[-1] - 1.0) > 1e-12:
            raise DataError(f"final cumulative probability is {cum[-1]!r}, expected 1")
        support.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "cum", cum)

    @property
    def pmf(self) -> np.ndarray:
        return np.diff(self.cum, prepend=0.0)


@dataclass(frozen=True, eq=False)
class GramDiagnostic:
    matrix: np.ndarray
    min_eigenvalue: float
    warning: bool = field(default=False)

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "min_eigenvalue": float(self.min_eigenvalue),
            "warning": bool(self.warning),
        }


def _order_statistic_index(n: int, grid: QuantileGrid) -> np.ndarray:
    # smallest k (1-based) with k/n >= q/G, i.e. ceil(q*n/G) in exact integer arithmetic
    q = np.arange(grid.size + 1, dtype=np.int64)
    k = -((-q * n) // grid.size)
    return np.maximum(k, 1) - 1


def empirical_quantile(samples, grid: QuantileGrid | None = None) -> EmpiricalQuantile:
    """Left-continuous inverse of the empirical CDF evaluated on ``grid``.

    ``q = 0`` maps to the sample minimum.
    """
    grid = grid or QuantileGrid()
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise DataError("cannot estimate a quantile function from an empty sample")
    if not np.all(np.isfinite(x)):
        raise DataError("samples contain non-finite values")
    return EmpiricalQuantile(grid, np.sort(x)[_order_statistic_index(x.size, grid)])


def quantile_from_sorted(sorted_x: np.ndarray, grid: QuantileGrid) -> EmpiricalQuantile:
    """Same as :func:`empirical_quantile` for data already sorted ascending."""
    return EmpiricalQuantile(grid, sorted_x[_order_statistic_index(sorted_x.size, grid)])


def empirical_cdf(samples, support) -> DiscreteCDF:
    x = np.asarray(samples, dtype=np.float64).ravel()
    support = np.asarray(support, dtype=np.float64)
    if x.size == 0:
        raise DataError("cannot estimate a CDF from an empty sample")
    pos = np.searchsorted(support, x)
    inside = (pos < support.size) & (support[np.minimum(pos, support.size - 1)] == x)
    if not np.all(inside):
        bad = x[~inside][0]
        raise DataError(f"sample value {bad!r} is not in the support")
    counts = np.bincount(pos, minlength=support.size)
    return DiscreteCDF(support, np.cumsum(counts) / x.size)


def shared_support(samples) -> np.ndarray:
    """Sorted union of the distinct values across an iterable of samples."""
    arrays = [np.unique(np.asarray(s, dtype=np.float64)) for s in samples]
    if not arrays:
        raise DataError("no samples to build a support from")
    return np.unique(np.concatenate(arrays))


def quadrature_weights(grid: QuantileGrid, q_min: float = 0.0, q_max: float = 1.0) -> np.ndarray:
    """Weights ``w`` with ``sum(w * g)`` = trapezoid integral of ``g`` over [q_min, q_max]."""
    if not 0.0 <= q_min < q_max <= 1.0:
        raise ValueError(f"need 0 <= q_min < q_max <= 1, got [{q_min}, {q_max}]")
    G = grid.size
    # snap bounds that sit on a node up to rounding
    lo, hi = q_min * G, q_max * G
    lo = round(lo) if abs(lo - round(lo)) < 1e-9 else lo
    hi = round(hi) if abs(hi - round(hi)) < 1e-9 else hi
    w = np.zeros(G + 1)
    i = np.arange(G)
    s = np.clip(lo, i, i + 1)
    e = np.clip(hi, i, i + 1)
    length = np.maximum(e - s, 0.0)
    mid = 0.5 * (s + e) - i
    np.add.at(w, i, length * (1.0 - mid))
    np.add.at(w, i + 1, length * mid)
    return w / G


def _check_same_grid(a: EmpiricalQuantile, b: EmpiricalQuantile):
    if a.grid != b.grid:
        raise DataError(f"quantile grids differ: {a.grid.size} vs {b.grid.size}")


def wasserstein2(a: EmpiricalQuantile, b: EmpiricalQuantile, q_min: float = 0.0, q_max: float = 1.0) -> float:
    _check_same_grid(a, b)
    w = quadrature_weights(a.grid, q_min, q_max)
    d = a.values - b.values
    return float(np.sqrt(max(np.dot(w, d * d), 0.0)))


def cdf_spacing(support: np.ndarray, y_min: float | None = None, y_max: float | None = None) -> np.ndarray:
    """Integration weights for L1 distances between step CDFs on ``support``.

    Entry k is the gap to the next support point (0 for the last). With a
    restriction, only points with ``y_min <= y_k <= y_max`` keep their weight.
    """
    support = np.asarray(support, dtype=np.float64)
    w = np.append(np.diff(support), 0.0)
    if y_min is not None:
        w[support < y_min] = 0.0
    if y_max is not None:
        w[support > y_max] = 0.0
    return w


def _check_same_support(a: DiscreteCDF, b: DiscreteCDF):
    if a.support.shape != b.support.shape or not np.array_equal(a.support, b.support):
        raise DataError("CDF supports differ")


def l1_cdf_distance(a: DiscreteCDF, b: DiscreteCDF, y_min: float | None = None, y_max: float | None = None) -> float:
    _check_same_support(a, b)
    return float(np.dot(np.abs(a.cum - b.cum), cdf_spacing(a.support, y_min, y_max)))


def _gram(columns: np.ndarray, weights: np.ndarray) -> GramDiagnostic:
    matrix = columns.T @ (columns * weights[:, None])
    matrix = 0.5 * (matrix + matrix.T)
    min_eig = float(np.linalg.eigvalsh(matrix)[0])
    return GramDiagnostic(matrix, min_eig, min_eig < GRAM_WARN_THRESHOLD)


def gram_diagnostic(controls, q_min: float = 0.0, q_max: float = 1.0) -> GramDiagnostic:
    """Matrix of trapezoid inner products between control quantile functions.

    Also accepts a list of :class:`DiscreteCDF`, in which case the inner product
    uses the step-CDF spacing weights.
    """
    controls = list(controls)
    if not controls:
        raise DataError("gram diagnostic needs at least one control")
    if isinstance(controls[0], DiscreteCDF):
        for c in controls[1:]:
            _check_same_support(controls[0], c)
        cols = np.column_stack([c.cum for c in controls])
        return _gram(cols, cdf_spacing(controls[0].support))
    for c in controls[1:]:
        _check_same_grid(controls[0], c)
    cols = np.column_stack([c.values for c in controls])
    return _gram(cols, quadrature_weights(controls[0].grid, q_min, q_max))
