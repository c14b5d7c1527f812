"""Weight programs over the probability simplex.

Two shapes are supported:

* squared L2 distance between a mixture of control quantile functions and the
  target quantile function, solved by accelerated projected gradient (FISTA
  with function-value restarts) followed by an exact refinement on the active
  face;
* L1 distance between a mixture of control CDFs and the target CDF, solved as
  a linear program with HiGHS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .distribution import (
    DiscreteCDF,
    EmpiricalQuantile,
    GRAM_WARN_THRESHOLD,
    cdf_spacing,
    quadrature_weights,
)
from .errors import DataError, EstimationError

__all__ = [
    "SimplexWeights",
    "SolverConfig",
    "project_simplex",
    "solve_quantile_weights",
    "solve_cdf_weights",
    "quantile_objective",
    "cdf_objective",
    "solve_weighted_lsq",
    "solve_weighted_l1",
]

ZERO_WEIGHT = 1e-10
REFINE_EVERY = 20


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100_000
    tolerance: float = 1e-12

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    weights: np.ndarray
    objective: float
    iterations: int = 0
    converged: bool = True
    degenerate: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        if np.any(w < -1e-12):
            raise EstimationError(f"weights outside the simplex: {w}")
        w = np.maximum(w, 0.0)
        if abs(w.sum() - 1.0) > 1e-9:
            raise EstimationError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def rounded(self) -> list[float]:
        """Weights with entries below 1e-10 reported as exactly 0."""
        return [0.0 if v < ZERO_WEIGHT else float(v) for v in self.weights]

    def to_dict(self, names=None) -> dict:
        out = {
            "weights": self.rounded(),
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "degenerate": bool(self.degenerate),
        }
        if names is not None:
            out["donors"] = list(names)
        return out


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("project_simplex expects a non-empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _normalize(w: np.ndarray) -> np.ndarray:
    w = np.maximum(w, 0.0)
    return w / w.sum()


def quantile_objective(weights, target: EmpiricalQuantile, controls, q_min=0.0, q_max=1.0) -> float:
    """Discretised integral of the squared gap between the mixture and the target."""
    X = np.column_stack([c.values for c in controls])
    w = quadrature_weights(target.grid, q_min, q_max)
    r = X @ np.asarray(weights, dtype=np.float64) - target.values
    return float(np.dot(w, r * r))


def cdf_objective(weights, target: DiscreteCDF, controls, y_min=None, y_max=None) -> float:
    X = np.column_stack([c.cum for c in controls])
    w = cdf_spacing(target.support, y_min, y_max)
    return float(np.dot(w, np.abs(X @ np.asarray(weights, dtype=np.float64) - target.cum)))


def _refine_on_face(H, b, w, objective):
    """Solve the equality-constrained QP on the support of ``w`` and keep it if KKT holds."""
    J = w.size
    active = w > ZERO_WEIGHT
    for _ in range(J):
        idx = np.nonzero(active)[0]
        k = idx.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = 2.0 * H[np.ix_(idx, idx)]
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.append(2.0 * b[idx], 1.0)
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        lam = sol[:k]
        if np.all(lam >= -1e-14):
            cand = np.zeros(J)
            cand[idx] = lam
            cand = _normalize(cand)
            grad = 2.0 * (H @ cand - b)
            mu = grad[idx].mean()
            # inactive coordinates must not want to enter the support
            slack = grad - mu
            scale = max(1.0, float(np.max(np.abs(grad))))
            if np.all(slack[~active] >= -1e-9 * scale):
                return cand, objective(cand)
            return None
        # drop the most negative coordinate and retry on the smaller face
        active[idx[np.argmin(lam)]] = False
        if not active.any():
            return None
    return None


def solve_weighted_lsq(X, y, quad, cfg: SolverConfig | None = None) -> SimplexWeights:
    """Minimise ``sum(quad * (X @ lam - y)**2)`` over the simplex."""
    cfg = cfg or SolverConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise DataError("need at least one control")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite values in solver inputs")
    J = X.shape[1]
    sq = np.sqrt(quad)
    A = X * sq[:, None]
    c = y * sq

    def objective(lam):
        r = A @ lam - c
        return float(np.dot(r, r))

    H = A.T @ A
    b = A.T @ c
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    degenerate = bool(eig[0] < GRAM_WARN_THRESHOLD)
    lip = 2.0 * eig[-1]

    cc = float(np.dot(c, c))

    def fast_objective(lam):
        # Gram form; cheap but loses digits to cancellation, so only used for control flow
        return float(lam @ (H @ lam) - 2.0 * np.dot(b, lam) + cc)

    x = np.full(J, 1.0 / J)
    f = fast_objective(x)
    scale = max(objective(x), np.finfo(float).tiny)
    iterations = 0
    converged = J == 1 or lip <= 0.0 or objective(x) == 0.0
    refined = None
    if not converged:
        step = 1.0 / lip
        yk = x.copy()
        t = 1.0
        for iterations in range(1, cfg.max_iterations + 1):
            x_new = project_simplex(yk - step * 2.0 * (H @ yk - b))
            f_new = fast_objective(x_new)
            if f_new > f:
                # function-value restart: a plain projected step from x is monotone
                t = 1.0
                x_new = project_simplex(x - step * 2.0 * (H @ x - b))
                f_new = fast_objective(x_new)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            yk = x_new + ((t - 1.0) / t_new) * (x_new - x)
            improvement = f - f_new
            moved = float(np.max(np.abs(x_new - x)))
            x, f, t = x_new, f_new, t_new
            if improvement <= cfg.tolerance * scale and moved <= np.sqrt(cfg.tolerance):
                converged = True
                break
            if iterations % REFINE_EVERY == 0:
                refined = _refine_on_face(H, b, _normalize(x), objective)
                if refined is not None:
                    converged = True
                    break

    best = _normalize(x)
    best_f = objective(best)
    if refined is None:
        refined = _refine_on_face(H, b, best.copy(), objective)
    if refined is not None and refined[1] <= best_f:
        best, best_f = refined
        converged = True
    # certificate: never worse than putting all mass on one control
    vertex = np.array([objective(np.eye(J)[j]) for j in range(J)])
    j = int(np.argmin(vertex))
    if vertex[j] < best_f:
        best, best_f = np.eye(J)[j], float(vertex[j])
    return SimplexWeights(best, best_f, iterations, converged, degenerate)


def solve_quantile_weights(
    target: EmpiricalQuantile,
    controls,
    cfg: SolverConfig | None = None,
    q_min: float = 0.0,
    q_max: float = 1.0,
) -> SimplexWeights:
    controls = list(controls)
    if not controls:
        raise DataError("need at least one control")
    for c in controls:
        if c.grid != target.grid:
            raise DataError("controls and target must share a quantile grid")
    X = np.column_stack([c.values for c in controls])
    quad = quadrature_weights(target.grid, q_min, q_max)
    return solve_weighted_lsq(X, target.values, quad, cfg)


def solve_weighted_l1(X, y, spacing) -> SimplexWeights:
    """Minimise ``sum(spacing * |X @ lam - y|)`` over the simplex as an LP."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite values in solver inputs")
    J = X.shape[1]
    rows = np.nonzero(spacing > 0)[0]
    K = rows.size

    def objective(lam):
        return float(np.dot(spacing, np.abs(X @ lam - y)))

    if K == 0:
        lam = np.full(J, 1.0 / J)
        return SimplexWeights(lam, 0.0, 0, True, J > 1)
    Xr, yr, wr = X[rows], y[rows], spacing[rows]
    # variables [lam (J), t (K)]; t_k >= +-(Xr lam - yr)_k
    cost = np.concatenate([np.zeros(J), wr])
    eye = np.eye(K)
    A_ub = np.block([[Xr, -eye], [-Xr, -eye]])
    b_ub = np.concatenate([yr, -yr])
    A_eq = np.concatenate([np.ones(J), np.zeros(K)])[None, :]
    res = linprog(
        cost,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * J + [(0, None)] * K,
        method="highs",
    )
    if res.status != 0:
        raise EstimationError(f"L1 weight program failed: {res.message}")
    lam = _normalize(res.x[:J])
    best_f = objective(lam)
    vertex = np.array([objective(np.eye(J)[j]) for j in range(J)])
    j = int(np.argmin(vertex))
    if vertex[j] < best_f:
        lam, best_f = np.eye(J)[j], float(vertex[j])
    gram = X.T @ (X * spacing[:, None])
    degenerate = bool(np.linalg.eigvalsh(0.5 * (gram + gram.T))[0] < GRAM_WARN_THRESHOLD)
    return SimplexWeights(lam, best_f, int(getattr(res, "nit", 0) or 0), True, degenerate)


def solve_cdf_weights(
    target: DiscreteCDF,
    controls,
    cfg: SolverConfig | None = None,
    y_min: float | None = None,
    y_max: float | None = None,
) -> SimplexWeights:
    controls = list(controls)
    if not controls:
        raise DataError("need at least one control")
    for c in controls:
        if not np.array_equal(c.support, target.support):
            raise DataError("controls and target must share a support")
    X = np.column_stack([c.cum for c in controls])
    return solve_weighted_l1(X, target.cum, cdf_spacing(target.support, y_min, y_max))
