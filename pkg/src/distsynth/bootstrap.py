"""Bootstrap confidence bands for distributional synthetic controls.

Each draw resamples the donor cells (and optionally the treated cells),
re-estimates their distributions, re-solves the pre-period weights, averages
them and rebuilds counterfactuals and effects with the draw's own weights.

Uniform bands are ``center +- t`` where ``t`` is the ``1 - alpha`` empirical
quantile of the sup-norm deviation of the draws from the center. Pointwise
percentile bands use order statistics ``floor(alpha/2 (B+1))`` and
``ceil((1 - alpha/2)(B+1))`` at every grid point.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .distribution import DiscreteCDF, EmpiricalQuantile, _order_statistic_index
from .errors import DistSynthError, EstimationError
from .estimator import CellDistributions, DscFit, FitSpec, build_distributions, fit_distributions
from .panel import MicroPanel
from .solver import SolverConfig

__all__ = [
    "BootstrapConfig",
    "Band",
    "BootstrapBands",
    "RESAMPLING_MODES",
    "bootstrap_bands",
    "empirical_quantile_of_deviations",
    "pointwise_percentile_band",
]

RESAMPLING_MODES = ("with-replacement", "paper-literal")
MAX_DISCARD_SHARE = 0.05


@dataclass(frozen=True)
class BootstrapConfig:
    draws: int = 1000
    alpha: float = 0.05
    seed: int = 0
    mode: str = "with-replacement"
    resample_treated: bool = False
    pointwise: bool = False
    keep_draws: bool = False

    def __post_init__(self):
        if self.draws < 1:
            raise ValueError("need at least one bootstrap draw")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.mode not in RESAMPLING_MODES:
            raise ValueError(f"mode must be one of {RESAMPLING_MODES}, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def empirical_quantile_of_deviations(deviations, alpha: float) -> float:
    """Order statistic number ``ceil((1 - alpha) B)`` (1-based, clamped to 1..B)."""
    d = np.sort(np.asarray(deviations, dtype=np.float64).ravel())
    if d.size == 0:
        raise ValueError("no deviations")
    # the 1e-9 guard keeps e.g. 0.95 * 100 from rounding up to 96
    k = math.ceil((1.0 - alpha) * d.size - 1e-9)
    return float(d[min(max(k, 1), d.size) - 1])


def pointwise_percentile_band(draws, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(np.asarray(draws, dtype=np.float64), axis=0)
    B = x.shape[0]
    lo = math.floor(alpha / 2.0 * (B + 1) + 1e-9)
    hi = math.ceil((1.0 - alpha / 2.0) * (B + 1) - 1e-9)
    lo = min(max(lo, 1), B)
    hi = min(max(hi, 1), B)
    return x[lo - 1], x[hi - 1]


@dataclass(frozen=True, eq=False)
class Band:
    axis: np.ndarray
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    critical_value: float
    pointwise_lower: np.ndarray | None = None
    pointwise_upper: np.ndarray | None = None
    draws: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "axis": self.axis.tolist(),
            "center": self.center.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "critical_value": float(self.critical_value),
        }
        if self.pointwise_lower is not None:
            out["pointwise_lower"] = self.pointwise_lower.tolist()
            out["pointwise_upper"] = self.pointwise_upper.tolist()
        return out


@dataclass(frozen=True, eq=False)
class BootstrapBands:
    fit: DscFit
    config: BootstrapConfig
    objects: dict
    draws_effective: int
    discarded: int

    def to_dict(self) -> dict:
        return {
            "treated": self.fit.spec.treated,
            "donors": list(self.fit.spec.donors),
            "outcome_kind": self.fit.kind,
            "alpha": self.config.alpha,
            "seed": self.config.seed,
            "draws_requested": self.config.draws,
            "draws_effective": self.draws_effective,
            "discarded": self.discarded,
            "mode": self.config.mode,
            "resample_treated": self.config.resample_treated,
            "band": "uniform",
            "pointwise": self.config.pointwise,
            "rng": rng.ALGORITHM,
            "objects": {name: band.to_dict() for name, band in self.objects.items()},
        }


class _Resampler:
    """Per-cell resampling that avoids re-sorting: draws become multiplicities."""

    def __init__(self, panel: MicroPanel, spec: FitSpec, cells: CellDistributions):
        self.kind = cells.kind
        self.grid = cells.grid
        self.support = cells.support
        self.data = {}
        for j, unit in enumerate(spec.units):
            for t in spec.periods:
                x = panel.cell(unit, t)
                if self.kind == "continuous":
                    self.data[(j, t)] = np.sort(x)
                else:
                    self.data[(j, t)] = np.searchsorted(self.support, x)
        self._kidx = {}

    def _order_index(self, n):
        if n not in self._kidx:
            self._kidx[n] = _order_statistic_index(n, self.grid) + 1
        return self._kidx[n]

    def draw(self, j, t, g: np.random.Generator, mode: str):
        x = self.data[(j, t)]
        n = x.size
        if mode == "with-replacement":
            counts = np.bincount(g.integers(0, n, n), minlength=n)
        else:
            # n draws without replacement from n + 1 slots; slot n has no observation
            counts = np.ones(n, dtype=np.int64)
            skipped = int(g.integers(0, n + 1))
            if skipped < n:
                counts[skipped] = 0
        m = int(counts.sum())
        if self.kind == "continuous":
            pos = np.searchsorted(np.cumsum(counts), self._order_index(m), side="left")
            return EmpiricalQuantile(self.grid, x[pos])
        per_level = np.bincount(x, weights=counts, minlength=self.support.size)
        cum = np.cumsum(per_level) / m
        cum[-1] = 1.0
        return DiscreteCDF(self.support, np.minimum(cum, 1.0))


def _objects(result: DscFit) -> dict[str, np.ndarray]:
    out = {"weights": np.asarray(result.averaged_weights.weights)}
    for t in result.spec.periods:
        cf = result.counterfactuals[t]
        out[f"counterfactual_t{t}"] = cf.values if isinstance(cf, EmpiricalQuantile) else cf.cum
    for t in result.spec.periods:
        out[f"effect_t{t}"] = np.asarray(result.effects[t])
    return out


def bootstrap_bands(
    panel: MicroPanel,
    spec: FitSpec,
    solver_cfg: SolverConfig | None = None,
    boot_cfg: BootstrapConfig | None = None,
    threads: int = 1,
    base_fit: DscFit | None = None,
) -> BootstrapBands:
    solver_cfg = solver_cfg or SolverConfig()
    boot_cfg = boot_cfg or BootstrapConfig()
    cells = build_distributions(panel, spec)
    base = base_fit or fit_distributions(cells, spec, solver_cfg)
    centers = _objects(base)
    sampler = _Resampler(panel, spec, cells)
    resampled_units = range(0 if boot_cfg.resample_treated else 1, len(spec.units))

    def one_draw(b):
        dists = {}
        for t in spec.periods:
            row = list(cells.dists[t])
            for j in resampled_units:
                g = rng.stream(boot_cfg.seed, rng.BOOTSTRAP, b, j, t)
                row[j] = sampler.draw(j, t, g, boot_cfg.mode)
            dists[t] = row
        draw_cells = CellDistributions(cells.kind, dists, grid=cells.grid, support=cells.support)
        try:
            result = fit_distributions(draw_cells, spec, solver_cfg, diagnose=False)
        except DistSynthError:
            return None
        if not result.converged:
            return None
        return _objects(result)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            draws = list(pool.map(one_draw, range(1, boot_cfg.draws + 1)))
    else:
        draws = [one_draw(b) for b in range(1, boot_cfg.draws + 1)]

    kept = [d for d in draws if d is not None]
    discarded = len(draws) - len(kept)
    if discarded > MAX_DISCARD_SHARE * boot_cfg.draws:
        raise EstimationError(f"{discarded} of {boot_cfg.draws} bootstrap draws failed")

    if spec.outcome_kind == "continuous":
        points = spec.grid.points
        in_range = (points >= spec.q_min - 1e-12) & (points <= spec.q_max + 1e-12)
        curve_axis = points
    else:
        curve_axis = cells.support
        in_range = np.ones(curve_axis.size, dtype=bool)

    objects = {}
    for name, center in centers.items():
        X = np.vstack([d[name] for d in kept])
        mask = np.ones(center.size, dtype=bool) if name == "weights" else in_range
        dev = np.max(np.abs(X[:, mask] - center[mask]), axis=1)
        crit = empirical_quantile_of_deviations(dev, boot_cfg.alpha)
        pw_lo = pw_hi = None
        if boot_cfg.pointwise:
            pw_lo, pw_hi = pointwise_percentile_band(X, boot_cfg.alpha)
        axis = np.arange(center.size, dtype=float) if name == "weights" else curve_axis
        objects[name] = Band(
            axis=axis,
            center=center.copy(),
            lower=center - crit,
            upper=center + crit,
            critical_value=crit,
            pointwise_lower=pw_lo,
            pointwise_upper=pw_hi,
            draws=X if boot_cfg.keep_draws else None,
        )
    return BootstrapBands(base, boot_cfg, objects, len(kept), discarded)
