"""Distributional synthetic controls fit.

Weights are solved independently in each pre-treatment period, averaged, and
the averaged weights build the counterfactual in every period. Continuous
outcomes mix quantile functions; ordinal and share outcomes mix CDFs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .distribution import (
    DEFAULT_GRID_SIZE,
    DiscreteCDF,
    EmpiricalQuantile,
    QuantileGrid,
    empirical_cdf,
    empirical_quantile,
    gram_diagnostic,
    shared_support,
)
from .errors import DataError, EstimationError
from .panel import MicroPanel
from .solver import (
    SimplexWeights,
    SolverConfig,
    cdf_objective,
    quantile_objective,
    solve_cdf_weights,
    solve_quantile_weights,
)

__all__ = [
    "OUTCOME_KINDS",
    "FitSpec",
    "DscFit",
    "CellDistributions",
    "fit",
    "fit_distributions",
    "build_distributions",
    "counterfactual_quantile",
    "counterfactual_cdf",
    "effect_curve",
    "average_weights",
]

OUTCOME_KINDS = ("continuous", "ordinal", "share")


@dataclass(frozen=True)
class FitSpec:
    treated: str
    donors: tuple[str, ...]
    pre_periods: tuple[int, ...]
    post_periods: tuple[int, ...] = ()
    outcome_kind: str = "continuous"
    grid_size: int = DEFAULT_GRID_SIZE
    q_min: float = 0.0
    q_max: float = 1.0
    support: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "donors", tuple(str(d) for d in self.donors))
        object.__setattr__(self, "pre_periods", tuple(int(p) for p in self.pre_periods))
        object.__setattr__(self, "post_periods", tuple(int(p) for p in self.post_periods))
        if self.support is not None:
            object.__setattr__(self, "support", tuple(float(v) for v in self.support))
        if self.outcome_kind not in OUTCOME_KINDS:
            raise ValueError(f"outcome_kind must be one of {OUTCOME_KINDS}, got {self.outcome_kind!r}")
        if not self.pre_periods:
            raise ValueError("at least one pre-treatment period is required")
        if set(self.pre_periods) & set(self.post_periods):
            raise ValueError("pre and post periods overlap")
        if self.treated in self.donors:
            raise ValueError(f"treated unit {self.treated!r} is listed as a donor")
        if not self.donors:
            raise ValueError("at least one donor is required")
        if len(set(self.donors)) != len(self.donors):
            raise ValueError("duplicate donor names")
        if not 0.0 <= self.q_min < self.q_max <= 1.0:
            raise ValueError(f"need 0 <= q_min < q_max <= 1, got [{self.q_min}, {self.q_max}]")

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(sorted(self.pre_periods + self.post_periods))

    @property
    def units(self) -> tuple[str, ...]:
        return (self.treated,) + self.donors

    @property
    def grid(self) -> QuantileGrid:
        return QuantileGrid(self.grid_size)

    def with_target(self, treated: str, donors) -> "FitSpec":
        d = asdict(self)
        d.update(treated=treated, donors=tuple(donors))
        return FitSpec(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["donors"] = list(self.donors)
        d["pre_periods"] = list(self.pre_periods)
        d["post_periods"] = list(self.post_periods)
        d["support"] = None if self.support is None else list(self.support)
        return d


@dataclass(frozen=True, eq=False)
class CellDistributions:
    """Estimated distributions for every unit of a fit, by period.

    ``dists[t][0]`` is the treated unit, ``dists[t][1:]`` the donors in order.
    """

    kind: str
    dists: dict
    grid: QuantileGrid | None = None
    support: np.ndarray | None = None


def build_distributions(panel: MicroPanel, spec: FitSpec) -> CellDistributions:
    for unit in spec.units:
        for t in spec.periods:
            if not panel.has(unit, t):
                raise DataError(f"missing cell: unit {unit!r}, period {t}")
    if spec.outcome_kind == "continuous":
        grid = spec.grid
        dists = {t: [empirical_quantile(panel.cell(u, t), grid) for u in spec.units] for t in spec.periods}
        return CellDistributions("continuous", dists, grid=grid)
    if spec.support is not None:
        support = np.asarray(spec.support, dtype=np.float64)
    elif spec.outcome_kind == "share":
        support = np.array([0.0, 1.0])
    else:
        support = shared_support(panel.cell(u, t) for u in spec.units for t in spec.periods)
    if spec.outcome_kind == "share":
        for u in spec.units:
            for t in spec.periods:
                if not np.all(np.isin(panel.cell(u, t), (0.0, 1.0))):
                    raise DataError(f"share outcome must be 0/1, unit {u!r} period {t}")
    dists = {t: [empirical_cdf(panel.cell(u, t), support) for u in spec.units] for t in spec.periods}
    return CellDistributions(spec.outcome_kind, dists, support=support)


def counterfactual_quantile(weights, controls) -> EmpiricalQuantile:
    lam = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    controls = list(controls)
    if lam.size != len(controls):
        raise DataError(f"{lam.size} weights for {len(controls)} controls")
    grid = controls[0].grid
    for c in controls[1:]:
        if c.grid != grid:
            raise DataError("controls must share a quantile grid")
    values = np.column_stack([c.values for c in controls]) @ lam
    # restore monotonicity lost to rounding in the last bit
    return EmpiricalQuantile(grid, np.maximum.accumulate(values))


def counterfactual_cdf(weights, controls) -> DiscreteCDF:
    lam = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    controls = list(controls)
    if lam.size != len(controls):
        raise DataError(f"{lam.size} weights for {len(controls)} controls")
    support = controls[0].support
    for c in controls[1:]:
        if not np.array_equal(c.support, support):
            raise DataError("controls must share a support")
    cum = np.column_stack([c.cum for c in controls]) @ lam
    cum = np.clip(np.maximum.accumulate(cum), 0.0, 1.0)
    cum[-1] = 1.0
    return DiscreteCDF(support, cum)


def average_weights(per_period) -> np.ndarray:
    lam = np.mean([w.weights for w in per_period], axis=0)
    lam = np.maximum(lam, 0.0)
    return lam / lam.sum()


@dataclass(frozen=True, eq=False)
class DscFit:
    spec: FitSpec
    per_period_weights: dict
    averaged_weights: SimplexWeights
    observed: dict
    counterfactuals: dict
    effects: dict
    diagnostics: dict
    pre_objectives: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.spec.outcome_kind

    @property
    def converged(self) -> bool:
        return all(w.converged for w in self.per_period_weights.values())

    @property
    def degenerate(self) -> bool:
        return any(w.degenerate for w in self.per_period_weights.values())

    def axis(self) -> np.ndarray:
        """Grid points (continuous) or support values (ordinal/share)."""
        first = next(iter(self.observed.values()))
        return first.grid.points if isinstance(first, EmpiricalQuantile) else first.support

    def to_dict(self) -> dict:
        donors = list(self.spec.donors)

        def arr(d):
            return (d.values if isinstance(d, EmpiricalQuantile) else d.cum).tolist()

        return {
            "spec": self.spec.to_dict(),
            "axis": self.axis().tolist(),
            "axis_kind": "quantile" if self.kind == "continuous" else "support",
            "averaged_weights": self.averaged_weights.to_dict(donors),
            "per_period_weights": {str(t): w.to_dict(donors) for t, w in self.per_period_weights.items()},
            "pre_period_objectives": {str(t): float(v) for t, v in self.pre_objectives.items()},
            "periods": {
                str(t): {
                    "phase": "pre" if t in self.spec.pre_periods else "post",
                    "observed": arr(self.observed[t]),
                    "counterfactual": arr(self.counterfactuals[t]),
                    "effect": self.effects[t].tolist(),
                }
                for t in self.spec.periods
            },
            "diagnostics": {str(t): g.to_dict() for t, g in self.diagnostics.items()},
            "converged": self.converged,
            "degenerate": self.degenerate,
        }


def _solve_period(kind, dists_t, spec, cfg):
    target, controls = dists_t[0], dists_t[1:]
    if kind == "continuous":
        return solve_quantile_weights(target, controls, cfg, spec.q_min, spec.q_max)
    return solve_cdf_weights(target, controls, cfg)


def _objective(kind, lam, dists_t, spec):
    if kind == "continuous":
        return quantile_objective(lam, dists_t[0], dists_t[1:], spec.q_min, spec.q_max)
    return cdf_objective(lam, dists_t[0], dists_t[1:])


def fit_distributions(
    cells: CellDistributions,
    spec: FitSpec,
    cfg: SolverConfig | None = None,
    threads: int = 1,
    diagnose: bool = True,
) -> DscFit:
    """Run the fit on precomputed distributions (see :func:`build_distributions`)."""
    cfg = cfg or SolverConfig()
    kind = cells.kind
    pre = list(spec.pre_periods)

    def solve(t):
        return _solve_period(kind, cells.dists[t], spec, cfg)

    if threads > 1 and len(pre) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solved = list(pool.map(solve, pre))
    else:
        solved = [solve(t) for t in pre]
    per_period = dict(zip(pre, solved))

    lam = average_weights(solved)
    pre_obj = {t: _objective(kind, lam, cells.dists[t], spec) for t in pre}
    averaged = SimplexWeights(
        lam,
        float(np.mean(list(pre_obj.values()))),
        iterations=sum(w.iterations for w in solved),
        converged=all(w.converged for w in solved),
        degenerate=any(w.degenerate for w in solved),
    )

    observed, counterfactuals, effects, diagnostics = {}, {}, {}, {}
    for t in spec.periods:
        dists_t = cells.dists[t]
        observed[t] = dists_t[0]
        if kind == "continuous":
            cf = counterfactual_quantile(lam, dists_t[1:])
            effects[t] = dists_t[0].values - cf.values
        else:
            cf = counterfactual_cdf(lam, dists_t[1:])
            effects[t] = dists_t[0].cum - cf.cum
        counterfactuals[t] = cf
        if diagnose:
            diagnostics[t] = gram_diagnostic(dists_t[1:], spec.q_min, spec.q_max)
    return DscFit(spec, per_period, averaged, observed, counterfactuals, effects, diagnostics, pre_obj)


def fit(panel: MicroPanel, spec: FitSpec, cfg: SolverConfig | None = None, threads: int = 1) -> DscFit:
    """Fit distributional synthetic controls for ``spec.treated`` on ``panel``."""
    return fit_distributions(build_distributions(panel, spec), spec, cfg, threads)


def effect_curve(fit_result: DscFit, period: int) -> np.ndarray:
    """Observed minus counterfactual on the grid (quantiles) or support (CDFs)."""
    if period not in fit_result.effects:
        raise EstimationError(f"period {period} is not part of the fit")
    return fit_result.effects[period]
