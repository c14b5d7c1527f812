"""Placebo permutation test on the ratio of post- to pre-treatment fit errors.

Every unit in turn is treated as the target and fit from the remaining donors.
Its statistic is ``R(post) / R(pre)`` where ``R`` is the root mean square over
periods of the distance between the observed and the synthetic distribution.
The p-value is the share of units whose ratio is at least the treated one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distribution import l1_cdf_distance, wasserstein2
from .errors import DataError, DistSynthError
from .estimator import DscFit, FitSpec, build_distributions, fit_distributions
from .panel import MicroPanel
from .solver import SolverConfig

__all__ = [
    "PermutationResult",
    "rmse_distance",
    "permutation_pvalue",
    "period_distances",
    "fit_ratio",
    "permutation_test",
]

# pre-period RMSE at or below this multiple of the outcome scale counts as a perfect fit
PERFECT_FIT_RTOL = 1e-10


def rmse_distance(distances) -> float:
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size == 0:
        raise DataError("RMSE over an empty period range")
    return float(np.sqrt(np.mean(d * d)))


def permutation_pvalue(ratios) -> float:
    """Share of ratios (treated first) that are at least the treated ratio.

    ``+inf >= +inf`` holds, so perfect-fit units tie with each other.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if r.size == 0:
        raise DataError("no ratios")
    if np.any(np.isnan(r)):
        raise DataError("ratios contain NaN")
    return float(np.count_nonzero(r >= r[0]) / r.size)


def period_distances(result: DscFit, q_min=0.0, q_max=1.0, y_min=None, y_max=None) -> dict[int, float]:
    """Distance between observed and counterfactual distribution in every period.

    Continuous fits use the 2-Wasserstein distance on ``[q_min, q_max]``;
    ordinal and share fits use the L1 CDF distance on ``[y_min, y_max]``.
    """
    out = {}
    for t in result.spec.periods:
        obs, cf = result.observed[t], result.counterfactuals[t]
        if result.kind == "continuous":
            out[t] = wasserstein2(obs, cf, q_min, q_max)
        else:
            out[t] = l1_cdf_distance(obs, cf, y_min, y_max)
    return out


def _outcome_scale(result: DscFit) -> float:
    if result.kind == "continuous":
        return max(1.0, max(float(np.max(np.abs(d.values))) for d in result.observed.values()))
    return max(1.0, float(np.ptp(result.axis())))


def fit_ratio(result: DscFit, q_min=0.0, q_max=1.0, y_min=None, y_max=None) -> dict:
    d = period_distances(result, q_min, q_max, y_min, y_max)
    pre = rmse_distance([d[t] for t in result.spec.pre_periods])
    post = rmse_distance([d[t] for t in result.spec.post_periods])
    perfect = pre <= PERFECT_FIT_RTOL * _outcome_scale(result)
    return {
        "pre_rmse": pre,
        "post_rmse": post,
        "ratio": math.inf if perfect else post / pre,
        "perfect_pre_fit": perfect,
    }


@dataclass(frozen=True, eq=False)
class PermutationResult:
    units: tuple[str, ...]
    ratios: np.ndarray
    pre_rmse: np.ndarray
    post_rmse: np.ndarray
    flags: tuple[tuple[str, ...], ...]
    p_value: float
    q_range: tuple[float, float]
    support_range: tuple[float | None, float | None] = (None, None)
    failed: dict = field(default_factory=dict)
    include_treated_in_placebo_pools: bool = False

    @property
    def n_donors(self) -> int:
        return len(self.units) - 1

    def to_dict(self) -> dict:
        def num(x):
            return None if not math.isfinite(x) else float(x)

        return {
            "p_value": float(self.p_value),
            "treated": self.units[0],
            "n_units": len(self.units),
            "range": {"q_min": self.q_range[0], "q_max": self.q_range[1],
                      "y_min": self.support_range[0], "y_max": self.support_range[1]},
            "pool": {
                "placebo_pools_include_treated": self.include_treated_in_placebo_pools,
                "description": "each placebo target is fit from the other donors"
                + ("" if not self.include_treated_in_placebo_pools else " and the treated unit"),
            },
            "ratios": [
                {
                    "unit": u,
                    "role": "treated" if i == 0 else "placebo",
                    "pre_rmse": num(self.pre_rmse[i]),
                    "post_rmse": num(self.post_rmse[i]),
                    "ratio": num(self.ratios[i]),
                    "ratio_infinite": bool(math.isinf(self.ratios[i])),
                    "flags": list(self.flags[i]),
                }
                for i, u in enumerate(self.units)
            ],
            "failed_units": {u: msg for u, msg in self.failed.items()},
        }


def permutation_test(
    panel: MicroPanel,
    spec: FitSpec,
    cfg: SolverConfig | None = None,
    q_min: float = 0.0,
    q_max: float = 1.0,
    y_min: float | None = None,
    y_max: float | None = None,
    include_treated_in_placebo_pools: bool = False,
    threads: int = 1,
) -> PermutationResult:
    if len(spec.donors) < 2:
        raise DataError("the permutation test needs at least two donors")
    if not spec.post_periods:
        raise DataError("the permutation test needs post-treatment periods")
    cfg = cfg or SolverConfig()
    # one shared set of distributions so every target sees identical estimates
    cells = build_distributions(panel, spec)
    index = {u: i for i, u in enumerate(spec.units)}

    targets = [(spec.treated, list(spec.donors))]
    for d in spec.donors:
        pool = [u for u in spec.donors if u != d]
        if include_treated_in_placebo_pools:
            pool = [spec.treated] + pool
        targets.append((d, pool))

    def run(target):
        unit, pool = target
        sub_spec = spec.with_target(unit, pool)
        cols = [index[unit]] + [index[u] for u in pool]
        sub_cells = type(cells)(cells.kind, {t: [cells.dists[t][i] for i in cols] for t in spec.periods},
                                grid=cells.grid, support=cells.support)
        try:
            result = fit_distributions(sub_cells, sub_spec, cfg, diagnose=False)
            return fit_ratio(result, q_min, q_max, y_min, y_max), result
        except DistSynthError as exc:
            return exc, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, targets))
    else:
        outcomes = [run(t) for t in targets]

    first, _ = outcomes[0]
    if isinstance(first, Exception):
        raise first
    units, ratios, pre, post, flags, failed = [], [], [], [], [], {}
    for (unit, _), (stats, result) in zip(targets, outcomes):
        if isinstance(stats, Exception):
            failed[unit] = str(stats)
            continue
        f = []
        if stats["perfect_pre_fit"]:
            f.append("perfect_pre_fit")
        if not result.converged:
            f.append("not_converged")
        if result.degenerate:
            f.append("degenerate")
        units.append(unit)
        ratios.append(stats["ratio"])
        pre.append(stats["pre_rmse"])
        post.append(stats["post_rmse"])
        flags.append(tuple(f))
    ratios = np.array(ratios)
    return PermutationResult(
        units=tuple(units),
        ratios=ratios,
        pre_rmse=np.array(pre),
        post_rmse=np.array(post),
        flags=tuple(flags),
        p_value=permutation_pvalue(ratios),
        q_range=(float(q_min), float(q_max)),
        support_range=(y_min, y_max),
        failed=failed,
        include_treated_in_placebo_pools=include_treated_in_placebo_pools,
    )
