"""Command-line front end.

Commands: ingest, estimate, permute, bootstrap, simulate, diagnose. Every
command writes plot-ready JSON/CSV into ``--out-dir``. A JSON ``--config`` file
may supply any flag (keys are the long flag names with underscores); flags on
the command line win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .bootstrap import RESAMPLING_MODES, BootstrapConfig, bootstrap_bands
from .distribution import DEFAULT_GRID_SIZE, gram_diagnostic
from .errors import DataError, EstimationError
from .estimator import OUTCOME_KINDS, FitSpec, build_distributions, fit
from .inference import permutation_test
from .panel import (
    MicroPanel,
    PanelSchema,
    filter_donors,
    parse_long_csv,
    quarter_calendar,
    read_spells_csv,
    spells_to_panel,
    write_long_csv,
)
from .simulation import PRESETS, SimSpec, generate, preset
from .solver import SolverConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_periods(text) -> tuple[int, ...]:
    """``"1-4"``, ``"1,2,5"`` or a list of ints."""
    if text is None:
        return ()
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


# ---------------------------------------------------------------------------
# argument wiring

_DEFAULTS = {
    "out_dir": ".",
    "seed": 0,
    "threads": os.cpu_count() or 1,
    "grid_size": DEFAULT_GRID_SIZE,
    "q_min": 0.0,
    "q_max": 1.0,
    "draws": 1000,
    "alpha": 0.05,
    "mode": "with-replacement",
    "max_iterations": 100_000,
    "tolerance": 1e-12,
    "unit_column": "unit",
    "period_column": "period",
    "outcome_column": "outcome",
    "format": "spells",
    "min_share": 0.0,
}


def _common(p, outcome_choices=OUTCOME_KINDS):
    p.add_argument("--input", help="input CSV")
    p.add_argument("--config", help="JSON file supplying any of these flags")
    p.add_argument("--out-dir", help="directory for outputs (created if missing)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--grid-size", type=int, help="quantile grid size G")
    p.add_argument("--q-min", type=float)
    p.add_argument("--q-max", type=float)
    p.add_argument("--outcome", choices=outcome_choices)
    p.add_argument("--treated", help="treated unit id")
    p.add_argument("--donors-file", help="text file with one donor unit id per line")
    p.add_argument("--pre-periods", help='pre-treatment periods, e.g. "1-4" or "1,2,3"')
    p.add_argument("--post-periods", help='post-treatment periods, e.g. "5-6"')
    p.add_argument("--draws", type=int, help="bootstrap draws B")
    p.add_argument("--alpha", type=float, help="significance level")
    p.add_argument("--mode", choices=RESAMPLING_MODES, help="bootstrap resampling mode")
    p.add_argument("--unit-column")
    p.add_argument("--period-column")
    p.add_argument("--outcome-column")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--tolerance", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distsynth", description="Distributional synthetic controls")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="spell or long CSV -> normalised long panel + summary")
    _common(p, outcome_choices=("tenure", "title"))
    p.add_argument("--format", choices=("spells", "long"))
    p.add_argument("--quarters", help="quarter range for spell input, e.g. 2021Q1:2022Q4")
    p.add_argument("--min-share", type=float, help="drop donors below this share of the treated count")

    p = sub.add_parser("estimate", help="fit weights, counterfactuals and effect curves")
    _common(p)

    p = sub.add_parser("permute", help="placebo permutation test")
    _common(p)
    p.add_argument("--y-min", type=float, help="lower support bound for ordinal distances")
    p.add_argument("--y-max", type=float, help="upper support bound for ordinal distances")
    p.add_argument("--include-treated-in-placebo-pools", action="store_true", default=None)

    p = sub.add_parser("bootstrap", help="bootstrap uniform confidence bands")
    _common(p)
    p.add_argument("--resample-treated", action="store_true", default=None)
    p.add_argument("--pointwise", action="store_true", default=None,
                   help="also emit pointwise percentile bands")

    p = sub.add_parser("simulate", help="draw a synthetic panel with known truth")
    _common(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--spec", help="SimSpec JSON file")
    p.add_argument("--n", type=int, help="observations per cell")

    p = sub.add_parser("diagnose", help="Gram matrix conditioning per period")
    _common(p)
    return parser


def _resolve(args) -> argparse.Namespace:
    merged = dict(_DEFAULTS)
    explicit = set()
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        merged.update(cfg)
        explicit.update(cfg)
    for k, v in vars(args).items():
        if v is not None:
            merged[k] = v
            explicit.add(k)
        else:
            merged.setdefault(k, None)
    merged["explicit"] = frozenset(explicit)
    return argparse.Namespace(**merged)


# ---------------------------------------------------------------------------
# helpers

def _schema(a) -> PanelSchema:
    return PanelSchema(a.unit_column, a.period_column, a.outcome_column)


def _out_dir(a) -> Path:
    path = Path(a.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dump_json(obj, path: Path):
    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return [clean(v) for v in o.tolist()]
        if isinstance(o, (float, np.floating)):
            return float(o) if math.isfinite(o) else None
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o

    path.write_text(json.dumps(clean(obj), indent=2) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def _load_panel(a) -> MicroPanel:
    if not a.input:
        raise UsageError("--input is required")
    if not os.path.exists(a.input):
        raise DataError(f"input file not found: {a.input}")
    return parse_long_csv(a.input, _schema(a))


def _read_donors(path) -> list[str]:
    if not os.path.exists(path):
        raise DataError(f"donors file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


def _fit_spec(a, panel: MicroPanel) -> FitSpec:
    if not a.treated:
        raise UsageError("--treated is required")
    if a.treated not in panel.units:
        raise DataError(f"treated unit {a.treated!r} not in panel")
    pre = parse_periods(a.pre_periods)
    post = parse_periods(a.post_periods)
    if not pre:
        raise UsageError("--pre-periods is required")
    if a.donors_file:
        donors = _read_donors(a.donors_file)
    elif getattr(a, "donors", None):
        donors = list(a.donors)
    else:
        donors = [u for u in panel.units if u != a.treated]
    for d in donors:
        if d not in panel.units:
            raise DataError(f"donor {d!r} not in panel")
    try:
        return FitSpec(
            treated=a.treated,
            donors=tuple(donors),
            pre_periods=pre,
            post_periods=post,
            outcome_kind=a.outcome or "continuous",
            grid_size=int(a.grid_size),
            q_min=float(a.q_min),
            q_max=float(a.q_max),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _solver(a) -> SolverConfig:
    return SolverConfig(int(a.max_iterations), float(a.tolerance))


# ---------------------------------------------------------------------------
# commands

def _turnover(spells, quarters) -> dict:
    out: dict = {}
    for t, q in enumerate(quarters, start=1):
        present, left = {}, {}
        for s in spells:
            if s.start_date <= q.end and (s.end_date is None or s.end_date >= q.start):
                present.setdefault(s.unit_id, set()).add(s.person_id)
                if s.end_date is not None and q.start <= s.end_date <= q.end:
                    left.setdefault(s.unit_id, set()).add(s.person_id)
        for unit, people in present.items():
            out.setdefault(unit, {})[str(t)] = len(left.get(unit, ())) / len(people)
    return out


def _summary(panel: MicroPanel, outcome: str, extra: dict) -> dict:
    units = {}
    for u in panel.units:
        units[u] = {
            "total": panel.total_count(u),
            "counts": {str(t): panel.count(u, t) for t in panel.periods},
            "mean": {str(t): float(np.mean(panel.cell(u, t))) for t in panel.periods if panel.has(u, t)},
            "median": {str(t): float(np.median(panel.cell(u, t))) for t in panel.periods if panel.has(u, t)},
        }
    return {
        "outcome": outcome,
        "n_units": len(panel.units),
        "n_periods": panel.n_periods,
        "units": units,
        "missing_cells": [list(c) for c in panel.missing_cells()],
        **extra,
    }


def cmd_ingest(a) -> int:
    if not a.input:
        raise UsageError("--input is required")
    if not os.path.exists(a.input):
        raise DataError(f"input file not found: {a.input}")
    extra: dict = {}
    outcome = a.outcome or "tenure"
    if a.format == "spells":
        if not a.quarters or ":" not in a.quarters:
            raise UsageError("--quarters FIRST:LAST is required for spell input")
        first, last = a.quarters.split(":", 1)
        spells = read_spells_csv(a.input)
        quarters = quarter_calendar(first, last)
        panel, diag = spells_to_panel(spells, quarters, outcome)
        extra["diagnostics"] = diag
        extra["turnover"] = _turnover(spells, quarters)
        extra["outcome_kind"] = "continuous" if outcome == "tenure" else "ordinal"
    else:
        panel = _load_panel(a)
        outcome = "outcome"
    if a.treated:
        include = _read_donors(a.donors_file) if a.donors_file else None
        panel, dropped = filter_donors(panel, a.treated, float(a.min_share), include)
        extra["treated"] = a.treated
        extra["dropped_donors"] = dropped
    out = _out_dir(a)
    write_long_csv(panel, out / "panel.csv", PanelSchema())
    _dump_json(_summary(panel, outcome, extra), out / "summary.json")
    print(f"wrote {out / 'panel.csv'} ({len(panel.units)} units, {panel.n_periods} periods)")
    return EXIT_OK


def cmd_estimate(a) -> int:
    panel = _load_panel(a)
    spec = _fit_spec(a, panel)
    result = fit(panel, spec, _solver(a), threads=int(a.threads))
    out = _out_dir(a)
    _dump_json(result.to_dict(), out / "fit.json")
    effects = out / "effects"
    effects.mkdir(exist_ok=True)
    axis = result.axis()
    for t in spec.periods:
        obs, cf = result.observed[t], result.counterfactuals[t]
        o = obs.values if spec.outcome_kind == "continuous" else obs.cum
        c = cf.values if spec.outcome_kind == "continuous" else cf.cum
        _write_csv(effects / f"effect_t{t}.csv", ["axis", "observed", "counterfactual", "effect"],
                   [axis, o, c, result.effects[t]])
    w = ", ".join(f"{d}={v:.4f}" for d, v in zip(spec.donors, result.averaged_weights.rounded()))
    print(f"averaged weights: {w}")
    if not result.converged:
        print("warning: solver did not converge in some period", file=sys.stderr)
    return EXIT_OK


def cmd_permute(a) -> int:
    panel = _load_panel(a)
    spec = _fit_spec(a, panel)
    res = permutation_test(
        panel, spec, _solver(a), float(a.q_min), float(a.q_max),
        a.y_min, a.y_max,
        include_treated_in_placebo_pools=bool(a.include_treated_in_placebo_pools),
        threads=int(a.threads),
    )
    _dump_json(res.to_dict(), _out_dir(a) / "permutation.json")
    print(f"p-value: {res.p_value:.6g}")
    return EXIT_OK


def cmd_bootstrap(a) -> int:
    panel = _load_panel(a)
    spec = _fit_spec(a, panel)
    try:
        cfg = BootstrapConfig(
            draws=int(a.draws), alpha=float(a.alpha), seed=int(a.seed), mode=a.mode,
            resample_treated=bool(a.resample_treated),
            pointwise=bool(a.pointwise),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bands = bootstrap_bands(panel, spec, _solver(a), cfg, threads=int(a.threads))
    out = _out_dir(a)
    _dump_json(bands.to_dict(), out / "bands.json")
    band_dir = out / "bands"
    band_dir.mkdir(exist_ok=True)
    for name, band in bands.objects.items():
        header = ["axis", "center", "lower", "upper"]
        cols = [band.axis, band.center, band.lower, band.upper]
        if band.pointwise_lower is not None:
            header += ["pointwise_lower", "pointwise_upper"]
            cols += [band.pointwise_lower, band.pointwise_upper]
        _write_csv(band_dir / f"{name}.csv", header, cols)
    print(f"bootstrap: {bands.draws_effective} draws kept, {bands.discarded} discarded")
    return EXIT_OK


def cmd_simulate(a) -> int:
    if a.spec:
        try:
            sim = SimSpec.from_json(Path(a.spec).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read SimSpec: {exc}") from None
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"invalid SimSpec: {exc}") from None
        if "seed" in a.explicit:
            sim = sim.replace(seed=int(a.seed))
        if a.n:
            sim = sim.replace(n=int(a.n))
    elif a.preset:
        overrides = {"n": int(a.n)} if a.n else {}
        sim = preset(a.preset, int(a.seed), **overrides)
    else:
        raise UsageError("give --preset or --spec")
    res = generate(sim)
    out = _out_dir(a)
    write_long_csv(res.panel, out / "panel.csv")
    (out / "truth.json").write_text(res.truth_json() + "\n", encoding="utf-8")
    (out / "simspec.json").write_text(sim.to_json() + "\n", encoding="utf-8")
    print(f"wrote {out / 'panel.csv'}")
    return EXIT_OK


def cmd_diagnose(a) -> int:
    panel = _load_panel(a)
    spec = _fit_spec(a, panel)
    cells = build_distributions(panel, spec)
    report = {"treated": spec.treated, "donors": list(spec.donors), "periods": {}}
    for t in spec.periods:
        g = gram_diagnostic(cells.dists[t][1:], spec.q_min, spec.q_max)
        report["periods"][str(t)] = g.to_dict()
    report["any_warning"] = any(p["warning"] for p in report["periods"].values())
    _dump_json(report, _out_dir(a) / "diagnostics.json")
    worst = min(p["min_eigenvalue"] for p in report["periods"].values())
    print(f"smallest Gram eigenvalue: {worst:.6g}" + (" (degenerate)" if report["any_warning"] else ""))
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "estimate": cmd_estimate,
    "permute": cmd_permute,
    "bootstrap": cmd_bootstrap,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        a = _resolve(args)
        return COMMANDS[a.command](a)
    except UsageError as exc:
        print(f"distsynth {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"distsynth {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"distsynth {args.command}: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
