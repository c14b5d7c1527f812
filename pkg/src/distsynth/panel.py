"""Micro-panel ingestion.

A :class:`MicroPanel` holds individual outcome observations keyed by
``(unit, period)``. It can be read from a long CSV (one row per observation) or
built from employment-spell records, where the outcome is either the tenure at
the unit at the end of each quarter or the highest seniority title held during
the quarter.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, SchemaError

__all__ = [
    "PanelSchema",
    "MicroPanel",
    "EmploymentSpell",
    "Quarter",
    "SpellOutcomes",
    "TITLE_LEVELS",
    "parse_long_csv",
    "write_long_csv",
    "read_spells_csv",
    "quarter_calendar",
    "compute_tenure",
    "quarterly_title",
    "spells_to_panel",
    "filter_donors",
]

TITLE_LEVELS = {
    "unpaid": 1,
    "training": 2,
    "entry": 3,
    "manager": 4,
    "senior": 5,
    "owner": 6,
    "partner": 7,
    "director": 8,
    "vp": 9,
    "cxo": 10,
}


@dataclass(frozen=True)
class PanelSchema:
    unit: str = "unit"
    period: str = "period"
    outcome: str = "outcome"
    date_format: str = "%Y-%m-%d"

    def check_header(self, header) -> None:
        for col in (self.unit, self.period, self.outcome):
            if col not in header:
                raise SchemaError(f"missing column {col!r} in header {list(header)}")


class MicroPanel:
    """Immutable collection of outcome samples per ``(unit, period)`` cell.

    Periods are integer indices ``1..T``. Cells absent from the data are
    reported by :meth:`missing_cells` rather than dropped.
    """

    def __init__(self, cells: Mapping[tuple[str, int], Iterable[float]], units=None):
        frozen = {}
        for (unit, period), values in cells.items():
            arr = np.array(values, dtype=np.float64).ravel()
            if arr.size == 0:
                continue
            if int(period) < 1:
                raise DataError(f"period indices start at 1, got {period!r} for unit {unit!r}")
            arr.setflags(write=False)
            frozen[(str(unit), int(period))] = arr
        if not frozen:
            raise DataError("no observations")
        self._cells = frozen
        seen = list(dict.fromkeys(u for u, _ in frozen))
        if units is not None:
            units = [str(u) for u in units]
            extra = set(seen) - set(units)
            if extra:
                raise DataError(f"cells reference units not in the registry: {sorted(extra)}")
            seen = units
        self._units = tuple(seen)
        self._n_periods = max(p for _, p in frozen)

    @property
    def units(self) -> tuple[str, ...]:
        return self._units

    @property
    def n_periods(self) -> int:
        return self._n_periods

    @property
    def periods(self) -> range:
        return range(1, self._n_periods + 1)

    def has(self, unit: str, period: int) -> bool:
        return (unit, period) in self._cells

    def cell(self, unit: str, period: int) -> np.ndarray:
        try:
            return self._cells[(unit, period)]
        except KeyError:
            raise DataError(f"no observations for unit {unit!r} in period {period}") from None

    def count(self, unit: str, period: int) -> int:
        arr = self._cells.get((unit, period))
        return 0 if arr is None else arr.size

    def counts(self) -> dict[str, dict[int, int]]:
        return {u: {p: self.count(u, p) for p in self.periods} for u in self._units}

    def total_count(self, unit: str) -> int:
        return sum(self.count(unit, p) for p in self.periods)

    def missing_cells(self) -> list[tuple[str, int]]:
        return [(u, p) for u in self._units for p in self.periods if (u, p) not in self._cells]

    def subset(self, units) -> "MicroPanel":
        units = list(units)
        keep = set(units)
        return MicroPanel({k: v for k, v in self._cells.items() if k[0] in keep}, units=units)

    def items(self):
        for u in self._units:
            for p in self.periods:
                arr = self._cells.get((u, p))
                if arr is not None:
                    yield (u, p), arr

    def __eq__(self, other) -> bool:
        if not isinstance(other, MicroPanel):
            return NotImplemented
        return (
            self._units == other._units
            and self._cells.keys() == other._cells.keys()
            and all(np.array_equal(v, other._cells[k]) for k, v in self._cells.items())
        )

    def __repr__(self) -> str:
        n = sum(v.size for v in self._cells.values())
        return f"MicroPanel(units={len(self._units)}, periods={self._n_periods}, observations={n})"


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return open(source, newline="", encoding="utf-8")
    if hasattr(source, "read"):
        head = source.read()
        if isinstance(head, bytes):
            head = head.decode("utf-8")
        return io.StringIO(head)
    return open(source, newline="", encoding="utf-8")


def parse_long_csv(source, schema: PanelSchema | None = None) -> MicroPanel:
    """Read a long-format CSV (path, bytes or file object) into a panel.

    Raises :class:`SchemaError` for missing columns and :class:`DataError`
    naming the line for unparseable cells.
    """
    schema = schema or PanelSchema()
    with _open_text(source) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError("empty file: no header row")
        schema.check_header(reader.fieldnames)
        cells: dict[tuple[str, int], list[float]] = defaultdict(list)
        for row in reader:
            line = reader.line_num
            unit = row[schema.unit]
            if unit is None or unit == "":
                raise DataError(f"line {line}: empty unit")
            try:
                period = int(row[schema.period])
            except (TypeError, ValueError):
                raise DataError(f"line {line}: cannot parse period {row[schema.period]!r}") from None
            try:
                value = float(row[schema.outcome])
            except (TypeError, ValueError):
                raise DataError(f"line {line}: cannot parse outcome {row[schema.outcome]!r}") from None
            if not np.isfinite(value):
                raise DataError(f"line {line}: non-finite outcome {row[schema.outcome]!r}")
            if period < 1:
                raise DataError(f"line {line}: period must be >= 1, got {period}")
            cells[(unit, period)].append(value)
    if not cells:
        raise DataError("no observations")
    return MicroPanel(cells)


def write_long_csv(panel: MicroPanel, dest, schema: PanelSchema | None = None) -> None:
    schema = schema or PanelSchema()
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([schema.unit, schema.period, schema.outcome])
        for (unit, period), values in panel.items():
            for v in values:
                writer.writerow([unit, period, repr(float(v))])
    finally:
        if own:
            fh.close()


@dataclass(frozen=True)
class EmploymentSpell:
    person_id: str
    unit_id: str
    start_date: date
    end_date: date | None = None
    title_level: int | None = None

    def __post_init__(self):
        if self.end_date is not None and self.end_date < self.start_date:
            raise DataError(
                f"spell of {self.person_id!r} at {self.unit_id!r} ends before it starts"
            )
        if self.title_level is not None and not 1 <= self.title_level <= 10:
            raise DataError(f"title level {self.title_level} outside 1..10")


@dataclass(frozen=True)
class Quarter:
    start: date
    end: date
    label: str = ""

    @classmethod
    def from_label(cls, label: str) -> "Quarter":
        """Parse ``2022Q3``-style labels."""
        try:
            year, q = label.upper().split("Q")
            year, q = int(year), int(q)
        except ValueError:
            raise DataError(f"bad quarter label {label!r}, expected e.g. 2022Q3") from None
        if not 1 <= q <= 4:
            raise DataError(f"bad quarter label {label!r}")
        start = date(year, 3 * q - 2, 1)
        end = date(year + 1, 1, 1) if q == 4 else date(year, 3 * q + 1, 1)
        return cls(start, date.fromordinal(end.toordinal() - 1), f"{year}Q{q}")

    def next(self) -> "Quarter":
        y, q = int(self.label[:4]), int(self.label[-1])
        return Quarter.from_label(f"{y + 1}Q1" if q == 4 else f"{y}Q{q + 1}")


def quarter_calendar(first: str, last: str) -> list[Quarter]:
    out = [Quarter.from_label(first)]
    stop = Quarter.from_label(last)
    if stop.start < out[0].start:
        raise DataError(f"quarter range {first}..{last} is empty")
    while out[-1].start < stop.start:
        out.append(out[-1].next())
    return out


def _parse_date(text: str, line: int, fmt: str) -> date:
    from datetime import datetime

    try:
        return datetime.strptime(text.strip(), fmt).date()
    except ValueError:
        raise DataError(f"line {line}: cannot parse date {text!r}") from None


def read_spells_csv(source, date_format: str = "%Y-%m-%d") -> list[EmploymentSpell]:
    """Read spell records: person_id, unit_id, start_date, end_date, title_level.

    Empty ``end_date`` means the spell is ongoing; empty ``title_level`` means
    untitled. ``title_level`` may also be one of the names in ``TITLE_LEVELS``.
    """
    required = ("person_id", "unit_id", "start_date", "end_date", "title_level")
    spells = []
    with _open_text(source) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError("empty file: no header row")
        for col in required:
            if col not in reader.fieldnames:
                raise SchemaError(f"missing column {col!r} in header {reader.fieldnames}")
        for row in reader:
            line = reader.line_num
            start = _parse_date(row["start_date"], line, date_format)
            end_txt = (row["end_date"] or "").strip()
            end = _parse_date(end_txt, line, date_format) if end_txt else None
            title_txt = (row["title_level"] or "").strip()
            title = None
            if title_txt:
                if title_txt.lower() in TITLE_LEVELS:
                    title = TITLE_LEVELS[title_txt.lower()]
                else:
                    try:
                        title = int(title_txt)
                    except ValueError:
                        raise DataError(f"line {line}: cannot parse title level {title_txt!r}") from None
            try:
                spells.append(EmploymentSpell(row["person_id"], row["unit_id"], start, end, title))
            except DataError as exc:
                raise DataError(f"line {line}: {exc}") from None
    if not spells:
        raise DataError("no observations")
    return spells


@dataclass
class SpellOutcomes:
    """Per person-unit outcomes for one quarter plus a tally of skipped spells."""

    values: dict[tuple[str, str], float] = field(default_factory=dict)
    excluded_future: int = 0

    def by_unit(self) -> dict[str, list[float]]:
        out: dict[str, list[float]] = defaultdict(list)
        for (_, unit), v in sorted(self.values.items()):
            out[unit].append(v)
        return dict(out)


def _group(spells):
    groups = defaultdict(list)
    for s in spells:
        groups[(s.person_id, s.unit_id)].append(s)
    return groups


def compute_tenure(spells, quarter_end: date, quarter_start: date | None = None) -> SpellOutcomes:
    """Tenure in days at ``quarter_end`` for every person-unit pair.

    An episode still running at ``quarter_end`` (no end date, or ending after
    it) counts ``quarter_end - start``; an episode that has ended counts
    ``end - start``. Episodes of the same person at the same unit are summed.
    Pairs whose latest episode ended before ``quarter_start`` are skipped, and
    episodes starting after ``quarter_end`` are excluded and tallied.
    """
    if quarter_start is None:
        quarter_start = date(quarter_end.year, 3 * ((quarter_end.month - 1) // 3) + 1, 1)
    out = SpellOutcomes()
    for key, episodes in _group(spells).items():
        started = [s for s in episodes if s.start_date <= quarter_end]
        out.excluded_future += len(episodes) - len(started)
        if not started:
            continue
        if all(s.end_date is not None and s.end_date < quarter_start for s in started):
            continue
        total = 0
        for s in started:
            if s.end_date is None or s.end_date > quarter_end:
                days = (quarter_end - s.start_date).days
            else:
                days = (s.end_date - s.start_date).days
            if days < 0:
                raise AssertionError(f"negative tenure for {key}: {days}")
            total += days
        out.values[key] = float(total)
    return out


def quarterly_title(spells, quarter: Quarter) -> SpellOutcomes:
    """Highest title level held by each person at each unit during ``quarter``."""
    out = SpellOutcomes()
    for key, episodes in _group(spells).items():
        levels = [
            s.title_level
            for s in episodes
            if s.title_level is not None
            and s.start_date <= quarter.end
            and (s.end_date is None or s.end_date >= quarter.start)
        ]
        if levels:
            out.values[key] = float(max(levels))
    return out


def spells_to_panel(spells, quarters, outcome: str = "tenure") -> tuple[MicroPanel, dict]:
    """Build a panel with one period per quarter (period ``i`` is ``quarters[i-1]``).

    Returns the panel and a diagnostics dict.
    """
    spells = list(spells)
    if outcome not in ("tenure", "title"):
        raise ValueError(f"outcome must be 'tenure' or 'title', got {outcome!r}")
    cells = {}
    excluded = 0
    units = list(dict.fromkeys(s.unit_id for s in spells))
    for period, q in enumerate(quarters, start=1):
        res = compute_tenure(spells, q.end, q.start) if outcome == "tenure" else quarterly_title(spells, q)
        excluded += res.excluded_future
        for unit, values in res.by_unit().items():
            cells[(unit, period)] = values
    if not cells:
        raise DataError("no observations in the requested quarters")
    panel = MicroPanel(cells, units=[u for u in units if any(k[0] == u for k in cells)])
    diagnostics = {
        "excluded_future_spells": excluded,
        "quarters": [q.label or q.start.isoformat() for q in quarters],
        "missing_cells": [list(c) for c in panel.missing_cells()],
    }
    return panel, diagnostics


def filter_donors(panel: MicroPanel, treated: str, min_share: float, include=None) -> tuple[MicroPanel, list[str]]:
    """Keep donors with at least ``min_share`` of the treated unit's observation count.

    ``include`` optionally restricts the candidate donors to an explicit list.
    Returns the filtered panel (treated first) and the dropped donors.
    """
    if not 0.0 <= min_share <= 1.0:
        raise ValueError(f"min_share must lie in [0, 1], got {min_share}")
    if treated not in panel.units:
        raise DataError(f"treated unit {treated!r} not in panel")
    candidates = [u for u in panel.units if u != treated]
    if include is not None:
        allowed = set(include)
        candidates = [u for u in candidates if u in allowed]
    threshold = min_share * panel.total_count(treated)
    kept = [u for u in candidates if panel.total_count(u) >= threshold]
    dropped = [u for u in panel.units if u != treated and u not in kept]
    if len(kept) < 2:
        raise DataError(f"insufficient donor pool: {len(kept)} donor(s) survive")
    return panel.subset([treated] + kept), dropped
