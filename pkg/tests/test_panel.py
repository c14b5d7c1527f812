import io
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distsynth.errors import DataError, SchemaError
from distsynth.panel import (
    EmploymentSpell,
    MicroPanel,
    PanelSchema,
    Quarter,
    compute_tenure,
    filter_donors,
    parse_long_csv,
    quarter_calendar,
    quarterly_title,
    read_spells_csv,
    spells_to_panel,
    write_long_csv,
)


def d(s):
    return date.fromisoformat(s)


# ---------------------------------------------------------------- long CSV

def test_parse_counts():
    p = parse_long_csv(b"unit,period,outcome\nA,1,1.0\nA,1,2.0\nB,1,5.0\n")
    assert p.count("A", 1) == 2 and p.count("B", 1) == 1
    assert p.units == ("A", "B")
    np.testing.assert_array_equal(p.cell("A", 1), [1.0, 2.0])


def test_parse_header_only():
    with pytest.raises(DataError, match="no observations"):
        parse_long_csv(b"unit,period,outcome\n")


def test_parse_bad_outcome_names_line():
    with pytest.raises(DataError, match="line 2"):
        parse_long_csv(b"unit,period,outcome\nA,1,abc\n")


def test_parse_missing_column():
    with pytest.raises(SchemaError, match="outcome"):
        parse_long_csv(b"unit,period,value\nA,1,1\n")


def test_parse_custom_schema_and_file_object():
    text = "firm,q,tenure\nX,2,3.5\n"
    p = parse_long_csv(io.StringIO(text), PanelSchema("firm", "q", "tenure"))
    assert p.cell("X", 2)[0] == 3.5
    assert p.missing_cells() == [("X", 1)]


def test_cells_are_read_only():
    p = parse_long_csv(b"unit,period,outcome\nA,1,1.0\n")
    with pytest.raises(ValueError):
        p.cell("A", 1)[0] = 3.0


def test_missing_cell_error():
    p = parse_long_csv(b"unit,period,outcome\nA,1,1.0\nB,2,1.0\n")
    with pytest.raises(DataError, match="period 2"):
        p.cell("A", 2)


cell_values = st.lists(st.floats(-1e9, 1e9, allow_nan=False), min_size=1, max_size=5)


@given(st.dictionaries(st.tuples(st.sampled_from("ABC"), st.integers(1, 3)), cell_values, min_size=1))
def test_round_trip(cells):
    panel = MicroPanel(cells)
    buf = io.StringIO()
    write_long_csv(panel, buf)
    again = parse_long_csv(buf.getvalue().encode())
    # unit order follows first appearance, which write preserves
    assert again == panel


# ---------------------------------------------------------------- tenure

def test_tenure_ongoing():
    s = [EmploymentSpell("p", "A", d("2022-01-01"))]
    assert compute_tenure(s, d("2022-06-30")).values[("p", "A")] == 180.0


def test_tenure_ended_in_quarter():
    s = [EmploymentSpell("p", "A", d("2021-01-01"), d("2021-03-01"))]
    assert compute_tenure(s, d("2021-03-31")).values[("p", "A")] == 59.0


def test_tenure_sums_episodes():
    s = [
        EmploymentSpell("p", "A", d("2020-01-01"), d("2020-01-01") + timedelta(100)),
        EmploymentSpell("p", "A", d("2021-05-01"), d("2021-05-01") + timedelta(50)),
    ]
    assert compute_tenure(s, d("2021-06-30")).values[("p", "A")] == 150.0


def test_tenure_future_spell_excluded_and_tallied():
    s = [EmploymentSpell("p", "A", d("2023-01-01")), EmploymentSpell("q", "A", d("2020-01-01"))]
    out = compute_tenure(s, d("2022-06-30"))
    assert ("p", "A") not in out.values
    assert out.excluded_future == 1


def test_tenure_left_before_quarter_skipped():
    s = [EmploymentSpell("p", "A", d("2020-01-01"), d("2020-05-01"))]
    assert compute_tenure(s, d("2022-06-30")).values == {}


def test_tenure_zero_day_spell_kept():
    s = [EmploymentSpell("p", "A", d("2022-04-10"), d("2022-04-10"))]
    assert compute_tenure(s, d("2022-06-30")).values[("p", "A")] == 0.0


def test_spell_end_before_start_rejected():
    with pytest.raises(DataError):
        EmploymentSpell("p", "A", d("2022-04-10"), d("2022-04-01"))


@given(st.integers(0, 3000), st.integers(0, 400), st.integers(0, 400))
def test_tenure_monotone_for_ongoing(offset, a, b):
    start = d("2015-01-01") + timedelta(offset)
    s = [EmploymentSpell("p", "A", start)]
    e1 = start + timedelta(min(a, b))
    e2 = start + timedelta(max(a, b))
    t1 = compute_tenure(s, e1, e1).values[("p", "A")]
    t2 = compute_tenure(s, e2, e2).values[("p", "A")]
    assert 0 <= t1 <= t2


@given(st.integers(1, 200), st.integers(1, 200), st.integers(1, 200))
def test_tenure_disjoint_episodes_add(l1, gap, l2):
    s1 = date(2018, 1, 1)
    e1 = s1 + timedelta(l1)
    s2 = e1 + timedelta(gap)
    e2 = s2 + timedelta(l2)
    q_end = e2 + timedelta(1)
    both = compute_tenure([EmploymentSpell("p", "A", s1, e1), EmploymentSpell("p", "A", s2, e2)], q_end, s1)
    assert both.values[("p", "A")] == l1 + l2


# ---------------------------------------------------------------- titles

Q2 = Quarter.from_label("2022Q2")


def test_title_max_of_overlapping():
    s = [
        EmploymentSpell("p", "A", d("2021-01-01"), d("2022-05-01"), 3),
        EmploymentSpell("p", "A", d("2022-05-02"), None, 5),
    ]
    assert quarterly_title(s, Q2).values[("p", "A")] == 5.0


def test_title_single():
    s = [EmploymentSpell("p", "A", d("2022-01-01"), None, 2)]
    assert quarterly_title(s, Q2).values[("p", "A")] == 2.0


def test_title_ends_day_before_quarter():
    s = [EmploymentSpell("p", "A", d("2021-01-01"), d("2022-03-31"), 4)]
    assert quarterly_title(s, Q2).values == {}


def test_quarter_labels():
    q = Quarter.from_label("2022q4")
    assert (q.start, q.end, q.label) == (d("2022-10-01"), d("2022-12-31"), "2022Q4")
    assert [x.label for x in quarter_calendar("2022Q3", "2023Q2")] == ["2022Q3", "2022Q4", "2023Q1", "2023Q2"]
    with pytest.raises(DataError):
        Quarter.from_label("2022Q5")


# ---------------------------------------------------------------- spell files

SPELLS = b"""person_id,unit_id,start_date,end_date,title_level
p1,A,2021-01-01,,3
p2,A,2021-06-01,2022-02-15,senior
p3,B,2020-01-01,,2
p4,B,2022-01-10,,
"""


def test_read_spells_and_panel():
    spells = read_spells_csv(SPELLS)
    assert spells[1].title_level == 5
    panel, diag = spells_to_panel(spells, quarter_calendar("2022Q1", "2022Q2"), "tenure")
    assert panel.units == ("A", "B")
    np.testing.assert_array_equal(panel.cell("A", 1), [(d("2022-03-31") - d("2021-01-01")).days, 259.0])
    assert panel.count("A", 2) == 1
    titles, _ = spells_to_panel(spells, quarter_calendar("2022Q1", "2022Q1"), "title")
    np.testing.assert_array_equal(titles.cell("B", 1), [2.0])
    assert diag["quarters"] == ["2022Q1", "2022Q2"]


def test_read_spells_bad_date_names_line():
    bad = SPELLS + b"p5,B,2022-13-01,,\n"
    with pytest.raises(DataError, match="line 6"):
        read_spells_csv(bad)


def test_read_spells_missing_column():
    with pytest.raises(SchemaError, match="title_level"):
        read_spells_csv(b"person_id,unit_id,start_date,end_date\np,A,2020-01-01,\n")


# ---------------------------------------------------------------- donor filter

def _sized_panel(sizes):
    return MicroPanel({(u, 1): np.zeros(n) for u, n in sizes.items()}, units=list(sizes))


def test_filter_threshold():
    # a third large donor keeps the pool at two survivors
    panel = _sized_panel({"T": 1000, "D60": 60, "D40": 40, "Big": 500})
    kept, dropped = filter_donors(panel, "T", 0.05)
    assert kept.units == ("T", "D60", "Big")
    assert dropped == ["D40"]


def test_filter_zero_keeps_all():
    panel = _sized_panel({"T": 1000, "D60": 60, "D40": 40})
    kept, dropped = filter_donors(panel, "T", 0.0)
    assert kept.units == ("T", "D60", "D40") and dropped == []


def test_filter_insufficient_pool():
    panel = _sized_panel({"T": 1000, "D60": 60, "D40": 40})
    with pytest.raises(DataError, match="insufficient donor pool"):
        filter_donors(panel, "T", 0.05)
    with pytest.raises(DataError, match="insufficient donor pool"):
        filter_donors(panel, "T", 0.5)


def test_filter_include_list():
    panel = _sized_panel({"T": 10, "A": 10, "B": 10, "C": 10})
    kept, dropped = filter_donors(panel, "T", 0.0, include=["A", "C"])
    assert kept.units == ("T", "A", "C") and dropped == ["B"]
