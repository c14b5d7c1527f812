"""From employment spells to a quarterly tenure panel, then a Gram check.

Spells (person, firm, start, end) become per-firm tenure samples at each
quarter end; repeated episodes at one firm add up. We then build a fit
specification and look at the Gram matrix of donor quantile functions: a
donor that duplicates another makes the weights non-unique, which the
diagnostic reports.

    python3 demos/spells_to_panel.py
"""

from datetime import date, timedelta

import numpy as np

from distsynth import EmploymentSpell, FitSpec, fit, spells_to_panel
from distsynth.panel import quarter_calendar

g = np.random.default_rng(0)
spells = []
for firm, mean_days in [("T", 500), ("A", 300), ("B", 800), ("C", 550)]:
    for k in range(300):
        start = date(2022, 6, 30) - timedelta(int(g.exponential(mean_days)))
        end = None if g.uniform() < 0.8 else start + timedelta(int(g.uniform(10, 400)))
        spells.append(EmploymentSpell(f"{firm}{k}", firm, start, end))
# firm D copies firm A person by person
spells += [EmploymentSpell("D" + s.person_id, "D", s.start_date, s.end_date) for s in spells if s.unit_id == "A"]

panel, diag = spells_to_panel(spells, quarter_calendar("2022Q3", "2023Q2"), "tenure")
print("quarters:", diag["quarters"])
for u in panel.units:
    print(f"  {u}: {panel.count(u, 1)} people, median tenure {np.median(panel.cell(u, 1)):.0f} days in period 1")

spec = FitSpec("T", ("A", "B", "C", "D"), pre_periods=(1, 2), post_periods=(3, 4), grid_size=200)
result = fit(panel, spec)
for t, gram in result.diagnostics.items():
    print(f"period {t}: min Gram eigenvalue {gram.min_eigenvalue:.2e}, warning = {gram.warning}")
print("averaged weights:", {d: round(float(w), 3) for d, w in zip(spec.donors, result.averaged_weights.weights)})
