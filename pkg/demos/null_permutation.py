"""Size of the placebo permutation test when nothing happens.

Every unit, treated included, is drawn from the same hyper-model, so the
treated unit's post/pre fit ratio is exchangeable with the placebo ratios
and the p-value is uniform on {1/10, ..., 1}. A few dozen panels already
show the mean p near 0.5.

    python3 demos/null_permutation.py
"""

import numpy as np

from distsynth import FitSpec, generate, permutation_test, preset

pvals = []
for seed in range(40):
    sim = preset("null-dgp", seed, n=500)
    names = sim.unit_names
    spec = FitSpec(names[0], tuple(names[1:]), (1, 2, 3), (4, 5, 6), grid_size=200)
    pvals.append(permutation_test(generate(sim).panel, spec).p_value)

p = np.array(pvals)
print(f"{p.size} null panels, 9 donors each")
print(f"  mean p-value       {p.mean():.3f}")
print(f"  share with p <= .1 {np.mean(p <= 0.1):.3f}")
print("  histogram:", np.histogram(p, bins=np.linspace(0.05, 1.05, 11))[0].tolist())
