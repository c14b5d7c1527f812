import pytest

from distsynth.estimator import FitSpec
from distsynth.simulation import Family, SimSpec, UnitSpec, generate

# positive density on a compact support: extreme quantiles are well behaved
MIX_FAMILIES = (
    Family("uniform", {"lo": 0.0, "hi": 2.0}),
    Family("truncnorm", {"loc": 0.5, "scale": 1.0, "lo": 0.0, "hi": 3.0}),
    Family("truncnorm", {"loc": 1.5, "scale": 0.7, "lo": 0.0, "hi": 3.5}),
)


def mixture_sim(weights, n, seed, n_periods=3, t_star=3, families=MIX_FAMILIES, effect=None, grid_size=1000):
    donors = tuple(UnitSpec(f"D{j + 1}", (families[j],)) for j in range(len(weights)))
    return SimSpec(n_periods, t_star, n, seed, donors, weights=tuple(weights), mixture="quantile",
                   effect=effect, grid_size=grid_size)


def spec_for(sim, **kw):
    names = sim.unit_names
    pre = tuple(range(1, sim.t_star + 1))
    post = tuple(range(sim.t_star + 1, sim.n_periods + 1))
    return FitSpec(names[0], tuple(names[1:]), pre, post, grid_size=sim.grid_size, **kw)


@pytest.fixture
def small_mixture():
    sim = mixture_sim((0.3, 0.7), n=2000, seed=1, n_periods=4, t_star=2, grid_size=200)
    return generate(sim), spec_for(sim)
