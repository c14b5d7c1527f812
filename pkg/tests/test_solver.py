import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

from distsynth.distribution import DiscreteCDF, EmpiricalQuantile, QuantileGrid
from distsynth.errors import DataError
from distsynth.simulation import oracle_weights
from distsynth.solver import (
    SimplexWeights,
    SolverConfig,
    project_simplex,
    quantile_objective,
    solve_cdf_weights,
    solve_quantile_weights,
)

GRID = QuantileGrid(200)
Q = GRID.points


def qf(values):
    return EmpiricalQuantile(GRID, values)


def bern(p):
    return DiscreteCDF([0.0, 1.0], [1.0 - p, 1.0])


def random_controls(g, J, grid=GRID):
    out = []
    for _ in range(J):
        base = np.sort(g.normal(g.normal(), g.uniform(0.3, 2.0), grid.size + 1))
        out.append(EmpiricalQuantile(grid, base))
    return out


# ---------------------------------------------------------------- simplex projection

@pytest.mark.parametrize(
    "v, expected",
    [((0.2, 0.8), (0.2, 0.8)), ((2.0, 0.0), (1.0, 0.0)), ((0.6, 0.6), (0.5, 0.5))],
)
def test_projection_examples(v, expected):
    np.testing.assert_allclose(project_simplex(v), expected, atol=1e-15)


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-100, 100, allow_nan=False)))
def test_projection_is_idempotent_and_feasible(v):
    p = project_simplex(v)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)


@settings(max_examples=40)
@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(-5, 5, allow_nan=False)))
def test_projection_matches_generic_solver(v):
    # independent check: constrained least squares via SLSQP
    res = minimize(
        lambda x: np.sum((x - v) ** 2),
        np.full(v.size, 1.0 / v.size),
        jac=lambda x: 2 * (x - v),
        bounds=[(0, 1)] * v.size,
        constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    p = project_simplex(v)
    assert np.sum((p - v) ** 2) <= np.sum((res.x - v) ** 2) + 1e-9


# ---------------------------------------------------------------- quantile program

def test_exact_midpoint_mixture():
    w = solve_quantile_weights(qf(1.5 * Q), [qf(Q), qf(2 * Q)])
    np.testing.assert_allclose(w.weights, [0.5, 0.5], atol=1e-8)
    assert w.objective < 1e-14 and w.converged


def test_target_equals_control():
    w = solve_quantile_weights(qf(Q), [qf(Q), qf(2 * Q)])
    np.testing.assert_allclose(w.weights, [1, 0], atol=1e-8)


def test_boundary_optimum():
    w = solve_quantile_weights(qf(3 * Q), [qf(Q), qf(2 * Q)])
    np.testing.assert_allclose(w.weights, [0, 1], atol=1e-8)
    assert w.objective == pytest.approx(quantile_objective([0, 1], qf(3 * Q), [qf(Q), qf(2 * Q)]))


def test_rejects_non_finite():
    bad = Q.copy()
    bad[3] = np.inf
    with pytest.raises(DataError):
        solve_quantile_weights(qf(bad), [qf(Q), qf(2 * Q)])


def test_iteration_cap_reports_non_convergence():
    g = np.random.default_rng(5)
    controls = random_controls(g, 6)
    target = random_controls(g, 1)[0]
    w = solve_quantile_weights(target, controls, SolverConfig(max_iterations=1))
    assert isinstance(w, SimplexWeights)
    # never worse than the best vertex, even when stopped early
    vertex = min(quantile_objective(np.eye(6)[k], target, controls) for k in range(6))
    assert w.objective <= vertex + 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_oracle_equivalence(seed):
    g = np.random.default_rng(seed)
    J = 3
    controls = random_controls(g, J)
    target = random_controls(g, 1)[0]
    w = solve_quantile_weights(target, controls)
    oracle = oracle_weights(target, controls, step=0.01)
    assert w.objective <= oracle.objective + 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_never_worse_than_vertices(seed):
    g = np.random.default_rng(100 + seed)
    controls = random_controls(g, 8)
    target = random_controls(g, 1)[0]
    w = solve_quantile_weights(target, controls)
    for k in range(8):
        assert w.objective <= quantile_objective(np.eye(8)[k], target, controls) + 1e-12


def test_donor_permutation_permutes_weights():
    g = np.random.default_rng(11)
    controls = random_controls(g, 4)
    lam = np.array([0.1, 0.5, 0.0, 0.4])
    target = qf(np.column_stack([c.values for c in controls]) @ lam + 0.01 * np.sort(g.normal(size=Q.size)))
    w = solve_quantile_weights(target, controls).weights
    perm = [2, 0, 3, 1]
    w_perm = solve_quantile_weights(target, [controls[i] for i in perm]).weights
    np.testing.assert_allclose(w_perm, w[perm], atol=1e-6)


def test_shift_leaves_objective_unchanged():
    g = np.random.default_rng(12)
    controls = random_controls(g, 3)
    target = random_controls(g, 1)[0]
    c = 7.25
    shifted = [qf(x.values + c) for x in controls]
    a = solve_quantile_weights(target, controls)
    b = solve_quantile_weights(qf(target.values + c), shifted)
    assert a.objective == pytest.approx(b.objective, rel=1e-7, abs=1e-10)


def test_restricted_range_selects_matching_control():
    # target follows control 1 below the median and control 2 above it
    target = qf(np.where(Q <= 0.5, Q, 2 * Q))
    low = solve_quantile_weights(target, [qf(Q), qf(2 * Q)], q_min=0.0, q_max=0.49)
    high = solve_quantile_weights(target, [qf(Q), qf(2 * Q)], q_min=0.51, q_max=1.0)
    np.testing.assert_allclose(low.weights, [1, 0], atol=1e-8)
    np.testing.assert_allclose(high.weights, [0, 1], atol=1e-8)


def test_duplicate_controls_flagged_degenerate():
    w = solve_quantile_weights(qf(1.2 * Q), [qf(Q), qf(Q), qf(2 * Q)])
    assert w.degenerate
    assert w.weights[0] + w.weights[1] == pytest.approx(0.8, abs=1e-6)


def test_rounded_and_dict():
    w = SimplexWeights(np.array([0.5, 5e-11, 0.5 - 5e-11]), 0.0)
    np.testing.assert_array_equal(w.rounded()[1], 0.0)
    d = w.to_dict(["a", "b", "c"])
    assert d["donors"] == ["a", "b", "c"] and len(d["weights"]) == 3


# ---------------------------------------------------------------- CDF program

def test_bernoulli_interpolation():
    w = solve_cdf_weights(bern(0.5), [bern(0.2), bern(0.8)])
    np.testing.assert_allclose(w.weights, [0.5, 0.5], atol=1e-9)
    assert w.objective == pytest.approx(0.0, abs=1e-12)


def test_bernoulli_boundary():
    w = solve_cdf_weights(bern(0.9), [bern(0.2), bern(0.8)])
    np.testing.assert_allclose(w.weights, [0, 1], atol=1e-9)
    assert w.objective == pytest.approx(0.1, abs=1e-12)


def test_cdf_target_equals_control():
    s = [1.0, 2.0, 3.0]
    a, b = DiscreteCDF(s, [0.2, 0.5, 1]), DiscreteCDF(s, [0.1, 0.9, 1])
    w = solve_cdf_weights(b, [a, b])
    np.testing.assert_allclose(w.weights, [0, 1], atol=1e-9)
    assert w.objective == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_cdf_oracle(seed):
    g = np.random.default_rng(seed)
    s = np.arange(1.0, 7.0)

    def rand():
        return DiscreteCDF(s, np.append(np.sort(g.uniform(size=5)), 1.0))

    controls = [rand() for _ in range(3)]
    target = rand()
    w = solve_cdf_weights(target, controls)
    oracle = oracle_weights(target, controls, step=0.01)
    assert w.objective <= oracle.objective + 1e-9
