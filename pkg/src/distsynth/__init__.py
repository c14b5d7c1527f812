"""Distributional synthetic controls.

Fit a treated unit's outcome distribution as a convex combination of donor
distributions, build counterfactual quantile functions or CDFs, test with
placebo permutations and attach bootstrap uniform confidence bands.
"""

from .bootstrap import Band, BootstrapBands, BootstrapConfig, bootstrap_bands
from .distribution import (
    DiscreteCDF,
    EmpiricalQuantile,
    GramDiagnostic,
    QuantileGrid,
    empirical_cdf,
    empirical_quantile,
    gram_diagnostic,
    l1_cdf_distance,
    quadrature_weights,
    wasserstein2,
)
from .errors import DataError, DistSynthError, EstimationError, SchemaError
from .estimator import DscFit, FitSpec, build_distributions, effect_curve, fit
from .inference import PermutationResult, permutation_pvalue, permutation_test
from .panel import (
    EmploymentSpell,
    MicroPanel,
    PanelSchema,
    compute_tenure,
    filter_donors,
    parse_long_csv,
    quarterly_title,
    read_spells_csv,
    spells_to_panel,
    write_long_csv,
)
from .simulation import SimResult, SimSpec, generate, oracle_pvalue, oracle_weights, preset
from .solver import SimplexWeights, SolverConfig, project_simplex, solve_cdf_weights, solve_quantile_weights

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
