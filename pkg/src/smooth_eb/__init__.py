"""Smooth nonparametric maximum likelihood empirical Bayes for Gaussian
location mixtures: prior fitting, posterior means, optimal marginal
coverage sets, inference on the largest Gaussian prior component and
goodness-of-fit tests."""
from .coverage import (
    CoverageRule,
    HpdRule,
    calibrate_threshold,
    coverage_set,
    evaluate_rule,
    hetero_rules,
    hpd_set,
    level_set,
    simulate_joint,
)
from .estimators import LargestGaussianComponent, MarginalCoverageSets, SmoothNPMLE
from .exceptions import DataError, NumericalError, SmoothEBError
from .gof import TestReport, glrt_bootstrap_test, slr_gof_test
from .identify import (
    C0Estimate,
    NeighborhoodOptions,
    c0_slr_upper_bound,
    c0_upper_bound,
    cv_eta,
    estimate_c0,
    ks_distance_to_mixture,
    sigma0_envelope,
)
from .linprog import FeasibilityProblem, feasible
from .metrics import DensityFn, hellinger_sq, l1, l2_sq, tv, wtv
from .model import (
    DiscreteMixture,
    Grid,
    IntervalUnion,
    Sample,
    SmoothModel,
    model_from_json,
    model_to_json,
    read_sample_csv,
    validate_mixture,
)
from .npmle import (
    FitOptions,
    FitResult,
    build_grid,
    certify_optimality,
    log_likelihood,
    marginal_density,
    solve_npmle,
)
from .posterior import (
    PosteriorAt,
    denoise,
    posterior_density,
    posterior_mean_theta,
    posterior_mean_xi,
    prior_density,
)
from .simulate import Scenario, ScenarioReport, named_scenario, run_figure_fixture, run_scenario

__version__ = "0.1.0"
