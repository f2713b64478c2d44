"""Purity tests for repeated-run experiments.

Non-parametric compatibility tests, a purity protocol over the runs of one
experiment, time-series fine-structure tools, and seeded generators for
calibrating all of them.
"""
from .kernel import PValue, RankAssignment, binomial_tail, chi_square_sf, rank_with_ties, std_normal_sf
from .nptests import (
    DegenerateTestError,
    Sample,
    TestOptions,
    TestResult,
    cox_stuart_test,
    kruskal_wallis_test,
    mann_whitney_test,
    mcnemar_test,
    runs_count,
    runs_test,
    sign_test,
    wald_wolfowitz_test,
    wilcoxon_signed_rank_test,
)
from .purity import (
    PurityReport,
    RunSet,
    SubEnsembleSpec,
    correct_pvalues,
    purity_test,
    randomness_check,
    sub_ensemble_purity,
)
from .simgen import GeneratedRunSet, GeneratorSpec, generate, power_study

__version__ = "0.1.0"
