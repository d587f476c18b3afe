"""Gibbs sampling for sparse finite multivariate Gaussian mixtures."""

from .dataset import DataSet, load_csv, save_csv
from .gibbs import (
    ChainFailure,
    ChainTrace,
    InitSpec,
    MixtureState,
    RunOptions,
    lloyd_kmeans,
    run_chain,
    run_univariate_demo,
)
from .postproc import (
    ClusterCountStats,
    NoQualifyingSweepsError,
    RelabeledSummary,
    adjusted_rand,
    count_nonempty,
    map_partition,
    relabel_pointprocess,
    summarize_chains,
)
from .priors import (
    CovPriorConfig,
    FixedCovPrior,
    HierarchicalCovPrior,
    MeanPriorConfig,
    PriorConfig,
    build_cov_prior,
    build_mean_prior,
    default_c0,
    mixture_moments,
    phi_det,
    phi_tr,
    r2_det,
    r2_tr,
)
from .rngdist import (
    MvNormalDensity,
    NotPositiveDefiniteError,
    NumericalFailureError,
    ParameterDomainError,
    RngStream,
    WishartParams,
    lngamma_d,
    logpdf_mvnormal,
    sample_dirichlet,
    sample_gamma,
    sample_gig,
    sample_inv_wishart,
    sample_mvnormal,
    sample_wishart,
)
from .synthdata import (
    ScenarioSpec,
    TwoMeanPosterior,
    exact_two_mean_posterior,
    overlap,
    overlap_mc,
    simulate_scenario,
    simulate_two_mean,
)

__version__ = "0.1.0"
