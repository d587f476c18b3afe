"""Prior construction: sparse Dirichlet weights, shrinkage means, and the three
scalings of the Wishart prior on component precisions (hierarchical, trace,
determinant)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import DataSet
from .rngdist import ParameterDomainError, WishartParams, cholesky_spd, lngamma_d

RIDGE_REL = 1e-8

_COV_MODES = ("hierarchical", "trace", "determinant")
_B0_MODES = ("empirical_median", "fixed")
_SHRINKAGE_MODES = ("fixed", "gamma")


def default_c0(d: int) -> float:
    """Default Wishart shape 2.5 + (d-1)/2."""
    return 2.5 + (d - 1) / 2.0


@dataclass(frozen=True)
class MeanPriorConfig:
    """Hierarchy on component means: mu_g ~ N(b0, diag(lambda_l R_l^2)).

    ``b0`` is either fixed at ``m0`` or given the improper flat prior
    (M0^{-1} = 0) and initialized at the column medians. The local shrinkage
    lambda_l is either fixed or Gamma(nu1, nu2).
    """

    b0_mode: str = "empirical_median"
    m0: tuple | None = None
    shrinkage: str = "fixed"
    lam: float = 1.0
    nu1: float = 0.5
    nu2: float = 0.5

    def __post_init__(self):
        if self.b0_mode not in _B0_MODES:
            raise ParameterDomainError(f"b0_mode must be one of {_B0_MODES}")
        if self.b0_mode == "fixed" and self.m0 is None:
            raise ParameterDomainError("fixed b0 mode requires m0")
        if self.shrinkage not in _SHRINKAGE_MODES:
            raise ParameterDomainError(f"shrinkage must be one of {_SHRINKAGE_MODES}")
        if self.shrinkage == "fixed" and self.lam <= 0.0:
            raise ParameterDomainError("fixed shrinkage value must be positive")
        if self.nu1 <= 0.0 or self.nu2 <= 0.0:
            raise ParameterDomainError("shrinkage Gamma hyperparameters must be positive")


@dataclass(frozen=True)
class CovPriorConfig:
    """Scaling of the Wishart prior on precisions.

    ``hierarchical`` puts a Wishart hyperprior on the rate C0; ``trace`` and
    ``determinant`` fix C0 = phi * S_y with phi chosen so the prior expected
    explained-heterogeneity criterion equals ``r2``.
    """

    mode: str = "determinant"
    r2: float = 0.5
    c0: float | None = None

    def __post_init__(self):
        if self.mode not in _COV_MODES:
            raise ParameterDomainError(f"cov prior mode must be one of {_COV_MODES}")
        if self.mode in ("trace", "determinant") and not 0.0 < self.r2 < 1.0:
            raise ParameterDomainError("r2 must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class PriorConfig:
    """The full prior hierarchy of one mixture fit."""

    G_max: int
    e0: float = 0.01
    mean: MeanPriorConfig = field(default_factory=MeanPriorConfig)
    cov: CovPriorConfig = field(default_factory=CovPriorConfig)

    def __post_init__(self):
        if int(self.G_max) < 1:
            raise ParameterDomainError("G_max must be a positive integer")
        object.__setattr__(self, "G_max", int(self.G_max))
        if self.e0 <= 0.0:
            raise ParameterDomainError("e0 must be positive")


@dataclass(frozen=True)
class MeanPriorSpec:
    """Mean prior resolved against a dataset."""

    b0: np.ndarray          # initial b0 (updated in the chain when update_b0)
    update_b0: bool
    ranges: np.ndarray      # R_l per column
    shrinkage: str
    lam0: np.ndarray        # initial lambda vector
    nu1: float
    nu2: float


@dataclass(frozen=True)
class FixedCovPrior:
    """Wishart prior with a fixed rate matrix (trace / determinant modes)."""

    params: WishartParams
    phi: float
    mode: str


@dataclass(frozen=True)
class HierarchicalCovPrior:
    """Wishart prior whose rate C0 itself carries a Wishart(g0, G0) hyperprior."""

    c0: float
    g0: float
    G0: np.ndarray


def phi_tr(r2: float, c0: float, d: int) -> float:
    """Trace-criterion scale factor (1 - r2)(c0 - (d+1)/2).

    Independent of d under the default shape c0 = 2.5 + (d-1)/2.
    """
    _check_r2_c0(r2, c0, d)
    return (1.0 - r2) * (c0 - (d + 1) / 2.0)


def phi_det(r2: float, c0: float, d: int) -> float:
    """Determinant-criterion scale factor, growing with the dimension d.

    Computed in the log domain as
    ``exp((log(1 - r2) + lngamma_d(d, c0) - lngamma_d(d, c0 - 1)) / d)``.
    The 1/d root applies to the whole product: that is the unique placement for
    which the prior expectation of the determinant criterion equals r2, since
    E(R2_det) = 1 - phi^d E(|W^{-1}|) with W ~ Wishart(c0, I) and
    E(|W^{-1}|) = Γ_d(c0 - 1) / Γ_d(c0).
    """
    _check_r2_c0(r2, c0, d)
    log_phi = (math.log1p(-r2) + lngamma_d(d, c0) - lngamma_d(d, c0 - 1.0)) / d
    return math.exp(log_phi)


def _check_r2_c0(r2, c0, d):
    if not 0.0 < r2 < 1.0:
        raise ParameterDomainError("r2 must lie strictly inside (0, 1)")
    if not c0 > (d + 1) / 2.0:
        raise ParameterDomainError(f"need c0 > (d+1)/2 = {(d + 1) / 2}, got {c0}")


def check_ranges(data: DataSet) -> np.ndarray:
    """Column ranges, rejecting constant columns by index."""
    bad = data.constant_columns()
    if bad.size:
        raise ParameterDomainError(
            f"column {bad[0] + 1} is constant (range 0); the range-scaled priors "
            "are undefined for it"
        )
    return data.ranges


def repaired_empirical_cov(data: DataSet) -> np.ndarray:
    """S_y, ridge-repaired when singular (n <= d or collinear columns).

    Adds ``1e-8 * mean(diag(S_y)) * I`` and warns instead of aborting, so the
    stuck-sampler regime with d close to n can still be demonstrated. With
    n - 1 < d the rank deficiency is structural and the ridge is applied
    without probing (a floating-point Cholesky can succeed on a matrix whose
    true rank is below d, which would poison every later scatter update).
    """
    S = data.empirical_cov
    if data.n - 1 >= data.d:
        try:
            cholesky_spd(S)
            return S
        except Exception:
            pass
    ridge = RIDGE_REL * float(np.mean(np.diag(S)))
    if ridge <= 0.0:
        ridge = RIDGE_REL
    warnings.warn(
        f"empirical covariance is singular; adding ridge {ridge:.3e} to the diagonal",
        RuntimeWarning,
        stacklevel=2,
    )
    return S + ridge * np.eye(data.d)


def build_mean_prior(config: PriorConfig, data: DataSet) -> MeanPriorSpec:
    """Resolve the mean hierarchy against the data (b0 start value, ranges)."""
    ranges = check_ranges(data)
    mc = config.mean
    if mc.b0_mode == "fixed":
        b0 = np.asarray(mc.m0, dtype=float).ravel()
        if b0.size != data.d:
            raise ParameterDomainError("m0 must have one entry per column")
        update_b0 = False
    else:
        b0 = data.column_medians.copy()
        update_b0 = True
    if mc.shrinkage == "fixed":
        lam0 = np.full(data.d, float(mc.lam))
    else:
        lam0 = np.full(data.d, mc.nu1 / mc.nu2)
    return MeanPriorSpec(
        b0=b0,
        update_b0=update_b0,
        ranges=ranges.copy(),
        shrinkage=mc.shrinkage,
        lam0=lam0,
        nu1=mc.nu1,
        nu2=mc.nu2,
    )


def build_cov_prior(config: PriorConfig, data: DataSet):
    """Resolve the covariance prior: FixedCovPrior or HierarchicalCovPrior.

    determinant: C0 = phi_det * S_y, no hyperprior on C0;
    trace:       C0 = phi_tr * S_y, no hyperprior on C0;
    hierarchical: C0 ~ Wishart(g0, G0) with g0 = 0.5 + (d-1)/2 and
    G0 = (100 g0 / c0) diag(1/R_l^2).
    """
    if data.n < 2:
        raise ParameterDomainError("covariance prior needs at least 2 observations")
    ranges = check_ranges(data)
    d = data.d
    c0 = config.cov.c0 if config.cov.c0 is not None else default_c0(d)
    if not c0 > (d - 1) / 2.0:
        raise ParameterDomainError(f"c0 must exceed (d-1)/2 = {(d - 1) / 2}")
    mode = config.cov.mode
    if mode == "hierarchical":
        g0 = 0.5 + (d - 1) / 2.0
        G0 = (100.0 * g0 / c0) * np.diag(1.0 / ranges ** 2)
        return HierarchicalCovPrior(c0=c0, g0=g0, G0=G0)
    S = repaired_empirical_cov(data)
    phi = phi_det(config.cov.r2, c0, d) if mode == "determinant" else phi_tr(config.cov.r2, c0, d)
    return FixedCovPrior(params=WishartParams(c=c0, C=phi * S), phi=phi, mode=mode)


def mixture_moments(weights, means, covs) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a finite Gaussian mixture.

    Cov(y) = sum_g eta_g Sigma_g + sum_g eta_g (mu_g - E y)(mu_g - E y)^T.
    """
    weights = np.asarray(weights, dtype=float).ravel()
    means = np.atleast_2d(np.asarray(means, dtype=float))
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 2:
        covs = covs[None, :, :]
    G, d = means.shape
    if weights.shape != (G,) or covs.shape != (G, d, d):
        raise ParameterDomainError("weights, means and covs have inconsistent shapes")
    if abs(weights.sum() - 1.0) > 1e-8 or np.any(weights < 0.0):
        raise ParameterDomainError("weights must be a probability vector")
    mean = weights @ means
    within = np.einsum("g,gij->ij", weights, covs)
    centered = means - mean
    between = np.einsum("g,gi,gj->ij", weights, centered, centered)
    return mean, within + between


def r2_tr(weights, covs, total_cov) -> float:
    """Trace criterion 1 - tr(sum_g eta_g Sigma_g) / tr(Cov(y))."""
    within = _weighted_within(weights, covs)
    total_cov = np.atleast_2d(np.asarray(total_cov, dtype=float))
    return 1.0 - float(np.trace(within) / np.trace(total_cov))


def r2_det(weights, covs, total_cov) -> float:
    """Determinant criterion 1 - |sum_g eta_g Sigma_g| / |Cov(y)|.

    The determinant ratio is computed from log-determinants so it stays finite
    in high dimension.
    """
    within = _weighted_within(weights, covs)
    total_cov = np.atleast_2d(np.asarray(total_cov, dtype=float))
    sign_w, logdet_w = np.linalg.slogdet(within)
    sign_t, logdet_t = np.linalg.slogdet(total_cov)
    if sign_w <= 0 or sign_t <= 0:
        raise ParameterDomainError("within and total covariances must be SPD")
    return 1.0 - math.exp(logdet_w - logdet_t)


def _weighted_within(weights, covs):
    weights = np.asarray(weights, dtype=float).ravel()
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 2:
        covs = covs[None, :, :]
    return np.einsum("g,gij->ij", weights, covs)
