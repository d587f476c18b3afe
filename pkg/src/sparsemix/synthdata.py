"""Synthetic data generators, component-overlap measures, and the exact
small-n posterior oracle for the univariate two-mean model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr, xlogy

from .dataset import DataSet
from .rngdist import MvNormalDensity, ParameterDomainError, RngStream

MAX_EXACT_N = 20


@dataclass(frozen=True)
class ScenarioSpec:
    """Three-component isotropic Gaussian scenario in dimension d.

    Weights (0.35, 0.2, 0.45); component means are the alternating pattern
    (1, 4, 1, 4, ...), the all-ones vector, and the all-fours vector; common
    covariance tau * I.
    """

    d: int
    n: int
    tau: float = 1.0
    weights: tuple = (0.35, 0.2, 0.45)
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ParameterDomainError("d and n must be positive")
        if self.tau <= 0.0:
            raise ParameterDomainError("tau must be positive")
        w = np.asarray(self.weights, dtype=float)
        if w.size != 3 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterDomainError("weights must be three nonnegative values summing to 1")

    def component_means(self) -> np.ndarray:
        """(3, d) matrix of the scenario's component means."""
        mu1 = np.where(np.arange(self.d) % 2 == 0, 1.0, 4.0)
        mu2 = np.ones(self.d)
        mu3 = np.full(self.d, 4.0)
        return np.stack([mu1, mu2, mu3])


def simulate_scenario(spec: ScenarioSpec) -> tuple[DataSet, np.ndarray]:
    """Simulate (observations, 0-based true labels) for the scenario.

    Deterministic per spec.seed: labels are drawn first, then the n x d normal
    block.
    """
    rng = RngStream(spec.seed)
    gen = rng.generator
    means = spec.component_means()
    labels = gen.choice(3, size=spec.n, p=np.asarray(spec.weights, dtype=float))
    noise = gen.standard_normal((spec.n, spec.d))
    y = means[labels] + math.sqrt(spec.tau) * noise
    return DataSet(y), labels


def simulate_two_mean(n, eta, mu1, mu2, sigma2, seed) -> DataSet:
    """Univariate sample from eta N(mu1, sigma2) + (1 - eta) N(mu2, sigma2)."""
    if not 0.0 <= eta <= 1.0:
        raise ParameterDomainError("eta must lie in [0, 1]")
    if sigma2 <= 0.0:
        raise ParameterDomainError("sigma2 must be positive")
    rng = RngStream(seed)
    gen = rng.generator
    z = gen.random(n) < eta
    mu = np.where(z, float(mu1), float(mu2))
    return DataSet(mu + math.sqrt(sigma2) * gen.standard_normal(n))


def overlap(mean_a, mean_b, tau, d: int | None = None) -> float:
    """Overlap ∫ min(f_a, f_b) dy of two N(mean, tau I) densities.

    For equal isotropic covariances the integral is 2 Φ(-Δ / (2 sqrt(tau)))
    with Δ the Euclidean distance between the means. Scalars are broadcast to
    constant d-vectors when ``d`` is given.
    """
    if tau <= 0.0:
        raise ParameterDomainError("tau must be positive")
    a = np.asarray(mean_a, dtype=float).ravel()
    b = np.asarray(mean_b, dtype=float).ravel()
    if d is not None:
        if a.size == 1:
            a = np.full(d, a[0])
        if b.size == 1:
            b = np.full(d, b[0])
    if a.size != b.size:
        raise ParameterDomainError("means must have equal lengths")
    delta = float(np.linalg.norm(a - b))
    return float(2.0 * ndtr(-delta / (2.0 * math.sqrt(tau))))


def overlap_mc(comp_a, comp_b, rng: RngStream, n_draws: int) -> tuple[float, float]:
    """Monte Carlo estimate of ∫ min(f_a, f_b) dy for two Gaussian components.

    ``comp_a`` and ``comp_b`` are (mean, cov) pairs; general covariances are
    allowed. Draws come from the equal mixture (f_a + f_b)/2 and the integrand
    ratio min/mixture is averaged, all in the log domain. Returns
    (estimate, standard error). In large d the integrand ratio degenerates to
    {0, 2} and the closed form should be preferred.
    """
    mean_a, cov_a = comp_a
    mean_b, cov_b = comp_b
    dens_a = MvNormalDensity(mean_a, cov=cov_a)
    dens_b = MvNormalDensity(mean_b, cov=cov_b)
    gen = rng.generator
    pick_a = gen.random(n_draws) < 0.5
    d = dens_a.d
    z = gen.standard_normal((n_draws, d))
    la = np.linalg.cholesky(np.atleast_2d(np.asarray(cov_a, dtype=float)))
    lb = np.linalg.cholesky(np.atleast_2d(np.asarray(cov_b, dtype=float)))
    draws = np.where(
        pick_a[:, None],
        np.asarray(mean_a, dtype=float) + z @ la.T,
        np.asarray(mean_b, dtype=float) + z @ lb.T,
    )
    log_fa = dens_a.logpdf(draws)
    log_fb = dens_b.logpdf(draws)
    # min(fa, fb) / ((fa + fb)/2) = 2 exp(min(la, lb) - logaddexp(la, lb))
    ratio = 2.0 * np.exp(np.minimum(log_fa, log_fb) - np.logaddexp(log_fa, log_fb))
    est = float(ratio.mean())
    se = float(ratio.std(ddof=1) / math.sqrt(n_draws))
    return est, se


@dataclass(frozen=True)
class TwoMeanPosterior:
    """Exact posterior summaries of the two-mean model from full enumeration."""

    mean: np.ndarray          # E(mu_1 | y), E(mu_2 | y)
    var: np.ndarray           # Var(mu_1 | y), Var(mu_2 | y)
    assign_prob: np.ndarray   # P(z_i = component 1 | y) per observation
    log_marginal: float


def exact_two_mean_posterior(data, eta, sigma2, prior_var) -> TwoMeanPosterior:
    """Exact posterior of (mu_1, mu_2) by summing over all 2^n allocations.

    The model is eta N(mu_1, sigma2) + (1-eta) N(mu_2, sigma2) with independent
    N(0, prior_var) priors on both means. Exponential cost restricts n to
    ``MAX_EXACT_N``; this function exists as the brute-force oracle for the
    Gibbs demo sampler.
    """
    y = np.asarray(data.y if isinstance(data, DataSet) else data, dtype=float).ravel()
    n = y.size
    if n > MAX_EXACT_N:
        raise ParameterDomainError(
            f"exact enumeration is limited to n <= {MAX_EXACT_N} (got n={n})"
        )
    if not 0.0 < eta < 1.0:
        raise ParameterDomainError("eta must lie strictly inside (0, 1)")
    if sigma2 <= 0.0 or prior_var <= 0.0:
        raise ParameterDomainError("sigma2 and prior_var must be positive")

    m = 1 << n
    idx = np.arange(m, dtype=np.int64)
    n1 = np.zeros(m)
    s1 = np.zeros(m)
    q1 = np.zeros(m)
    for i in range(n):
        bit = ((idx >> i) & 1).astype(float)
        n1 += bit
        s1 += y[i] * bit
        q1 += y[i] * y[i] * bit
    n2 = n - n1
    s2 = y.sum() - s1
    q2 = (y * y).sum() - q1

    def group_terms(ng, sg, qg):
        # marginal of one group's points with mu ~ N(0, prior_var):
        # A = 1/prior_var + ng/sigma2, B = sg/sigma2
        A = 1.0 / prior_var + ng / sigma2
        B = sg / sigma2
        log_m = (
            -0.5 * ng * math.log(2.0 * math.pi * sigma2)
            - qg / (2.0 * sigma2)
            - 0.5 * math.log(prior_var)
            - 0.5 * np.log(A)
            + B * B / (2.0 * A)
        )
        return log_m, B / A, 1.0 / A

    log_m1, post_mean1, post_var1 = group_terms(n1, s1, q1)
    log_m2, post_mean2, post_var2 = group_terms(n2, s2, q2)
    log_w = xlogy(n1, eta) + xlogy(n2, 1.0 - eta) + log_m1 + log_m2
    log_marginal = float(logsumexp(log_w))
    w = np.exp(log_w - log_marginal)

    mean = np.array([w @ post_mean1, w @ post_mean2])
    second = np.array(
        [w @ (post_var1 + post_mean1 ** 2), w @ (post_var2 + post_mean2 ** 2)]
    )
    var = second - mean ** 2

    assign = np.empty(n)
    for i in range(n):
        bit = ((idx >> i) & 1).astype(float)
        assign[i] = w @ bit
    return TwoMeanPosterior(mean=mean, var=var, assign_prob=assign, log_marginal=log_marginal)
