"""Seedable random streams and the distribution kernels every sampler consumes.

All matrix-variate draws use the rate parametrization in which
``p(P) ∝ |P|^{c-(d+1)/2} exp(-tr(C P))`` with ``E(P) = c C^{-1}``; for d=1 this
is a Gamma(shape c, rate C). The bridge to the textbook Wishart is applied in
exactly one place (:func:`sample_wishart`): degrees of freedom ``2c`` and scale
matrix ``(2C)^{-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.special import gammaln

LN_2PI = math.log(2.0 * math.pi)

_TINY = 1e-300


class ParameterDomainError(ValueError):
    """A parameter lies outside the admissible domain of its distribution."""


class NotPositiveDefiniteError(ValueError):
    """A Cholesky factorization failed; ``pivot`` is the 1-based failing index."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class NumericalFailureError(RuntimeError):
    """A computation produced values no further sampling step can use."""


@dataclass
class RngStream:
    """One reproducible stream of randomness.

    The underlying generator is ``PCG64(SeedSequence(seed, spawn_key=(stream_id,)))``.
    Equal ``(seed, stream_id)`` pairs replay the identical draw sequence; distinct
    ``stream_id`` values (one per replicate chain, per worker, ...) yield
    statistically independent streams. The spawn-key split is the stable, documented
    stream layout: replicate ``i`` of a run with master seed ``s`` always owns
    ``RngStream(s, i)``.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParameterDomainError("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise ParameterDomainError("stream_id must be non-negative")
        self.seed = int(self.seed)
        self.stream_id = int(self.stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._generator = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator


def cholesky_spd(mat) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix.

    Raises :class:`NotPositiveDefiniteError` carrying the failing pivot index
    instead of a bare LinAlgError.
    """
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterDomainError("expected a square matrix")
    c, info = sla.lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(
            f"matrix of order {a.shape[0]} is not positive definite (pivot {info})",
            pivot=int(info),
        )
    if info < 0:
        raise ParameterDomainError(f"invalid argument {-info} passed to dpotrf")
    return c


@dataclass(frozen=True)
class WishartParams:
    """Shape ``c`` and SPD rate matrix ``C`` of the rate-parametrized Wishart.

    ``E(P) = c C^{-1}`` for ``P ~ Wishart(c, C)`` and ``E(S) = C / (c - (d+1)/2)``
    for its inverse ``S = P^{-1}`` (the latter requires ``c > (d+1)/2``).
    """

    c: float
    C: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ParameterDomainError("rate matrix C must be square")
        object.__setattr__(self, "C", C)
        d = C.shape[0]
        if not self.c > (d - 1) / 2.0:
            raise ParameterDomainError(
                f"Wishart shape must exceed (d-1)/2 = {(d - 1) / 2}, got {self.c}"
            )

    @property
    def d(self) -> int:
        return self.C.shape[0]


def sample_dirichlet(rng: RngStream, concentration) -> np.ndarray:
    """Draw a weight vector from Dirichlet(concentration).

    Returns a nonnegative vector summing to one (within 1e-12). Entries with
    tiny concentration may underflow to exactly 0, which downstream code treats
    as log-weight -inf.
    """
    e = np.asarray(concentration, dtype=float).ravel()
    if e.size == 0:
        raise ParameterDomainError("concentration vector is empty")
    if not np.all(e > 0.0):
        raise ParameterDomainError("Dirichlet concentrations must be positive")
    if e.size == 1:
        return np.ones(1)
    return rng.generator.dirichlet(e)


def sample_mvnormal(rng: RngStream, mean, cov, size: int | None = None) -> np.ndarray:
    """Draw from N_d(mean, cov) via the lower Cholesky factor of ``cov``.

    With ``size`` given, returns a ``(size, d)`` array of independent draws from
    one factorization.
    """
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise ParameterDomainError("cov must be d x d matching the mean length")
    lower = cholesky_spd(cov)
    if size is None:
        z = rng.generator.standard_normal(mean.size)
        return mean + lower @ z
    z = rng.generator.standard_normal((size, mean.size))
    return mean + z @ lower.T


def _bartlett_factor(rng: RngStream, d: int, dof: float) -> np.ndarray:
    """Lower-triangular A with A A^T ~ textbook Wishart(dof, I)."""
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.generator.chisquare(dof - np.arange(d)))
    if d > 1:
        rows, cols = np.tril_indices(d, k=-1)
        A[rows, cols] = rng.generator.standard_normal(rows.size)
    return A


def sample_wishart_factor(rng: RngStream, params: WishartParams) -> np.ndarray:
    """Lower-triangular L with L L^T ~ Wishart(c, C) in the rate parametrization.

    Bartlett decomposition with ``2c`` degrees of freedom; the scale-matrix
    square root is ``L_C^{-T}/sqrt(2)`` where ``C = L_C L_C^T``, so the draw costs
    O(d^3) regardless of the degrees of freedom. The triangular factor comes
    from an LQ decomposition of the Bartlett product rather than re-factorizing
    the formed matrix, which stays stable even when C is nearly singular
    (ridge-repaired empirical covariances with d close to n).
    """
    d = params.d
    A = _bartlett_factor(rng, d, 2.0 * params.c)
    L_C = cholesky_spd(params.C)
    # M = L_C^{-T} A / sqrt(2); then M M^T ~ Wishart(2c, (2C)^{-1})
    M = sla.solve_triangular(L_C, A, lower=True, trans="T") / math.sqrt(2.0)
    # M^T = Q R gives M M^T = R^T R; flip column signs for a positive diagonal
    R = np.linalg.qr(M.T, mode="r")
    lower = R.T
    signs = np.sign(np.diag(lower))
    signs[signs == 0.0] = 1.0
    return lower * signs[None, :]


def sample_wishart(rng: RngStream, params: WishartParams) -> np.ndarray:
    """Draw an SPD matrix P ~ Wishart(c, C) in the rate parametrization."""
    lower = sample_wishart_factor(rng, params)
    return lower @ lower.T


def sample_inv_wishart(rng: RngStream, params: WishartParams) -> np.ndarray:
    """Draw S = P^{-1} with P ~ Wishart(c, C); same contracts as sample_wishart."""
    P = sample_wishart(rng, params)
    lower = cholesky_spd(P)
    inv_lower = sla.solve_triangular(lower, np.eye(params.d), lower=True)
    S = inv_lower.T @ inv_lower
    return 0.5 * (S + S.T)


def sample_gamma(rng: RngStream, shape: float, rate: float) -> float:
    """Gamma draw in the shape/rate convention."""
    if shape <= 0.0 or rate <= 0.0:
        raise ParameterDomainError("gamma shape and rate must be positive")
    return float(rng.generator.gamma(shape, 1.0 / rate))


def sample_gig(rng: RngStream, p: float, a: float, b) -> float | np.ndarray:
    """Generalized inverse Gaussian draw, density ∝ x^{p-1} exp(-(a x + b / x)/2).

    ``b`` may be an array, giving one independent draw per entry from a single
    vectorized call (the shrinkage update draws all d dimensions at once). The
    boundary cases reduce to the conjugate limits: b -> 0 with p > 0 is
    Gamma(p, rate a/2); a -> 0 with p < 0 is the inverse of a Gamma(-p, rate b/2).
    """
    b_arr = np.asarray(b, dtype=float)
    scalar = b_arr.ndim == 0
    b_arr = np.atleast_1d(b_arr).ravel()
    if a < 0.0 or np.any(b_arr < 0.0):
        raise ParameterDomainError("GIG parameters a and b must be nonnegative")
    out = np.empty(b_arr.shape)
    degenerate = b_arr <= _TINY
    if degenerate.any():
        if p <= 0.0 or a <= _TINY:
            raise ParameterDomainError("GIG with b=0 requires p > 0 and a > 0")
        out[degenerate] = rng.generator.gamma(p, 2.0 / a, size=int(degenerate.sum()))
    proper = ~degenerate
    if proper.any():
        bp = b_arr[proper]
        if a <= _TINY:
            if p >= 0.0:
                raise ParameterDomainError("GIG with a=0 requires p < 0")
            out[proper] = bp / (2.0 * rng.generator.gamma(-p, 1.0, size=bp.size))
        else:
            omega = np.sqrt(a * bp)
            scale = np.sqrt(bp / a)
            out[proper] = scale * _gig_standard(rng.generator, p, omega)
    return float(out[0]) if scalar else out


def _gig_standard(gen: np.random.Generator, lam: float, omega: np.ndarray) -> np.ndarray:
    """Vectorized draw from the two-parameter GIG, density ∝ x^{lam-1} e^{-omega(x+1/x)/2}.

    Works in v = log x, where the density exp(lam*v - omega*cosh(v)) is
    log-concave with mode at arcsinh(lam/omega); rejection uses the standard
    log-concave envelope (uniform box around the mode, exponential tails hung
    at the points where the centered log-density reaches -1). Negative lam
    goes through the reciprocal identity 1/X ~ GIG(-lam, omega).
    """
    omega = np.asarray(omega, dtype=float)
    flip = lam < 0.0
    lam = abs(lam)
    # centered log-density phi(t) = A (t - sinh t) - B (cosh t - 1) with
    # A = lam, B = sqrt(lam^2 + omega^2); phi(0) = 0, phi'(0) = 0, phi concave
    B = np.hypot(lam, omega)
    mode = np.arcsinh(lam / omega)

    def phi(t):
        return lam * (t - np.sinh(t)) - B * (np.cosh(t) - 1.0)

    def solve_level(sign):
        # smallest t > 0 with phi(sign*t) = -1, by bracketed bisection
        hi = np.ones_like(omega)
        for _ in range(200):
            grow = phi(sign * hi) > -1.0
            if not grow.any():
                break
            hi[grow] *= 2.0
        lo = np.zeros_like(hi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            high_side = phi(sign * mid) > -1.0
            lo = np.where(high_side, mid, lo)
            hi = np.where(high_side, hi, mid)
        return 0.5 * (lo + hi)

    t_right = solve_level(1.0)
    t_left = solve_level(-1.0)

    mass_mid = t_right + t_left
    mass_right = t_right * math.exp(-1.0)
    mass_left = t_left * math.exp(-1.0)
    total = mass_mid + mass_right + mass_left

    v = np.empty_like(omega)
    pending = np.ones(omega.shape, dtype=bool)
    while pending.any():
        idx = np.flatnonzero(pending)
        k = idx.size
        u_region = gen.random(k) * total[idx]
        u_val = gen.random(k)
        u_acc = gen.random(k)
        draw = np.empty(k)
        log_env = np.empty(k)
        in_mid = u_region < mass_mid[idx]
        in_right = ~in_mid & (u_region < (mass_mid + mass_right)[idx])
        in_left = ~in_mid & ~in_right
        draw[in_mid] = -t_left[idx][in_mid] + u_val[in_mid] * mass_mid[idx][in_mid]
        log_env[in_mid] = 0.0
        e = -np.log1p(-u_val[in_right])
        draw[in_right] = t_right[idx][in_right] * (1.0 + e)
        log_env[in_right] = -1.0 - e
        e = -np.log1p(-u_val[in_left])
        draw[in_left] = -t_left[idx][in_left] * (1.0 + e)
        log_env[in_left] = -1.0 - e
        phi_v = lam * (draw - np.sinh(draw)) - B[idx] * (np.cosh(draw) - 1.0)
        accept = np.log(u_acc) <= phi_v - log_env
        v[idx[accept]] = draw[accept]
        pending[idx[accept]] = False
    x = np.exp(mode + v)
    return 1.0 / x if flip else x


def lngamma_d(d: int, c: float) -> float:
    """Log of the generalized Gamma function.

    ``Γ_d(c) = π^{d(d-1)/4} ∏_{j=1}^{d} Γ((2c + 1 - j)/2)``, evaluated entirely
    in the log domain so it never overflows for d up to several hundred.
    """
    if int(d) != d or d < 1:
        raise ParameterDomainError("dimension d must be a positive integer")
    d = int(d)
    args = (2.0 * float(c) + 1.0 - np.arange(1, d + 1)) / 2.0
    if args[-1] <= 0.0:
        raise ParameterDomainError(
            f"generalized Gamma pole: need (2c+1-d)/2 > 0, got c={c}, d={d}"
        )
    return float(d * (d - 1) / 4.0 * math.log(math.pi) + gammaln(args).sum())


class MvNormalDensity:
    """Multivariate normal log-density with a cached factorization.

    Factor once per (mean, cov) pair, then evaluate against arbitrarily many
    points; this is the object the samplers keep per component per sweep.
    """

    def __init__(self, mean, *, cov=None, prec_chol=None):
        self.mean = np.asarray(mean, dtype=float).ravel()
        d = self.mean.size
        if (cov is None) == (prec_chol is None):
            raise ParameterDomainError("provide exactly one of cov or prec_chol")
        if cov is not None:
            cov = np.atleast_2d(np.asarray(cov, dtype=float))
            if cov.shape != (d, d):
                raise ParameterDomainError("cov must be d x d")
            self._cov_chol = cholesky_spd(cov)
            self._prec_chol = None
            self._logdet_cov = 2.0 * np.log(np.diag(self._cov_chol)).sum()
        else:
            prec_chol = np.atleast_2d(np.asarray(prec_chol, dtype=float))
            if prec_chol.shape != (d, d):
                raise ParameterDomainError("prec_chol must be d x d")
            self._cov_chol = None
            self._prec_chol = prec_chol
            self._logdet_cov = -2.0 * np.log(np.diag(prec_chol)).sum()

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def logdet_cov(self) -> float:
        return float(self._logdet_cov)

    def logpdf(self, y) -> np.ndarray | float:
        """Exact log-density at ``y`` (a d-vector or an (m, d) batch)."""
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        diff = np.atleast_2d(y) - self.mean
        if diff.shape[1] != self.d:
            raise ParameterDomainError("points must have the density's dimension")
        if self._prec_chol is not None:
            t = diff @ self._prec_chol
        else:
            t = sla.solve_triangular(self._cov_chol, diff.T, lower=True).T
        quad = np.einsum("ij,ij->i", t, t)
        out = -0.5 * (self.d * LN_2PI + self._logdet_cov + quad)
        return float(out[0]) if single else out


def logpdf_mvnormal(y, mean, cov):
    """Log-density of N(mean, cov) at y; factorizes ``cov`` on every call.

    Evaluating one (mean, cov) pair against many points should go through
    :class:`MvNormalDensity`, which caches the factorization.
    """
    return MvNormalDensity(mean, cov=cov).logpdf(y)


def logpdf_wishart(P, params: WishartParams) -> float:
    """Log-density of the rate-parametrized Wishart at the SPD matrix ``P``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    d = params.d
    if P.shape != (d, d):
        raise ParameterDomainError("P must match the dimension of the parameters")
    c = params.c
    sign_P, logdet_P = np.linalg.slogdet(P)
    sign_C, logdet_C = np.linalg.slogdet(params.C)
    if sign_P <= 0 or sign_C <= 0:
        raise NotPositiveDefiniteError("Wishart density needs SPD argument and rate")
    return float(
        c * logdet_C
        - lngamma_d(d, c)
        + (c - (d + 1) / 2.0) * logdet_P
        - np.trace(params.C @ P)
    )
