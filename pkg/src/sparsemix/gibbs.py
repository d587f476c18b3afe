"""Gibbs engine for finite multivariate Gaussian mixtures.

One sweep runs, in this fixed order: allocations, weights, means, component
precisions, hyperparameters, and (optionally) a uniform random permutation of
the labels. Components that are empty in the current allocation draw their
parameters from the conditional prior, which is what lets a sparse overfitted
mixture empty its redundant components.

Trace persistence: one CSV file per chain. Header lines (prefixed ``#``) carry
the format version, the config hash, and a JSON meta record. The documented
column order is::

    sweep, w_1..w_G, mu_1_1..mu_1_d, ..., mu_G_1..mu_G_d,
    logdet_1..logdet_G, n_1..n_G, g_plus

where ``logdet_g`` is the log-determinant of the g-th covariance and ``g_plus``
the number of non-empty components. Allocations, covariance diagonals, and the
optional full covariance dump go to deterministic ``.npy`` sidecars next to the
CSV (``<stem>.alloc.npy``, ``<stem>.covdiag.npy``, ``<stem>.covs.npy``).
"""

from __future__ import annotations

import hashlib
import json
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .dataset import DataSet
from .priors import (
    FixedCovPrior,
    HierarchicalCovPrior,
    MeanPriorSpec,
    PriorConfig,
    build_cov_prior,
    build_mean_prior,
)
from .rngdist import (
    LN_2PI,
    NumericalFailureError,
    ParameterDomainError,
    RngStream,
    WishartParams,
    cholesky_spd,
    logpdf_wishart,
    sample_dirichlet,
    sample_gig,
    sample_wishart,
    sample_wishart_factor,
)

TRACE_FORMAT = "sparsemix-trace v1"


class ChainFailure(RuntimeError):
    """A sweep aborted; the state snapshot at the failing sweep is on disk."""

    def __init__(self, sweep: int, snapshot_path, message: str):
        super().__init__(f"sweep {sweep}: {message} (state snapshot: {snapshot_path})")
        self.sweep = sweep
        self.snapshot_path = snapshot_path


@dataclass
class MixtureState:
    """All parameters of one Gibbs sweep plus the allocation statistics.

    Precisions are stored through their lower Cholesky factors; the factors are
    what the allocation step consumes, so densities never re-factorize.
    ``counts`` and ``comp_sums`` (n_g and n_g * ybar_g) are kept consistent with
    ``z`` by every step that touches either.
    """

    weights: np.ndarray      # (G,)
    means: np.ndarray        # (G, d)
    prec_chol: np.ndarray    # (G, d, d) lower factors of the precisions
    logdet_prec: np.ndarray  # (G,)
    z: np.ndarray            # (n,) component index per observation
    counts: np.ndarray       # (G,)
    comp_sums: np.ndarray    # (G, d)
    b0: np.ndarray           # (d,)
    C0: np.ndarray           # (d, d) current Wishart rate
    lam: np.ndarray          # (d,)

    @property
    def G(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def g_plus(self) -> int:
        return int((self.counts > 0).sum())

    def precisions(self) -> np.ndarray:
        return np.einsum("gij,gkj->gik", self.prec_chol, self.prec_chol)

    def covariances(self) -> np.ndarray:
        out = np.empty_like(self.prec_chol)
        eye = np.eye(self.d)
        for g in range(self.G):
            inv = solve_triangular(self.prec_chol[g], eye, lower=True)
            out[g] = inv.T @ inv
        return out

    def cov_diagonals(self) -> np.ndarray:
        out = np.empty((self.G, self.d))
        eye = np.eye(self.d)
        for g in range(self.G):
            inv = solve_triangular(self.prec_chol[g], eye, lower=True)
            out[g] = (inv ** 2).sum(axis=0)
        return out

    def logdet_covs(self) -> np.ndarray:
        return -self.logdet_prec


@dataclass(frozen=True)
class InitSpec:
    """How the chain starts: k-means allocations, a prior draw, or user labels."""

    kind: str
    allocations: np.ndarray | None = None
    restarts: int = 10

    @classmethod
    def kmeans(cls, restarts: int = 10) -> "InitSpec":
        return cls(kind="kmeans", restarts=restarts)

    @classmethod
    def prior(cls) -> "InitSpec":
        return cls(kind="prior")

    @classmethod
    def from_allocations(cls, z) -> "InitSpec":
        return cls(kind="allocations", allocations=np.asarray(z, dtype=int))


@dataclass
class RunOptions:
    permute: bool = False
    record_allocations: bool = True
    record_cov_diag: bool = True
    dump_covariances: bool = False
    trace_path: Path | str | None = None
    progress_every: int = 0
    progress_stream: object = None
    label: str = "chain"


def step_allocations(rng: RngStream, state: MixtureState, data: DataSet) -> None:
    """Redraw every allocation from its categorical full conditional.

    Log-weights ln eta_g + ln N(y_i; mu_g, Sigma_g) are normalized per row by
    max subtraction; the cached precision factors are reused, so this step
    performs no factorizations and costs O(n G d^2).
    """
    Y = data.y
    n, d = Y.shape
    G = state.G
    logw = np.empty((n, G))
    with np.errstate(divide="ignore"):
        log_eta = np.log(state.weights)
    for g in range(G):
        diff = Y - state.means[g]
        t = diff @ state.prec_chol[g]
        quad = np.einsum("ij,ij->i", t, t)
        logw[:, g] = log_eta[g] + 0.5 * state.logdet_prec[g] - 0.5 * (d * LN_2PI + quad)
    top = logw.max(axis=1)
    dead = ~np.isfinite(top)
    if dead.any():
        i = int(np.flatnonzero(dead)[0])
        raise NumericalFailureError(
            f"all component log-densities are -inf for observation {i}"
        )
    p = np.exp(logw - top[:, None])
    p /= p.sum(axis=1)[:, None]
    u = rng.generator.random(n)
    z = (np.cumsum(p, axis=1) < u[:, None]).sum(axis=1)
    np.minimum(z, G - 1, out=z)
    state.z = z
    _refresh_stats(state, Y)


def _refresh_stats(state: MixtureState, Y: np.ndarray) -> None:
    G = state.G
    state.counts = np.bincount(state.z, minlength=G)
    sums = np.empty((G, Y.shape[1]))
    for g in range(G):
        sums[g] = Y[state.z == g].sum(axis=0)
    state.comp_sums = sums


def step_weights(rng: RngStream, counts, e0: float) -> np.ndarray:
    """Dirichlet(e0 + n_1, ..., e0 + n_G) draw of the mixture weights."""
    counts = np.asarray(counts, dtype=float).ravel()
    return sample_dirichlet(rng, e0 + counts)


def step_means(rng: RngStream, state: MixtureState, data: DataSet, mean_prior: MeanPriorSpec) -> None:
    """Conjugate normal update of every component mean.

    Posterior covariance (B0^{-1} + n_g P_g)^{-1} and mean
    cov (B0^{-1} b0 + P_g n_g ybar_g); empty components draw from N(b0, B0).
    """
    gen = rng.generator
    d = state.d
    b0_prec = 1.0 / (state.lam * mean_prior.ranges ** 2)
    prior_sd = np.sqrt(1.0 / b0_prec)
    for g in range(state.G):
        if state.counts[g] == 0:
            state.means[g] = state.b0 + prior_sd * gen.standard_normal(d)
            continue
        L = state.prec_chol[g]
        P = L @ L.T
        Q = np.diag(b0_prec) + state.counts[g] * P
        LQ = cholesky_spd(Q)
        rhs = b0_prec * state.b0 + P @ state.comp_sums[g]
        mean = cho_solve((LQ, True), rhs)
        zeta = gen.standard_normal(d)
        state.means[g] = mean + solve_triangular(LQ, zeta, lower=True, trans="T")


def step_covariances(rng: RngStream, state: MixtureState, data: DataSet, cov_prior) -> None:
    """Conjugate Wishart update of every component precision.

    P_g ~ Wishart(c0 + n_g/2, C0 + scatter_g/2) with scatter around the current
    mean; empty components draw from Wishart(c0, C0). The freshly drawn
    precision is factorized once and cached for the next allocation step.
    """
    c0 = _shape_c0(cov_prior)
    Y = data.y
    for g in range(state.G):
        if state.counts[g] > 0:
            diff = Y[state.z == g] - state.means[g]
            rate = state.C0 + 0.5 * (diff.T @ diff)
        else:
            rate = state.C0
        L = sample_wishart_factor(rng, WishartParams(c=c0 + 0.5 * state.counts[g], C=rate))
        state.prec_chol[g] = L
        state.logdet_prec[g] = 2.0 * np.log(np.diag(L)).sum()


def _shape_c0(cov_prior) -> float:
    if isinstance(cov_prior, FixedCovPrior):
        return cov_prior.params.c
    if isinstance(cov_prior, HierarchicalCovPrior):
        return cov_prior.c0
    raise ParameterDomainError("unknown covariance prior spec")


def step_hypers(rng: RngStream, state: MixtureState, mean_prior: MeanPriorSpec, cov_prior) -> None:
    """Update (b0, lambda, C0) where the configuration makes them random.

    b0 | mu ~ N(mean(mu_g), B0/G) under the improper flat prior; lambda_l gets
    its GIG full conditional when shrinkage is enabled; C0 gets its Wishart
    conditional only in hierarchical mode (the trace and determinant priors fix
    C0). Update order: b0, lambda, C0.
    """
    gen = rng.generator
    G, d = state.G, state.d
    if mean_prior.update_b0:
        b0_var = state.lam * mean_prior.ranges ** 2 / G
        state.b0 = state.means.mean(axis=0) + np.sqrt(b0_var) * gen.standard_normal(d)
    if mean_prior.shrinkage == "gamma":
        dev2 = ((state.means - state.b0) ** 2 / mean_prior.ranges ** 2).sum(axis=0)
        p = mean_prior.nu1 - 0.5 * G
        state.lam = np.asarray(sample_gig(rng, p, 2.0 * mean_prior.nu2, dev2))
    if isinstance(cov_prior, HierarchicalCovPrior):
        prec_sum = state.precisions().sum(axis=0)
        state.C0 = sample_wishart(
            rng,
            WishartParams(c=cov_prior.g0 + G * cov_prior.c0, C=cov_prior.G0 + prec_sum),
        )


def step_permute(rng: RngStream, state: MixtureState) -> None:
    """Relabel all components by a uniformly random permutation.

    Weights, means, precisions, allocations and the cached statistics are
    permuted consistently, so the posterior density value is unchanged.
    """
    G = state.G
    perm = rng.generator.permutation(G)
    inverse = np.empty(G, dtype=int)
    inverse[perm] = np.arange(G)
    state.weights = state.weights[perm]
    state.means = state.means[perm]
    state.prec_chol = state.prec_chol[perm]
    state.logdet_prec = state.logdet_prec[perm]
    state.counts = state.counts[perm]
    state.comp_sums = state.comp_sums[perm]
    state.z = inverse[state.z]


def lloyd_kmeans(rng: RngStream, points, k: int, restarts: int = 10, max_iter: int = 100):
    """Plain Lloyd k-means with random-point initialization.

    Runs ``restarts`` times and keeps the solution with the smallest
    within-cluster sum of squares; ties go to the lowest restart index. Empty
    clusters are repaired by moving the point farthest from its assigned
    center (ties to the lowest point index).

    Returns (labels, centers, wcss).
    """
    X = np.asarray(points, dtype=float)
    n = X.shape[0]
    if k < 1 or k > n:
        raise ParameterDomainError(f"k must lie in [1, n]; got k={k}, n={n}")
    gen = rng.generator
    sq = (X ** 2).sum(axis=1)
    best = None
    for _ in range(restarts):
        centers = X[gen.choice(n, size=k, replace=False)].copy()
        labels = None
        for _ in range(max_iter):
            d2 = sq[:, None] - 2.0 * (X @ centers.T) + (centers ** 2).sum(axis=1)[None, :]
            new_labels = d2.argmin(axis=1)
            own = d2[np.arange(n), new_labels]
            for g in range(k):
                if not np.any(new_labels == g):
                    far = int(own.argmax())
                    new_labels[far] = g
                    own[far] = 0.0
            if labels is not None and np.array_equal(labels, new_labels):
                break
            labels = new_labels
            for g in range(k):
                centers[g] = X[labels == g].mean(axis=0)
        wcss = float(((X - centers[labels]) ** 2).sum())
        if best is None or wcss < best[2]:
            best = (labels.copy(), centers.copy(), wcss)
    return best


def log_unnormalized_posterior(state: MixtureState, data: DataSet, e0: float,
                               mean_prior: MeanPriorSpec, cov_prior) -> float:
    """Unnormalized log-posterior of the completed model at the current state.

    Complete-data likelihood plus the kernels of every prior that is active in
    the configuration (the flat b0 prior contributes nothing). Symmetric under
    any relabeling, which the permutation step test relies on.
    """
    Y = data.y
    total = 0.0
    for g in range(state.G):
        if state.counts[g] == 0:
            continue
        diff = Y[state.z == g] - state.means[g]
        t = diff @ state.prec_chol[g]
        quad = np.einsum("ij,ij->i", t, t).sum()
        total += state.counts[g] * 0.5 * (state.logdet_prec[g] - state.d * LN_2PI) - 0.5 * quad
    with np.errstate(divide="ignore"):
        log_eta = np.log(state.weights)
        total += float((state.counts * np.where(state.counts > 0, log_eta, 0.0)).sum())
        total += float((e0 - 1.0) * log_eta.sum())
    var = state.lam * mean_prior.ranges ** 2
    dev2 = (state.means - state.b0) ** 2 / var
    total += float(-0.5 * (dev2.sum() + state.G * (np.log(2.0 * math.pi * var)).sum()))
    c0 = _shape_c0(cov_prior)
    wp = WishartParams(c=c0, C=state.C0)
    for g in range(state.G):
        L = state.prec_chol[g]
        total += logpdf_wishart(L @ L.T, wp)
    if isinstance(cov_prior, HierarchicalCovPrior):
        total += logpdf_wishart(state.C0, WishartParams(c=cov_prior.g0, C=cov_prior.G0))
    if mean_prior.shrinkage == "gamma":
        total += float(
            ((mean_prior.nu1 - 1.0) * np.log(state.lam) - mean_prior.nu2 * state.lam).sum()
        )
    return total


@dataclass
class ChainTrace:
    """Per-sweep records of one chain, with optional sidecar payloads."""

    sweeps: np.ndarray        # (T,) absolute sweep indices (burn-in included in count)
    weights: np.ndarray       # (T, G)
    means: np.ndarray         # (T, G, d)
    logdet_covs: np.ndarray   # (T, G)
    counts: np.ndarray        # (T, G)
    g_plus: np.ndarray        # (T,)
    meta: dict
    config_hash: str
    allocations: np.ndarray | None = None   # (T, n) int16
    cov_diag: np.ndarray | None = None      # (T, G, d)
    covariances: np.ndarray | None = None   # (T, G, d, d)

    @property
    def n_records(self) -> int:
        return self.sweeps.size

    @property
    def G(self) -> int:
        return self.weights.shape[1]

    @property
    def d(self) -> int:
        return self.means.shape[2]

    def save(self, path) -> Path:
        path = Path(path)
        writer = _TraceWriter(path, self.meta, self.config_hash, self.G, self.d)
        for i in range(self.n_records):
            writer.write_row(
                int(self.sweeps[i]), self.weights[i], self.means[i],
                self.logdet_covs[i], self.counts[i], int(self.g_plus[i]),
            )
        writer.close()
        _save_sidecars(path, self.allocations, self.cov_diag, self.covariances)
        return path

    @classmethod
    def load(cls, path) -> "ChainTrace":
        path = Path(path)
        meta = {}
        config_hash = ""
        skip = 0
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                skip += 1
                body = line[1:].strip()
                if body.startswith("config_hash="):
                    config_hash = body.split("=", 1)[1]
                elif body.startswith("meta="):
                    meta = json.loads(body.split("=", 1)[1])
        raw = np.loadtxt(path, delimiter=",", skiprows=skip + 1, ndmin=2)
        G, d = int(meta["G"]), int(meta["d"])
        cols = np.split(raw, np.cumsum([1, G, G * d, G, G]), axis=1)
        sweeps, weights, means, logdets, counts, g_plus = cols
        trace = cls(
            sweeps=sweeps.ravel().astype(int),
            weights=weights,
            means=means.reshape(-1, G, d),
            logdet_covs=logdets,
            counts=counts.astype(int),
            g_plus=g_plus.ravel().astype(int),
            meta=meta,
            config_hash=config_hash,
        )
        alloc = path.with_suffix(".alloc.npy")
        covdiag = path.with_suffix(".covdiag.npy")
        covs = path.with_suffix(".covs.npy")
        if alloc.exists():
            trace.allocations = np.load(alloc)
        if covdiag.exists():
            trace.cov_diag = np.load(covdiag)
        if covs.exists():
            trace.covariances = np.load(covs)
        return trace

    @classmethod
    def concatenate(cls, traces) -> "ChainTrace":
        """Pool records of replicate chains over the same data and model."""
        traces = list(traces)
        if not traces:
            raise ParameterDomainError("no traces to concatenate")
        first = traces[0]
        for t in traces[1:]:
            if t.G != first.G or t.d != first.d:
                raise ParameterDomainError("traces have mismatched shapes")
        opt = {}
        for name in ("allocations", "cov_diag", "covariances"):
            parts = [getattr(t, name) for t in traces]
            opt[name] = np.concatenate(parts) if all(p is not None for p in parts) else None
        meta = dict(first.meta)
        meta["pooled_chains"] = len(traces)
        return cls(
            sweeps=np.concatenate([t.sweeps for t in traces]),
            weights=np.concatenate([t.weights for t in traces]),
            means=np.concatenate([t.means for t in traces]),
            logdet_covs=np.concatenate([t.logdet_covs for t in traces]),
            counts=np.concatenate([t.counts for t in traces]),
            g_plus=np.concatenate([t.g_plus for t in traces]),
            meta=meta,
            config_hash=first.config_hash,
            **opt,
        )


class _TraceWriter:
    def __init__(self, path: Path, meta: dict, config_hash: str, G: int, d: int):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w")
        self._fh.write(f"# {TRACE_FORMAT}\n")
        self._fh.write(f"# config_hash={config_hash}\n")
        self._fh.write(f"# meta={json.dumps(meta, sort_keys=True)}\n")
        header = (
            ["sweep"]
            + [f"w_{g + 1}" for g in range(G)]
            + [f"mu_{g + 1}_{l + 1}" for g in range(G) for l in range(d)]
            + [f"logdet_{g + 1}" for g in range(G)]
            + [f"n_{g + 1}" for g in range(G)]
            + ["g_plus"]
        )
        self._fh.write(",".join(header) + "\n")

    def write_row(self, sweep, weights, means, logdets, counts, g_plus):
        parts = [str(sweep)]
        parts += [repr(float(v)) for v in weights]
        parts += [repr(float(v)) for v in means.ravel()]
        parts += [repr(float(v)) for v in logdets]
        parts += [str(int(v)) for v in counts]
        parts.append(str(int(g_plus)))
        self._fh.write(",".join(parts) + "\n")

    def close(self):
        self._fh.close()


def _save_sidecars(path: Path, allocations, cov_diag, covariances):
    if allocations is not None:
        np.save(path.with_suffix(".alloc.npy"), allocations)
    if cov_diag is not None:
        np.save(path.with_suffix(".covdiag.npy"), cov_diag)
    if covariances is not None:
        np.save(path.with_suffix(".covs.npy"), covariances)


def config_fingerprint(**fields) -> str:
    """sha256 over a canonical JSON rendering of the run configuration."""
    return hashlib.sha256(
        json.dumps(fields, sort_keys=True, default=str).encode()
    ).hexdigest()


def data_fingerprint(data: DataSet) -> str:
    return hashlib.sha256(np.ascontiguousarray(data.y).tobytes()).hexdigest()


def run_chain(rng: RngStream, data: DataSet, prior: PriorConfig, init: InitSpec,
              T: int, burn_in: int, options: RunOptions | None = None) -> ChainTrace:
    """Run one chain for ``burn_in + T`` sweeps and record the last ``T``.

    Any failure inside a sweep aborts with :class:`ChainFailure` carrying the
    sweep index and the path of a serialized state snapshot. With a
    ``trace_path`` set, rows are written to the CSV as they are produced.
    """
    if T <= 0 or burn_in < 0:
        raise ParameterDomainError("need T > 0 and burn_in >= 0")
    options = options or RunOptions()
    mean_spec = build_mean_prior(prior, data)
    cov_spec = build_cov_prior(prior, data)

    from dataclasses import asdict

    meta = {
        "G": prior.G_max,
        "d": data.d,
        "n": data.n,
        "T": T,
        "burn_in": burn_in,
        "seed": rng.seed,
        "stream_id": rng.stream_id,
        "permute": options.permute,
        "init": init.kind,
        "prior": asdict(prior),
        "data_sha256": data_fingerprint(data),
        "format": TRACE_FORMAT,
    }
    config_hash = config_fingerprint(**meta)

    state = _initial_state(rng, data, prior, mean_spec, cov_spec, init)

    writer = None
    trace_path = Path(options.trace_path) if options.trace_path is not None else None
    if trace_path is not None:
        writer = _TraceWriter(trace_path, meta, config_hash, state.G, state.d)

    rec_sweeps, rec_w, rec_mu, rec_ld, rec_n, rec_gp = [], [], [], [], [], []
    rec_z, rec_cd, rec_cov = [], [], []
    total = burn_in + T
    t = 0
    try:
        for t in range(1, total + 1):
            step_allocations(rng, state, data)
            state.weights = step_weights(rng, state.counts, prior.e0)
            step_means(rng, state, data, mean_spec)
            step_covariances(rng, state, data, cov_spec)
            step_hypers(rng, state, mean_spec, cov_spec)
            if options.permute:
                step_permute(rng, state)
            if t > burn_in:
                rec_sweeps.append(t)
                rec_w.append(state.weights.copy())
                rec_mu.append(state.means.copy())
                rec_ld.append(state.logdet_covs().copy())
                rec_n.append(state.counts.copy())
                rec_gp.append(state.g_plus)
                if options.record_allocations:
                    rec_z.append(state.z.astype(np.int16))
                if options.record_cov_diag:
                    rec_cd.append(state.cov_diagonals())
                if options.dump_covariances:
                    rec_cov.append(state.covariances())
                if writer is not None:
                    writer.write_row(t, rec_w[-1], rec_mu[-1], rec_ld[-1], rec_n[-1], rec_gp[-1])
            if options.progress_every and options.progress_stream is not None:
                if t % options.progress_every == 0 or t == total:
                    print(f"{options.label}: sweep {t}/{total}", file=options.progress_stream)
    except Exception as exc:
        if writer is not None:
            writer.close()
        snap = _snapshot_state(state, t, trace_path)
        raise ChainFailure(t, snap, str(exc)) from exc

    trace = ChainTrace(
        sweeps=np.asarray(rec_sweeps, dtype=int),
        weights=np.asarray(rec_w),
        means=np.asarray(rec_mu),
        logdet_covs=np.asarray(rec_ld),
        counts=np.asarray(rec_n, dtype=int),
        g_plus=np.asarray(rec_gp, dtype=int),
        meta=meta,
        config_hash=config_hash,
        allocations=np.asarray(rec_z, dtype=np.int16) if rec_z else None,
        cov_diag=np.asarray(rec_cd) if rec_cd else None,
        covariances=np.asarray(rec_cov) if rec_cov else None,
    )
    if writer is not None:
        writer.close()
        _save_sidecars(trace_path, trace.allocations, trace.cov_diag, trace.covariances)
    return trace


def _snapshot_state(state: MixtureState, sweep: int, trace_path: Path | None) -> Path:
    if trace_path is not None:
        snap = trace_path.with_suffix(".failed.npz")
    else:
        fd, name = tempfile.mkstemp(prefix="sparsemix-failed-", suffix=".npz")
        import os

        os.close(fd)
        snap = Path(name)
    np.savez(
        snap,
        sweep=sweep,
        weights=state.weights,
        means=state.means,
        prec_chol=state.prec_chol,
        z=state.z,
        b0=state.b0,
        C0=state.C0,
        lam=state.lam,
    )
    return snap


def _initial_state(rng: RngStream, data: DataSet, prior: PriorConfig,
                   mean_spec: MeanPriorSpec, cov_spec, init: InitSpec) -> MixtureState:
    """Build the pre-sweep state.

    From an initial classification (k-means or user labels) the parameters come
    from one conditional half-sweep: weights ~ D(e0 + n), precisions from their
    Wishart conditional with the group means plugged in, then the means from
    their own conditional. A prior init draws every parameter from the prior
    and lets the first allocation step produce z.
    """
    Y = data.y
    n, d = Y.shape
    G = prior.G_max
    gen = rng.generator
    b0 = mean_spec.b0.copy()
    lam = mean_spec.lam0.copy()
    if isinstance(cov_spec, HierarchicalCovPrior):
        C0 = sample_wishart(rng, WishartParams(c=cov_spec.g0, C=cov_spec.G0))
    else:
        C0 = cov_spec.params.C.copy()

    state = MixtureState(
        weights=np.full(G, 1.0 / G),
        means=np.zeros((G, d)),
        prec_chol=np.zeros((G, d, d)),
        logdet_prec=np.zeros(G),
        z=np.zeros(n, dtype=int),
        counts=np.zeros(G, dtype=int),
        comp_sums=np.zeros((G, d)),
        b0=b0,
        C0=C0,
        lam=lam,
    )

    if init.kind == "prior":
        state.weights = sample_dirichlet(rng, np.full(G, prior.e0))
        prior_sd = np.sqrt(lam * mean_spec.ranges ** 2)
        state.means = b0 + prior_sd * gen.standard_normal((G, d))
        c0 = _shape_c0(cov_spec)
        for g in range(G):
            L = sample_wishart_factor(rng, WishartParams(c=c0, C=C0))
            state.prec_chol[g] = L
            state.logdet_prec[g] = 2.0 * np.log(np.diag(L)).sum()
        _refresh_stats(state, Y)
        return state

    if init.kind == "kmeans":
        z0, _, _ = lloyd_kmeans(rng, Y, G, restarts=init.restarts)
    elif init.kind == "allocations":
        z0 = np.asarray(init.allocations, dtype=int)
        if z0.shape != (n,):
            raise ParameterDomainError("initial allocations must have one entry per row")
        if z0.min() < 0 or z0.max() >= G:
            raise ParameterDomainError(f"initial allocations must lie in [0, {G - 1}]")
    else:
        raise ParameterDomainError(f"unknown init kind {init.kind!r}")

    state.z = z0
    _refresh_stats(state, Y)
    state.weights = step_weights(rng, state.counts, prior.e0)
    for g in range(G):
        state.means[g] = state.comp_sums[g] / state.counts[g] if state.counts[g] else b0
    step_covariances(rng, state, data, cov_spec)
    step_means(rng, state, data, mean_spec)
    return state


def run_univariate_demo(rng: RngStream, data, eta: float, sigma2: float, T: int,
                        burn_in: int = 0, mu_init=None, prior_var: float | None = None) -> np.ndarray:
    """Two-mean demonstration sampler with known variance and fixed weights.

    Alternates the closed-form conditionals of the model
    eta N(mu_1, sigma2) + (1 - eta) N(mu_2, sigma2) with N(0, prior_var) priors
    on both means (prior_var defaults to 10 sigma2, the textbook setup whose
    posterior precision contributes the familiar 0.1 term). Returns the (T, 2)
    array of (mu_1, mu_2) draws after burn-in.
    """
    y = np.asarray(data.y if isinstance(data, DataSet) else data, dtype=float).ravel()
    n = y.size
    if not 0.0 <= eta <= 1.0:
        raise ParameterDomainError("eta must lie in [0, 1]")
    if sigma2 <= 0.0 or T <= 0 or burn_in < 0:
        raise ParameterDomainError("need sigma2 > 0, T > 0, burn_in >= 0")
    v0 = 10.0 * sigma2 if prior_var is None else float(prior_var)
    prior_prec = sigma2 / v0
    gen = rng.generator
    if mu_init is None:
        mu = gen.normal(0.0, math.sqrt(v0), size=2)
    else:
        mu = np.asarray(mu_init, dtype=float).copy()
    out = np.empty((T, 2))
    with np.errstate(divide="ignore"):
        log_eta1 = np.log(eta)
        log_eta2 = np.log1p(-eta)
    for t in range(burn_in + T):
        if n:
            la = log_eta1 - (y - mu[0]) ** 2 / (2.0 * sigma2)
            lb = log_eta2 - (y - mu[1]) ** 2 / (2.0 * sigma2)
            with np.errstate(over="ignore"):
                p1 = 1.0 / (1.0 + np.exp(lb - la))
            in_1 = gen.random(n) < p1
            n1 = int(in_1.sum())
            s1 = float(y[in_1].sum())
            stats = ((n1, s1), (n - n1, float(y.sum()) - s1))
        else:
            stats = ((0, 0.0), (0, 0.0))
        denom = np.array([prior_prec + stats[0][0], prior_prec + stats[1][0]])
        loc = np.array([stats[0][1], stats[1][1]]) / denom
        mu = gen.normal(loc, np.sqrt(sigma2 / denom))
        if t >= burn_in:
            out[t - burn_in] = mu
    return out
