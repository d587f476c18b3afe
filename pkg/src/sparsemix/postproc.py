"""Turn raw traces into identified estimates: non-empty-cluster counts,
point-process relabeling, adjusted Rand index, and summary tables."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .gibbs import ChainTrace, lloyd_kmeans
from .rngdist import ParameterDomainError, RngStream, cholesky_spd

RIDGE_REL = 1e-8


class NoQualifyingSweepsError(ValueError):
    """The trace has no sweep with the requested number of non-empty components."""


@dataclass
class ClusterCountStats:
    """Summary of the per-sweep non-empty-component counts G+."""

    g_plus: np.ndarray
    mode: int                 # most frequent G+ (ties resolved to the smallest)
    mode_frequency: int
    mean: float
    replicate_min: int | None = None
    replicate_max: int | None = None


def count_nonempty(trace: ChainTrace) -> ClusterCountStats:
    """Mode, frequency and mean of the non-empty-cluster count of one chain."""
    g_plus = np.asarray(trace.g_plus, dtype=int)
    if g_plus.size == 0:
        raise ParameterDomainError("trace has no recorded sweeps")
    values, freq = np.unique(g_plus, return_counts=True)
    order = np.argmax(freq)  # unique() sorts ascending, so ties pick the smallest
    return ClusterCountStats(
        g_plus=g_plus,
        mode=int(values[order]),
        mode_frequency=int(freq[order]),
        mean=float(g_plus.mean()),
    )


def replicate_count_stats(traces) -> ClusterCountStats:
    """Pooled count stats across replicate chains, with the min/max of the
    per-replicate modal counts (the Table-5.1 style aggregate)."""
    per_chain = [count_nonempty(t) for t in traces]
    pooled = count_nonempty(ChainTrace.concatenate(list(traces)))
    pooled.replicate_min = min(s.mode for s in per_chain)
    pooled.replicate_max = max(s.mode for s in per_chain)
    return pooled


def adjusted_rand(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index of two partitions.

    Symmetric, invariant under relabeling either argument, 1 iff the
    partitions coincide up to relabeling. The degenerate case where both
    partitions are a single block (or both all singletons) returns 1.0.
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ParameterDomainError("partitions must have equal length")
    n = a.size
    if n == 0:
        raise ParameterDomainError("partitions are empty")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    ka, kb = ia.max() + 1, ib.max() + 1
    cont = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(cont, (ia, ib), 1)

    def comb2(x):
        x = np.asarray(x, dtype=float)
        return x * (x - 1.0) / 2.0

    sum_cells = comb2(cont).sum()
    sum_rows = comb2(cont.sum(axis=1)).sum()
    sum_cols = comb2(cont.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


@dataclass
class RelabeledSummary:
    """Identified component estimates after point-process relabeling.

    ``to_centroid[s]`` maps component index -> centroid index for retained
    sweep ``s`` (-1 for that sweep's empty components); it is None for sweeps
    whose assignment was not a permutation.
    """

    centroids: np.ndarray            # (G_target, d)
    weights_mean: np.ndarray         # (G_target,)
    weights_sd: np.ndarray
    means_mean: np.ndarray           # (G_target, d)
    means_sd: np.ndarray
    cov_diag_mean: np.ndarray | None
    cov_diag_sd: np.ndarray | None
    retained_sweeps: np.ndarray      # indices into the trace records
    to_centroid: list                # per retained sweep
    valid_fraction: float


def _mahalanobis_sq(points, center, cov):
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    ridge = RIDGE_REL * float(np.mean(np.diag(cov)))
    for _ in range(40):
        try:
            lower = cholesky_spd(cov + ridge * np.eye(d) if ridge else cov)
            break
        except Exception:
            ridge = max(ridge * 10.0, 1e-12)
    else:
        lower = np.eye(d)
    t = solve_triangular(lower, (points - center).T, lower=True).T
    return np.einsum("ij,ij->i", t, t)


def relabel_pointprocess(trace: ChainTrace, G_target: int, *, seed: int = 0,
                         max_iter: int = 50) -> RelabeledSummary:
    """Identify components by clustering the pooled sweep means into G_target
    centroids.

    Sweeps with exactly G_target non-empty components are retained; their
    non-empty component means are pooled and clustered with a Euclidean
    k-means warm start followed by two Mahalanobis refinement passes (distances
    under the re-estimated within-centroid covariances). Each retained sweep's
    components are then assigned to their nearest centroid; sweeps whose
    assignment is not a permutation are excluded from the identified moments
    and reported through ``valid_fraction``.
    """
    g_plus = np.asarray(trace.g_plus, dtype=int)
    retained = np.flatnonzero(g_plus == G_target)
    if retained.size == 0:
        raise NoQualifyingSweepsError(
            f"no sweep has exactly {G_target} non-empty components"
        )
    d = trace.d
    rows = []
    row_sweep = []
    row_comp = []
    for s in retained:
        comps = np.flatnonzero(trace.counts[s] > 0)
        rows.append(trace.means[s, comps])
        row_sweep.extend([s] * comps.size)
        row_comp.extend(comps.tolist())
    pooled = np.vstack(rows)
    row_sweep = np.asarray(row_sweep)
    row_comp = np.asarray(row_comp)

    euclid_iter = max(max_iter - 2, 1)
    labels, centers, _ = lloyd_kmeans(
        RngStream(seed), pooled, G_target, restarts=10, max_iter=euclid_iter
    )
    covs = [np.eye(d)] * G_target
    for _ in range(2):
        covs = []
        for k in range(G_target):
            members = pooled[labels == k]
            if members.shape[0] < 2:
                covs.append(np.eye(d))
                continue
            centers[k] = members.mean(axis=0)
            covs.append(np.atleast_2d(np.cov(members, rowvar=False, ddof=1)))
        d2 = np.column_stack(
            [_mahalanobis_sq(pooled, centers[k], covs[k]) for k in range(G_target)]
        )
        labels = d2.argmin(axis=1)

    d2 = np.column_stack(
        [_mahalanobis_sq(pooled, centers[k], covs[k]) for k in range(G_target)]
    )
    nearest = d2.argmin(axis=1)

    has_cov = trace.cov_diag is not None
    w_acc = [[] for _ in range(G_target)]
    m_acc = [[] for _ in range(G_target)]
    c_acc = [[] for _ in range(G_target)]
    to_centroid = []
    n_valid = 0
    for s in retained:
        sel = row_sweep == s
        comps = row_comp[sel]
        assign = nearest[sel]
        if np.unique(assign).size != G_target:
            to_centroid.append(None)
            continue
        n_valid += 1
        mapping = np.full(trace.G, -1, dtype=int)
        mapping[comps] = assign
        to_centroid.append(mapping)
        for comp, k in zip(comps, assign):
            w_acc[k].append(trace.weights[s, comp])
            m_acc[k].append(trace.means[s, comp])
            if has_cov:
                c_acc[k].append(trace.cov_diag[s, comp])

    if n_valid == 0:
        raise NoQualifyingSweepsError(
            "no retained sweep produced a one-to-one centroid assignment"
        )

    weights_mean = np.array([np.mean(w) for w in w_acc])
    weights_sd = np.array([np.std(w, ddof=1) if len(w) > 1 else 0.0 for w in w_acc])
    means_mean = np.vstack([np.mean(m, axis=0) for m in m_acc])
    means_sd = np.vstack(
        [np.std(m, axis=0, ddof=1) if len(m) > 1 else np.zeros(d) for m in m_acc]
    )
    if has_cov:
        cov_mean = np.vstack([np.mean(c, axis=0) for c in c_acc])
        cov_sd = np.vstack(
            [np.std(c, axis=0, ddof=1) if len(c) > 1 else np.zeros(d) for c in c_acc]
        )
    else:
        cov_mean = cov_sd = None
    return RelabeledSummary(
        centroids=centers,
        weights_mean=weights_mean,
        weights_sd=weights_sd,
        means_mean=means_mean,
        means_sd=means_sd,
        cov_diag_mean=cov_mean,
        cov_diag_sd=cov_sd,
        retained_sweeps=retained,
        to_centroid=to_centroid,
        valid_fraction=n_valid / retained.size,
    )


def map_partition(trace: ChainTrace, *, sweep_indices=None, permutations=None) -> np.ndarray:
    """Modal allocation per observation across (a subset of) recorded sweeps.

    ``permutations`` (as produced by :func:`relabel_pointprocess`) aligns the
    labels of each sweep before voting; sweeps with a None permutation are
    skipped. Ties resolve to the lowest label.
    """
    if trace.allocations is None:
        raise ParameterDomainError("trace was recorded without allocations")
    if sweep_indices is None:
        sweep_indices = np.arange(trace.allocations.shape[0])
    sweep_indices = np.asarray(sweep_indices, dtype=int)
    n = trace.allocations.shape[1]
    votes = np.zeros((n, trace.G), dtype=np.int64)
    used = 0
    for j, s in enumerate(sweep_indices):
        z = trace.allocations[s].astype(int)
        if permutations is not None:
            perm = permutations[j]
            if perm is None:
                continue
            z = perm[z]
        used += 1
        np.add.at(votes, (np.arange(n), z), 1)
    if used == 0:
        raise NoQualifyingSweepsError("no sweep available for the modal partition")
    return votes.argmax(axis=1)


def summarize_chains(traces, true_labels=None, g_target: int | None = None,
                     relabel_seed: int = 0) -> dict:
    """One JSON-ready summary of a set of replicate chains.

    Pools every chain's records, estimates the number of clusters by the modal
    G+, relabels at that (or the given) target, computes the modal partition
    and, when true labels are supplied, the adjusted Rand index against them.
    """
    traces = list(traces)
    pooled = ChainTrace.concatenate(traces) if len(traces) > 1 else traces[0]
    stats = replicate_count_stats(traces)
    target = int(g_target) if g_target is not None else stats.mode
    summary = {
        "n_chains": len(traces),
        "n_records": int(pooled.n_records),
        "g_tilde": stats.mode,
        "g_tilde_frequency": stats.mode_frequency,
        "g_hat": stats.mean,
        "replicate_g_tilde_min": stats.replicate_min,
        "replicate_g_tilde_max": stats.replicate_max,
        "g_plus_histogram": {
            int(v): int(c) for v, c in zip(*np.unique(pooled.g_plus, return_counts=True))
        },
        "g_target": target,
        "config_hash": pooled.config_hash,
    }
    try:
        relab = relabel_pointprocess(pooled, target, seed=relabel_seed)
    except NoQualifyingSweepsError as exc:
        summary["relabel_error"] = str(exc)
        return summary
    summary["identified"] = {
        "valid_permutation_fraction": relab.valid_fraction,
        "weights_mean": relab.weights_mean.tolist(),
        "weights_sd": relab.weights_sd.tolist(),
        "means_mean": relab.means_mean.tolist(),
        "means_sd": relab.means_sd.tolist(),
    }
    if relab.cov_diag_mean is not None:
        summary["identified"]["cov_diag_mean"] = relab.cov_diag_mean.tolist()
        summary["identified"]["cov_diag_sd"] = relab.cov_diag_sd.tolist()
    if pooled.allocations is not None:
        partition = map_partition(
            pooled, sweep_indices=relab.retained_sweeps, permutations=relab.to_centroid
        )
        summary["map_partition_sizes"] = np.bincount(partition, minlength=target).tolist()
        if true_labels is not None:
            summary["adjusted_rand"] = adjusted_rand(true_labels, partition)
    return summary


def write_summary_json(path, summary: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def write_counts_table_csv(path, rows) -> Path:
    """Rows (T, n, min_g_tilde, max_g_tilde) in the fixed-count experiment layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("T,n,min_G_hat,max_G_hat\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return path


def write_clustering_table_csv(path, rows) -> Path:
    """Rows (d, n, phi_det, g_tilde, g_tilde_freq, g_hat, r_a) per cell."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("d,n,phi_det,G_tilde,G_tilde_freq,G_hat,adjusted_rand\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return path
