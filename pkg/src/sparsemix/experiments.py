"""Desk-scale experiment protocols behind the table replication command.

Reference values the runs are compared against are frozen here; the scale
factor / overlap tables are deterministic and checked exactly (to rounding),
the sampling experiments are reduced-scale reruns reported side by side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gibbs import InitSpec, RngStream, RunOptions, run_chain
from .postproc import adjusted_rand, count_nonempty, map_partition, relabel_pointprocess
from .priors import CovPriorConfig, MeanPriorConfig, PriorConfig, default_c0, phi_det
from .synthdata import ScenarioSpec, overlap, simulate_scenario

# phi_det for c0 = 2.5 + (d-1)/2, by expected determinant criterion then dimension.
REFERENCE_PHI_DET = {
    0.50: {2: 1.225, 4: 1.831, 50: 11.09, 100: 20.55, 150: 29.90, 200: 39.22},
    0.67: {2: 0.995, 4: 1.651, 50: 11.00, 100: 20.46, 150: 29.82, 200: 39.14},
    0.75: {2: 0.866, 4: 1.540, 50: 10.94, 100: 20.41, 150: 29.77, 200: 39.08},
    0.90: {2: 0.548, 4: 1.225, 50: 10.74, 100: 20.22, 150: 29.59, 200: 38.90},
}
PHI_DET_TOL = 0.005

# Overlap of the all-ones and all-fours components at tau=1 by dimension,
# with the absolute/relative tolerance used for the comparison.
REFERENCE_OVERLAP = {
    2: (0.034, ("abs", 1e-3)),
    4: (0.003, ("abs", 5e-4)),
    100: (7.34e-51, ("rel", 0.02)),
    200: (7.21e-100, ("rel", 0.02)),
}
# The d=50 entry of the source table is inconsistent with the closed form that
# reproduces every other row (which gives ~2.8e-26); it is reported as flagged
# and never matched.
FLAGGED_OVERLAP = {50: 2.48e-6}

# Full-scale clustering results the desk-scale reruns are printed against:
# (g_tilde, g_tilde frequency out of 100, g_hat, adjusted Rand).
REFERENCE_CLUSTERING = {
    (50, 1000): (3, 100, 3.0, 1.00),
    (100, 100): (3, 100, 3.0, 1.00),
    (2, 100): (2, 93, 2.0, 0.45),
}


def phi_det_table() -> list[tuple[float, int, float, float, bool]]:
    """(r2, d, computed, reference, ok) for every reference cell."""
    rows = []
    for r2, by_d in REFERENCE_PHI_DET.items():
        for d, ref in by_d.items():
            got = phi_det(r2, default_c0(d), d)
            rows.append((r2, d, got, ref, abs(got - ref) <= PHI_DET_TOL))
    return rows


def overlap_table() -> list[tuple[int, float, float | None, bool | None]]:
    """(d, computed, reference or None, ok or None-for-flagged) rows."""
    rows = []
    for d in sorted(set(REFERENCE_OVERLAP) | set(FLAGGED_OVERLAP)):
        got = overlap(1.0, 4.0, 1.0, d=d)
        if d in REFERENCE_OVERLAP:
            ref, (kind, tol) = REFERENCE_OVERLAP[d]
            ok = abs(got - ref) <= tol if kind == "abs" else abs(got - ref) <= tol * ref
            rows.append((d, got, ref, ok))
        else:
            rows.append((d, got, FLAGGED_OVERLAP[d], None))
    return rows


def hierarchical_prior(G_max: int, e0: float) -> PriorConfig:
    """The full shrinkage hierarchy with the Wishart hyperprior on C0."""
    return PriorConfig(
        G_max=G_max,
        e0=e0,
        mean=MeanPriorConfig(shrinkage="gamma"),
        cov=CovPriorConfig(mode="hierarchical"),
    )


def determinant_prior(G_max: int, e0: float, r2: float = 0.5) -> PriorConfig:
    """Determinant-criterion prior with the shrinkage factor fixed at 1."""
    return PriorConfig(
        G_max=G_max,
        e0=e0,
        mean=MeanPriorConfig(shrinkage="fixed", lam=1.0),
        cov=CovPriorConfig(mode="determinant", r2=r2),
    )


@dataclass
class StuckResult:
    """Outcome of the high-dimensional stuck-sampler run."""

    change_fraction: float     # fraction of sweeps whose count vector moved
    g_plus_min: int
    g_plus_max: int
    g_tilde: int


def run_stuck_experiment(seed: int = 11, *, d: int = 50, n: int = 100, G_max: int = 10,
                         e0: float = 0.01, T: int = 2000) -> StuckResult:
    """Hierarchical prior, k-means(G_max) start, small n in high dimension.

    Records every sweep (no burn-in) so the count trajectory can be compared
    with the starting classification.
    """
    data, _ = simulate_scenario(ScenarioSpec(d=d, n=n, seed=seed))
    prior = hierarchical_prior(G_max, e0)
    trace = run_chain(
        RngStream(seed), data, prior, InitSpec.kmeans(), T=T, burn_in=0,
        options=RunOptions(record_allocations=False, record_cov_diag=False),
    )
    counts = trace.counts
    moved = np.any(counts[1:] != counts[:-1], axis=1)
    stats = count_nonempty(trace)
    return StuckResult(
        change_fraction=float(moved.mean()),
        g_plus_min=int(trace.g_plus.min()),
        g_plus_max=int(trace.g_plus.max()),
        g_tilde=stats.mode,
    )


@dataclass
class CellResult:
    """One dataset's outcome inside a clustering cell."""

    g_tilde: int
    g_hat: float
    r_a: float | None


def run_clustering_cell(d: int, n: int, *, n_datasets: int = 5, T: int = 2000,
                        burn_in: int = 200, G_max: int = 30, e0: float = 0.01,
                        r2: float = 0.5, seed: int = 7,
                        progress_stream=None) -> list[CellResult]:
    """Determinant-prior clustering runs on fresh scenario datasets.

    One chain per dataset; the number of clusters is the modal non-empty count
    and the adjusted Rand index compares the relabeled modal partition against
    the simulated labels.
    """
    results = []
    prior = determinant_prior(G_max, e0, r2)
    for rep in range(n_datasets):
        data, labels = simulate_scenario(ScenarioSpec(d=d, n=n, seed=seed + 1000 * rep))
        trace = run_chain(
            RngStream(seed, stream_id=rep), data, prior, InitSpec.kmeans(),
            T=T, burn_in=burn_in,
            options=RunOptions(
                record_cov_diag=False,
                progress_every=500 if progress_stream is not None else 0,
                progress_stream=progress_stream,
                label=f"cell d={d} n={n} dataset={rep}",
            ),
        )
        stats = count_nonempty(trace)
        r_a = None
        try:
            relab = relabel_pointprocess(trace, stats.mode)
            partition = map_partition(
                trace, sweep_indices=relab.retained_sweeps, permutations=relab.to_centroid
            )
            r_a = adjusted_rand(labels, partition)
        except Exception:
            pass
        results.append(CellResult(g_tilde=stats.mode, g_hat=stats.mean, r_a=r_a))
    return results


def run_known_count_replicates(*, d: int = 50, n: int = 5000, G_max: int = 10,
                               e0: float = 1e-4, T: int = 1000, burn_in: int = 100,
                               n_replicates: int = 3, seed: int = 23,
                               progress_stream=None) -> list[int]:
    """Large-n hierarchical-prior replicates; returns the modal count per chain."""
    data, _ = simulate_scenario(ScenarioSpec(d=d, n=n, seed=seed))
    prior = hierarchical_prior(G_max, e0)
    modes = []
    for rep in range(n_replicates):
        trace = run_chain(
            RngStream(seed, stream_id=rep), data, prior, InitSpec.kmeans(),
            T=T, burn_in=burn_in,
            options=RunOptions(
                record_allocations=False, record_cov_diag=False,
                progress_every=200 if progress_stream is not None else 0,
                progress_stream=progress_stream,
                label=f"replicate {rep}",
            ),
        )
        modes.append(count_nonempty(trace).mode)
    return modes
