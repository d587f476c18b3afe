"""Post-processing tests: count statistics, adjusted Rand oracle and
properties, relabeling invariances, and the modal partition."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsemix.gibbs import ChainTrace, InitSpec, RunOptions, run_chain
from sparsemix.postproc import (
    NoQualifyingSweepsError,
    adjusted_rand,
    count_nonempty,
    map_partition,
    relabel_pointprocess,
    replicate_count_stats,
    summarize_chains,
)
from sparsemix.priors import CovPriorConfig, MeanPriorConfig, PriorConfig
from sparsemix.rngdist import ParameterDomainError, RngStream
from sparsemix.synthdata import ScenarioSpec, simulate_scenario, simulate_two_mean


def synthetic_trace(g_plus_seq, G=4, d=2, n=10, with_alloc=False):
    """Hand-built trace whose counts realize the given G+ sequence."""
    T = len(g_plus_seq)
    counts = np.zeros((T, G), dtype=int)
    for t, k in enumerate(g_plus_seq):
        counts[t, :k] = n // k
        counts[t, 0] += n - (n // k) * k
    weights = counts / n
    means = np.zeros((T, G, d))
    alloc = None
    if with_alloc:
        alloc = np.zeros((T, n), dtype=np.int16)
        for t, k in enumerate(g_plus_seq):
            alloc[t] = np.repeat(np.arange(G), np.maximum(counts[t], 0))[:n]
    return ChainTrace(
        sweeps=np.arange(1, T + 1),
        weights=weights,
        means=means,
        logdet_covs=np.zeros((T, G)),
        counts=counts,
        g_plus=np.asarray(g_plus_seq),
        meta={"G": G, "d": d, "n": n},
        config_hash="test",
        allocations=alloc,
    )


class TestCountNonempty:
    def test_all_full_every_sweep(self):
        trace = synthetic_trace([4] * 9)
        stats = count_nonempty(trace)
        assert stats.mode == 4 and stats.mode_frequency == 9

    def test_hand_built_sequence(self):
        stats = count_nonempty(synthetic_trace([3, 3, 2, 3]))
        assert stats.mode == 3
        assert stats.mode_frequency == 3
        assert stats.mean == pytest.approx(2.75)

    def test_mode_tie_takes_smaller(self):
        stats = count_nonempty(synthetic_trace([2, 3, 2, 3]))
        assert stats.mode == 2

    def test_replicate_min_max(self):
        traces = [synthetic_trace([3, 3, 3]), synthetic_trace([2, 2, 4])]
        stats = replicate_count_stats(traces)
        assert stats.replicate_min == 2 and stats.replicate_max == 3


class TestAdjustedRand:
    def test_identical_partitions(self):
        assert adjusted_rand([0, 1, 1, 2], [5, 9, 9, 7]) == pytest.approx(1.0)

    def test_one_cluster_vs_singletons(self):
        n = 8
        assert adjusted_rand(np.zeros(n), np.arange(n)) == pytest.approx(0.0)

    def test_brute_force_pair_counts_oracle(self):
        a = [1, 1, 2, 2, 2]
        b = [1, 1, 1, 2, 2]

        def brute(a, b):
            pairs = list(itertools.combinations(range(len(a)), 2))
            ss = sum(1 for i, j in pairs if (a[i] == a[j]) and (b[i] == b[j]))
            s_a = sum(1 for i, j in pairs if a[i] == a[j])
            s_b = sum(1 for i, j in pairs if b[i] == b[j])
            total = len(pairs)
            expected = s_a * s_b / total
            max_index = 0.5 * (s_a + s_b)
            return (ss - expected) / (max_index - expected)

        got = adjusted_rand(a, b)
        assert got == pytest.approx(brute(a, b), rel=1e-12)
        assert got == pytest.approx(1.0 / 6.0, abs=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(ParameterDomainError):
            adjusted_rand([0, 1], [0, 1, 2])

    @given(
        st.lists(st.integers(0, 4), min_size=2, max_size=60),
        st.data(),
    )
    @settings(max_examples=150, deadline=None)
    def test_symmetry_and_relabel_invariance(self, a, data):
        b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
        a = np.asarray(a)
        b = np.asarray(b)
        assert adjusted_rand(a, b) == pytest.approx(adjusted_rand(b, a), rel=1e-12)
        shuffle = np.array([3, 0, 4, 1, 2])
        assert adjusted_rand(shuffle[a], b) == pytest.approx(adjusted_rand(a, b), rel=1e-12)
        assert adjusted_rand(a, a) == pytest.approx(1.0)


def fitted_trace(permute=False, seed=50, n=240, d=2, T=400, tau=1.0):
    data, labels = simulate_scenario(ScenarioSpec(d=d, n=n, seed=seed, tau=tau))
    prior = PriorConfig(
        G_max=4, e0=0.05,
        mean=MeanPriorConfig(shrinkage="fixed"),
        cov=CovPriorConfig(mode="determinant", r2=0.5),
    )
    trace = run_chain(
        RngStream(seed), data, prior, InitSpec.kmeans(), T=T, burn_in=100,
        options=RunOptions(permute=permute),
    )
    return trace, labels


class TestRelabel:
    def test_no_switching_identity_permutations(self):
        trace, _ = fitted_trace(permute=False)
        target = count_nonempty(trace).mode
        relab = relabel_pointprocess(trace, target)
        assert relab.valid_fraction == pytest.approx(1.0)
        # without label switching the naive per-label means already agree
        retained = relab.retained_sweeps
        for k in range(target):
            comp_ids = [m.tolist().index(k) for m in relab.to_centroid if m is not None]
            assert len(set(comp_ids)) == 1  # identity up to a fixed relabeling

    def test_permuted_trace_recovers_components(self):
        # with the random permutation step the naive label means collapse to the
        # overall average while the identified means stay distinct
        trace, _ = fitted_trace(permute=True, T=800)
        target = count_nonempty(trace).mode
        relab = relabel_pointprocess(trace, target)
        naive_spread = np.linalg.norm(
            trace.means.mean(axis=0) - trace.means.mean(axis=(0, 1)), axis=1
        ).max()
        identified_spread = np.linalg.norm(
            relab.means_mean - relab.means_mean.mean(axis=0), axis=1
        ).max()
        assert identified_spread > 4.0 * naive_spread
        assert relab.valid_fraction > 0.95

    def test_output_invariant_under_global_permutation(self):
        trace, _ = fitted_trace(permute=False)
        target = count_nonempty(trace).mode
        base = relabel_pointprocess(trace, target)

        perm = np.array([2, 0, 3, 1])
        permuted = ChainTrace(
            sweeps=trace.sweeps,
            weights=trace.weights[:, perm],
            means=trace.means[:, perm],
            logdet_covs=trace.logdet_covs[:, perm],
            counts=trace.counts[:, perm],
            g_plus=trace.g_plus,
            meta=trace.meta,
            config_hash=trace.config_hash,
            allocations=None,
            cov_diag=None if trace.cov_diag is None else trace.cov_diag[:, perm],
        )
        other = relabel_pointprocess(permuted, target)
        # identified moments agree up to centroid ordering
        order_a = np.lexsort(base.means_mean.T)
        order_b = np.lexsort(other.means_mean.T)
        np.testing.assert_allclose(
            base.means_mean[order_a], other.means_mean[order_b], atol=1e-8
        )
        np.testing.assert_allclose(
            base.weights_mean[order_a], other.weights_mean[order_b], atol=1e-10
        )

    def test_no_qualifying_sweeps(self):
        trace = synthetic_trace([2, 2, 3])
        with pytest.raises(NoQualifyingSweepsError):
            relabel_pointprocess(trace, 4)


class TestMapPartition:
    def test_single_sweep_returns_that_allocation(self):
        trace = synthetic_trace([3], with_alloc=True)
        np.testing.assert_array_equal(map_partition(trace), trace.allocations[0])

    def test_tie_goes_to_lowest_label(self):
        trace = synthetic_trace([2, 2], with_alloc=True)
        trace.allocations[0, :] = 0
        trace.allocations[1, :] = 1
        assert np.all(map_partition(trace) == 0)

    def test_requires_allocations(self):
        trace = synthetic_trace([2, 2], with_alloc=False)
        with pytest.raises(ParameterDomainError):
            map_partition(trace)

    def test_agrees_with_sweeps_on_stable_chain(self):
        # well-separated components: every sweep's allocation matches the mode
        trace, labels = fitted_trace(permute=False, tau=0.1)
        part = map_partition(trace)
        agree = (trace.allocations == part[None, :]).mean(axis=1)
        assert agree.mean() > 0.99


class TestSummaries:
    def test_summarize_chains_end_to_end(self):
        trace, labels = fitted_trace(permute=False)
        summary = summarize_chains([trace], true_labels=labels)
        assert summary["g_tilde"] == 3
        # the d=2, tau=1 components overlap; even a perfect classifier sits near 0.75
        assert summary["adjusted_rand"] > 0.6
        assert summary["identified"]["valid_permutation_fraction"] > 0.95
        assert len(summary["identified"]["weights_mean"]) == summary["g_target"]

    def test_identified_means_near_truth(self):
        spec = ScenarioSpec(d=5, n=400, seed=77)
        data, labels = simulate_scenario(spec)
        prior = PriorConfig(
            G_max=6, e0=0.01, cov=CovPriorConfig(mode="determinant", r2=0.5)
        )
        trace = run_chain(RngStream(78), data, prior, InitSpec.kmeans(), T=600, burn_in=150)
        relab = relabel_pointprocess(trace, 3)
        true_means = spec.component_means()
        pairing = min(
            itertools.permutations(range(3)),
            key=lambda p: np.linalg.norm(relab.means_mean[list(p)] - true_means),
        )
        err = np.abs(relab.means_mean[list(pairing)] - true_means)
        sd = np.maximum(relab.means_sd[list(pairing)], 1e-6)
        # identified posterior means sit within a few posterior SDs of truth
        assert np.all(err < 5.0 * sd + 0.05)
