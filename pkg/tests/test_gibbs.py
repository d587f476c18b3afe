"""Gibbs engine tests: conditional updates against their closed forms, the
permutation step, sufficient-statistic consistency, determinism, trace
round-trips, and the univariate demo against the enumeration oracle."""

import math

import numpy as np
import pytest

from sparsemix.dataset import DataSet
from sparsemix.gibbs import (
    ChainFailure,
    ChainTrace,
    InitSpec,
    MixtureState,
    RunOptions,
    lloyd_kmeans,
    log_unnormalized_posterior,
    run_chain,
    run_univariate_demo,
    step_allocations,
    step_covariances,
    step_means,
    step_permute,
    step_weights,
)
from sparsemix.priors import (
    CovPriorConfig,
    MeanPriorConfig,
    PriorConfig,
    build_cov_prior,
    build_mean_prior,
)
from sparsemix.rngdist import NumericalFailureError, ParameterDomainError, RngStream
from sparsemix.synthdata import (
    ScenarioSpec,
    exact_two_mean_posterior,
    simulate_scenario,
    simulate_two_mean,
)


def small_problem(seed=0, d=2, n=120, G=3, cov_mode="determinant", shrinkage="fixed"):
    data, labels = simulate_scenario(ScenarioSpec(d=d, n=n, seed=seed))
    prior = PriorConfig(
        G_max=G,
        e0=1.0,
        mean=MeanPriorConfig(shrinkage=shrinkage),
        cov=CovPriorConfig(mode=cov_mode, r2=0.5),
    )
    return data, labels, prior


def make_state(rng, data, prior):
    mean_spec = build_mean_prior(prior, data)
    cov_spec = build_cov_prior(prior, data)
    from sparsemix.gibbs import _initial_state

    return _initial_state(rng, data, prior, mean_spec, cov_spec, InitSpec.kmeans()), mean_spec, cov_spec


class TestAllocations:
    def test_zero_weight_components_never_selected(self):
        data, _, prior = small_problem()
        state, _, _ = make_state(RngStream(1), data, prior)
        state.weights = np.array([1.0, 0.0, 0.0])
        step_allocations(RngStream(2), state, data)
        assert np.all(state.z == 0)
        assert state.counts[0] == data.n

    def test_identical_components_follow_weights(self):
        data, _, prior = small_problem(n=60)
        state, _, _ = make_state(RngStream(3), data, prior)
        state.means[:] = data.y.mean(axis=0)
        state.prec_chol[:] = np.eye(data.d)
        state.logdet_prec[:] = 0.0
        state.weights = np.array([0.2, 0.5, 0.3])
        rng = RngStream(4)
        picks = np.zeros(3)
        for _ in range(400):
            step_allocations(rng, state, data)
            picks += state.counts
        freq = picks / picks.sum()
        np.testing.assert_allclose(freq, state.weights, atol=0.01)

    def test_univariate_midpoint_probability(self):
        # two unit-variance components at 0 and 2.5, point at the midpoint:
        # the density cancels and P(z=1) equals the weight 0.7
        data = DataSet(np.array([1.25]))
        state = MixtureState(
            weights=np.array([0.7, 0.3]),
            means=np.array([[0.0], [2.5]]),
            prec_chol=np.ones((2, 1, 1)),
            logdet_prec=np.zeros(2),
            z=np.zeros(1, dtype=int),
            counts=np.array([1, 0]),
            comp_sums=np.array([[1.25], [0.0]]),
            b0=np.zeros(1),
            C0=np.eye(1),
            lam=np.ones(1),
        )
        rng = RngStream(5)
        hits = 0
        n_rep = 20_000
        for _ in range(n_rep):
            step_allocations(rng, state, data)
            hits += state.z[0] == 0
        assert abs(hits / n_rep - 0.7) < 3.0 * math.sqrt(0.21 / n_rep)

    def test_all_minus_inf_raises(self):
        data, _, prior = small_problem()
        state, _, _ = make_state(RngStream(6), data, prior)
        state.weights = np.zeros(3)
        with pytest.raises(NumericalFailureError, match="observation"):
            step_allocations(RngStream(7), state, data)


class TestWeights:
    def test_single_component(self):
        assert step_weights(RngStream(8), [17], 0.5).tolist() == [1.0]

    def test_zero_counts_is_prior_draw(self):
        a = step_weights(RngStream(9), [0, 0, 0], 2.0)
        b = RngStream(9).generator.dirichlet([2.0, 2.0, 2.0])
        np.testing.assert_allclose(a, b)

    def test_posterior_mean(self):
        rng = RngStream(10)
        counts = np.array([35, 20, 45])
        draws = np.array([step_weights(rng, counts, 0.01) for _ in range(100_000)])
        expect = (counts + 0.01) / (counts.sum() + 0.03)
        var = expect * (1.0 - expect) / (counts.sum() + 0.03 + 1.0)
        np.testing.assert_allclose(
            draws.mean(axis=0), expect, atol=3.0 * np.sqrt(var.max() / 100_000)
        )


class TestMeans:
    def test_empty_component_draws_from_prior(self):
        data, _, prior = small_problem()
        state, mean_spec, _ = make_state(RngStream(11), data, prior)
        state.counts[2] = 0
        rng = RngStream(12)
        draws = []
        for _ in range(40_000):
            step_means(rng, state, data, mean_spec)
            draws.append(state.means[2].copy())
        draws = np.array(draws)
        prior_var = mean_spec.lam0 * mean_spec.ranges ** 2
        np.testing.assert_allclose(
            draws.mean(axis=0), state.b0, atol=3.0 * np.sqrt(prior_var.max() / 40_000)
        )
        np.testing.assert_allclose(draws.var(axis=0, ddof=1), prior_var, rtol=0.05)

    def test_flat_prior_limit_matches_group_mean(self):
        # with huge prior variance the posterior mean approaches ybar_g and the
        # covariance approaches Sigma_g / n_g
        data, _, prior = small_problem(n=200)
        state, mean_spec, _ = make_state(RngStream(13), data, prior)
        big = MeanPriorSpecOverride(mean_spec, scale=1e8)
        g = 0
        ybar = state.comp_sums[g] / state.counts[g]
        rng = RngStream(14)
        draws = []
        for _ in range(20_000):
            step_means(rng, state, data, big)
            draws.append(state.means[g].copy())
        draws = np.array(draws)
        L = state.prec_chol[g]
        cov_g = np.linalg.inv(L @ L.T) / state.counts[g]
        np.testing.assert_allclose(
            draws.mean(axis=0), ybar, atol=3.0 * math.sqrt(cov_g.max() / 20_000) + 1e-4
        )
        np.testing.assert_allclose(draws.var(axis=0, ddof=1), np.diag(cov_g), rtol=0.06)

    def test_univariate_demo_update_closed_form(self):
        # posterior N(sum y / (0.1 + n), sigma2 / (0.1 + n)) under the demo prior
        y = np.array([0.4, -0.2, 1.1])
        rng = RngStream(15)
        draws = run_univariate_demo(rng, y, 1.0, 1.0, T=60_000)
        n, s = 3, y.sum()
        assert abs(draws[:, 0].mean() - s / (0.1 + n)) < 3.0 * math.sqrt(
            (1.0 / (0.1 + n)) / 60_000
        )
        assert np.allclose(draws[:, 0].var(ddof=1), 1.0 / (0.1 + n), rtol=0.05)


class MeanPriorSpecOverride:
    """Mean-prior view with inflated prior variance for the flat-prior limit."""

    def __init__(self, spec, scale):
        self.b0 = spec.b0
        self.update_b0 = spec.update_b0
        self.ranges = spec.ranges * scale
        self.shrinkage = spec.shrinkage
        self.lam0 = spec.lam0
        self.nu1 = spec.nu1
        self.nu2 = spec.nu2


class TestCovariances:
    def test_empty_component_prior_draw_mean(self):
        data, _, prior = small_problem()
        state, _, cov_spec = make_state(RngStream(16), data, prior)
        state.counts[1] = 0
        c0, C0 = cov_spec.params.c, state.C0
        rng = RngStream(17)
        acc = np.zeros((2, 2))
        n_rep = 30_000
        for _ in range(n_rep):
            step_covariances(rng, state, data, cov_spec)
            L = state.prec_chol[1]
            acc += L @ L.T
        mean = acc / n_rep
        expect = c0 * np.linalg.inv(C0)
        assert np.linalg.norm(mean - expect) < 0.05 * np.linalg.norm(expect)

    def test_d1_conjugate_gamma_update(self):
        # c0=2.5, C0=1, n=2, rss=4 -> Gamma(3.5, rate 3), mean 3.5/3
        y = np.array([[math.sqrt(2.0)], [-math.sqrt(2.0)]])
        data = DataSet(y)
        prior = PriorConfig(G_max=1, e0=1.0, cov=CovPriorConfig(mode="trace", r2=0.5))
        state = MixtureState(
            weights=np.ones(1),
            means=np.zeros((1, 1)),
            prec_chol=np.ones((1, 1, 1)),
            logdet_prec=np.zeros(1),
            z=np.zeros(2, dtype=int),
            counts=np.array([2]),
            comp_sums=np.array([[0.0]]),
            b0=np.zeros(1),
            C0=np.array([[1.0]]),
            lam=np.ones(1),
        )

        from sparsemix.priors import FixedCovPrior
        from sparsemix.rngdist import WishartParams

        cov_spec = FixedCovPrior(params=WishartParams(2.5, np.array([[1.0]])), phi=1.0, mode="trace")
        rng = RngStream(18)
        vals = []
        for _ in range(100_000):
            step_covariances(rng, state, data, cov_spec)
            L = state.prec_chol[0]
            vals.append((L @ L.T)[0, 0])
        vals = np.asarray(vals)
        mean, var = 3.5 / 3.0, 3.5 / 9.0
        assert abs(vals.mean() - mean) < 3.0 * math.sqrt(var / vals.size)

    def test_posterior_concentration_bernstein_von_mises(self):
        gen = RngStream(19).generator
        y = gen.standard_normal((10_000, 2))
        data = DataSet(y)
        prior = PriorConfig(G_max=1, e0=1.0, cov=CovPriorConfig(mode="determinant", r2=0.5))
        state, mean_spec, cov_spec = make_state(RngStream(20), data, prior)
        state.means[0] = y.mean(axis=0)
        rng = RngStream(21)
        acc = np.zeros((2, 2))
        for _ in range(300):
            step_covariances(rng, state, data, cov_spec)
            L = state.prec_chol[0]
            acc += np.linalg.inv(L @ L.T)
        mean = acc / 300
        assert np.linalg.norm(mean - np.eye(2)) < 0.05 * np.linalg.norm(np.eye(2))


class TestPermutation:
    def test_round_trip_and_posterior_invariance(self):
        data, _, prior = small_problem(shrinkage="gamma", cov_mode="hierarchical")
        state, mean_spec, cov_spec = make_state(RngStream(22), data, prior)
        before = log_unnormalized_posterior(state, data, prior.e0, mean_spec, cov_spec)
        snapshot = (state.weights.copy(), state.means.copy(), state.z.copy())
        for trial in range(30):
            step_permute(RngStream(100 + trial), state)
            after = log_unnormalized_posterior(state, data, prior.e0, mean_spec, cov_spec)
            assert after == pytest.approx(before, abs=1e-8)

    def test_statistics_stay_consistent(self):
        data, _, prior = small_problem()
        state, _, _ = make_state(RngStream(23), data, prior)
        step_permute(RngStream(24), state)
        counts = np.bincount(state.z, minlength=state.G)
        np.testing.assert_array_equal(counts, state.counts)
        for g in range(state.G):
            np.testing.assert_allclose(
                data.y[state.z == g].sum(axis=0), state.comp_sums[g], atol=1e-10
            )

    def test_label_occupancy_uniform(self):
        # on a symmetric posterior each component label visits each mode ~T/G! of the time
        data = simulate_two_mean(200, 0.5, -2.0, 2.0, 1.0, seed=5)
        prior = PriorConfig(G_max=2, e0=1.0, cov=CovPriorConfig(mode="trace", r2=0.5))
        trace = run_chain(
            RngStream(25), data, prior, InitSpec.kmeans(), T=4000, burn_in=200,
            options=RunOptions(permute=True, record_allocations=False, record_cov_diag=False),
        )
        frac_low_first = float((trace.means[:, 0, 0] < trace.means[:, 1, 0]).mean())
        assert abs(frac_low_first - 0.5) < 3.0 * math.sqrt(0.25 / trace.n_records) + 0.05


class TestSufficientStatistics:
    def test_consistency_after_every_sweep(self):
        data, _, prior = small_problem(shrinkage="gamma", cov_mode="hierarchical")
        mean_spec = build_mean_prior(prior, data)
        cov_spec = build_cov_prior(prior, data)
        from sparsemix.gibbs import _initial_state, step_hypers

        state, _, _ = make_state(RngStream(26), data, prior)
        rng = RngStream(27)
        for _ in range(25):
            step_allocations(rng, state, data)
            state.weights = step_weights(rng, state.counts, prior.e0)
            step_means(rng, state, data, mean_spec)
            step_covariances(rng, state, data, cov_spec)
            step_hypers(rng, state, mean_spec, cov_spec)
            step_permute(rng, state)
            counts = np.bincount(state.z, minlength=state.G)
            np.testing.assert_array_equal(counts, state.counts)
            for g in range(state.G):
                np.testing.assert_allclose(
                    data.y[state.z == g].sum(axis=0), state.comp_sums[g], atol=1e-10
                )


class TestRunChain:
    def test_trace_determinism_bytes(self, tmp_path):
        data, _, prior = small_problem()
        paths = []
        for run in range(2):
            p = tmp_path / f"run{run}" / "chain.csv"
            run_chain(
                RngStream(28), data, prior, InitSpec.kmeans(), T=50, burn_in=10,
                options=RunOptions(trace_path=p, dump_covariances=True),
            )
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        for side in (".alloc.npy", ".covdiag.npy", ".covs.npy"):
            a = paths[0].with_suffix(side).read_bytes()
            b = paths[1].with_suffix(side).read_bytes()
            assert a == b

    def test_trace_round_trip(self, tmp_path):
        data, _, prior = small_problem()
        p = tmp_path / "chain.csv"
        trace = run_chain(
            RngStream(29), data, prior, InitSpec.kmeans(), T=40, burn_in=5,
            options=RunOptions(trace_path=p, dump_covariances=True),
        )
        loaded = ChainTrace.load(p)
        np.testing.assert_allclose(loaded.weights, trace.weights, rtol=0, atol=0)
        np.testing.assert_allclose(loaded.means, trace.means, rtol=0, atol=0)
        np.testing.assert_allclose(loaded.logdet_covs, trace.logdet_covs, rtol=0, atol=0)
        np.testing.assert_array_equal(loaded.counts, trace.counts)
        np.testing.assert_array_equal(loaded.g_plus, trace.g_plus)
        np.testing.assert_array_equal(loaded.allocations, trace.allocations)
        np.testing.assert_allclose(loaded.cov_diag, trace.cov_diag)
        np.testing.assert_allclose(loaded.covariances, trace.covariances)
        assert loaded.config_hash == trace.config_hash
        assert loaded.meta["G"] == prior.G_max

    def test_g_plus_invariant(self):
        data, _, prior = small_problem(G=5)
        trace = run_chain(RngStream(30), data, prior, InitSpec.prior(), T=60, burn_in=0)
        assert np.all(trace.g_plus >= 1)
        assert np.all(trace.g_plus <= 5)
        np.testing.assert_array_equal(trace.g_plus, (trace.counts > 0).sum(axis=1))

    def test_init_modes_all_run(self):
        data, labels, prior = small_problem()
        for init in (InitSpec.kmeans(), InitSpec.prior(), InitSpec.from_allocations(labels)):
            trace = run_chain(RngStream(31), data, prior, init, T=20, burn_in=0)
            assert trace.n_records == 20

    def test_user_allocations_validated(self):
        data, labels, prior = small_problem()
        bad = labels.copy()
        bad[0] = 99
        with pytest.raises(ParameterDomainError):
            run_chain(RngStream(32), data, prior, InitSpec.from_allocations(bad), T=5, burn_in=0)

    def test_failure_snapshot(self, tmp_path):
        data, _, prior = small_problem()
        p = tmp_path / "chain.csv"

        class Boom(RuntimeError):
            pass

        import sparsemix.gibbs as gb

        orig = gb.step_covariances
        calls = {"n": 0}

        def exploding(rng, state, data, cov_prior):
            calls["n"] += 1
            if calls["n"] >= 8:
                raise Boom("synthetic failure")
            return orig(rng, state, data, cov_prior)

        gb.step_covariances = exploding
        try:
            with pytest.raises(ChainFailure) as err:
                run_chain(
                    RngStream(33), data, prior, InitSpec.kmeans(), T=50, burn_in=0,
                    options=RunOptions(trace_path=p),
                )
        finally:
            gb.step_covariances = orig
        assert err.value.sweep == 7  # one call consumed by initialization
        snap = np.load(err.value.snapshot_path)
        assert snap["weights"].shape == (3,)

    def test_allocation_step_never_factorizes(self, monkeypatch):
        data, _, prior = small_problem()
        state, _, _ = make_state(RngStream(34), data, prior)
        import sparsemix.gibbs as gb
        import sparsemix.rngdist as rd

        def forbidden(mat):
            raise AssertionError("allocation step must not factorize")

        monkeypatch.setattr(gb, "cholesky_spd", forbidden)
        monkeypatch.setattr(rd, "cholesky_spd", forbidden)
        step_allocations(RngStream(35), state, data)  # must not raise


class TestKmeans:
    def test_recovers_separated_clusters(self):
        data, labels, _ = small_problem(n=300, d=5)
        got, centers, wcss = lloyd_kmeans(RngStream(36), data.y, 3)
        from sparsemix.postproc import adjusted_rand

        assert adjusted_rand(labels, got) > 0.95
        assert wcss > 0

    def test_deterministic(self):
        data, _, _ = small_problem(n=150)
        a = lloyd_kmeans(RngStream(37), data.y, 4)
        b = lloyd_kmeans(RngStream(37), data.y, 4)
        np.testing.assert_array_equal(a[0], b[0])

    def test_k_must_fit(self):
        with pytest.raises(ParameterDomainError):
            lloyd_kmeans(RngStream(38), np.zeros((3, 1)), 5)

    def test_every_cluster_nonempty(self):
        gen = RngStream(39).generator
        pts = gen.normal(size=(40, 2))
        labels, _, _ = lloyd_kmeans(RngStream(40), pts, 10)
        assert np.unique(labels).size == 10


class TestUnivariateDemo:
    def test_no_data_gives_prior_draws(self):
        draws = run_univariate_demo(RngStream(41), np.empty(0), 0.7, 2.0, T=50_000)
        # prior N(0, 10 sigma2) on both means
        assert abs(draws[:, 0].mean()) < 3.0 * math.sqrt(20.0 / 50_000)
        assert draws[:, 1].var(ddof=1) == pytest.approx(20.0, rel=0.05)

    def test_matches_enumeration_oracle_small_n(self):
        y = simulate_two_mean(8, 0.7, 0.0, 2.5, 1.0, seed=6).y.ravel()
        exact = exact_two_mean_posterior(y, 0.7, 1.0, 10.0)
        draws = run_univariate_demo(RngStream(42), y, 0.7, 1.0, T=60_000, burn_in=1000)
        for g in range(2):
            se = batch_means_se(draws[:, g])
            assert abs(draws[:, g].mean() - exact.mean[g]) < 3.0 * se

    def test_symmetric_setup_is_exchangeable(self):
        y = np.array([-1.5, -0.5, 0.5, 1.5])
        draws = run_univariate_demo(RngStream(43), y, 0.5, 1.0, T=80_000)
        # swap symmetry of the joint: both margins share mean and spread
        assert abs(draws[:, 0].mean() - draws[:, 1].mean()) < 0.05
        assert abs(draws[:, 0].std() - draws[:, 1].std()) < 0.05

    def test_stuck_at_inverted_mode(self):
        # started at the swapped labeling the chain stays there for the whole run
        data = simulate_two_mean(500, 0.7, 0.0, 2.5, 1.0, seed=7)
        draws = run_univariate_demo(
            RngStream(44), data, 0.7, 1.0, T=2000, mu_init=(2.5, 0.0)
        )
        assert np.all(draws[:, 0] > draws[:, 1])


def batch_means_se(x, n_batches=50):
    """Standard error of an autocorrelated mean via batch means."""
    x = np.asarray(x)
    usable = (x.size // n_batches) * n_batches
    batches = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return batches.std(ddof=1) / math.sqrt(n_batches)
