import math

import numpy as np
import pytest
from scipy import stats

from priorbnn import mcmc, network, priors
from priorbnn.errors import ConfigError, DataFormatError, NumericalError
from priorbnn.mcmc import McmcConfig, effective_sample_size, propose, run_chain, run_mh
from priorbnn.network import NetworkArchitecture
from priorbnn.priors import PriorSpec


def flat_prior(w):
    return 0.0


class TestConfig:
    def test_field_validation(self):
        with pytest.raises(ConfigError):
            McmcConfig(iterations=0)
        with pytest.raises(ConfigError):
            McmcConfig(iterations=100, burn_in=100)
        with pytest.raises(ConfigError):
            McmcConfig(iterations=100, thinning=0)
        with pytest.raises(ConfigError):
            McmcConfig(iterations=100, update_fraction=0.0)
        with pytest.raises(ConfigError):
            McmcConfig(iterations=100, mode="bogus")

    def test_zero_retained_samples_rejected(self):
        with pytest.raises(ConfigError):
            McmcConfig(iterations=100, burn_in=60, thinning=50)

    def test_retained_count_arithmetic(self):
        cfg = McmcConfig(iterations=1000, burn_in=500, thinning=50)
        assert cfg.n_retained == 10


class TestPropose:
    def test_zero_window_is_identity(self, rng):
        cfg = McmcConfig(iterations=10, proposal_window=0.0, update_fraction=1.0)
        current = rng.standard_normal(20)
        np.testing.assert_array_equal(propose(current, cfg, rng), current)

    def test_subset_size(self, rng):
        cfg = McmcConfig(iterations=10, proposal_window=0.5, update_fraction=0.05)
        current = np.zeros(100)
        prop = propose(current, cfg, rng)
        assert np.sum(prop != current) == 5

    def test_symmetry_monte_carlo(self, rng):
        # Oracle: additive U(-d, d) perturbations have zero mean.
        cfg = McmcConfig(iterations=10, proposal_window=0.1, update_fraction=1.0)
        current = np.zeros(10)
        total = np.zeros(10)
        n = 10_000
        for _ in range(n):
            total += propose(current, cfg, rng)
        assert np.all(np.abs(total / n) < 0.003)


class TestMhStep:
    def _state(self, arch, prior, X, y, rng):
        w = priors.sample_prior(prior, arch.n_weights, rng)
        return mcmc.ChainState(
            weights=w,
            log_prior=priors.log_prior(prior, w),
            log_lik=network.log_likelihood(arch, w, X, y),
        )

    def test_uphill_proposal_always_accepted(self, rng):
        # With a huge window most proposals move; track that every accepted
        # move with higher target was indeed accepted by re-running steps.
        arch = NetworkArchitecture(2, (2, 2), 2)
        prior = PriorSpec("normal")
        X = rng.standard_normal((8, 2))
        y = rng.integers(0, 2, 8)
        cfg = McmcConfig(iterations=10, proposal_window=0.3, update_fraction=1.0,
                         mode="posterior")
        state = self._state(arch, prior, X, y, rng)
        accepted_uphill = 0
        for _ in range(200):
            new = mcmc.mh_step(state, X, y, arch, prior, cfg, rng)
            delta = (new.log_prior + new.log_lik) - (state.log_prior + state.log_lik)
            moved = new.accept_count > state.accept_count
            if moved and delta > 0:
                accepted_uphill += 1
            state = new
        assert accepted_uphill > 0  # uphill moves occur and are kept

    def test_out_of_support_always_rejected(self, rng):
        # Uniform prior with weights near the bound and a window that pushes
        # outside: any out-of-bound proposal gets log-prior -inf -> reject.
        arch = NetworkArchitecture(2, (2, 2), 2)
        prior = PriorSpec("uniform", bound=1.0)
        X = rng.standard_normal((5, 2))
        y = rng.integers(0, 2, 5)
        cfg = McmcConfig(iterations=10, proposal_window=5.0, update_fraction=1.0,
                         mode="prior-only")
        w = np.full(arch.n_weights, 0.999)
        state = mcmc.ChainState(weights=w, log_prior=priors.log_prior(prior, w),
                                log_lik=0.0)
        for _ in range(100):
            new = mcmc.mh_step(state, X, y, arch, prior, cfg, rng)
            if new.accept_count > state.accept_count:
                assert np.all(np.abs(new.weights) <= 1.0)
            state = new

    def test_prior_only_never_evaluates_likelihood(self, rng):
        arch = NetworkArchitecture(2, (2, 2), 2)
        prior = PriorSpec("normal")
        cfg = McmcConfig(iterations=10, proposal_window=0.2, mode="prior-only")
        w = priors.sample_prior(prior, arch.n_weights, rng)
        state = mcmc.ChainState(weights=w, log_prior=priors.log_prior(prior, w),
                                log_lik=0.0)
        # Poisoned data would crash any likelihood evaluation.
        new = mcmc.mh_step(state, None, None, arch, prior, cfg, rng)
        assert new.iteration == 1

    def test_nan_log_prior_raises(self, rng):
        cfg = McmcConfig(iterations=10, proposal_window=0.1, update_fraction=1.0,
                         mode="prior-only")
        state = mcmc.ChainState(weights=np.zeros(3), log_prior=0.0, log_lik=0.0)
        with pytest.raises(NumericalError):
            mcmc.run_mh(lambda w: math.nan, None, np.zeros(3), cfg,
                        np.random.default_rng(0))

    def test_plug_in_standard_normal_target(self):
        # Oracle: a 1-D MH chain with flat prior and N(0,1) "likelihood"
        # must recover the analytic moments.
        cfg = McmcConfig(iterations=200_000, burn_in=20_000, thinning=10,
                         proposal_window=2.0, update_fraction=1.0,
                         mode="posterior", seed=5)
        rng = np.random.default_rng(5)
        result = run_mh(flat_prior, lambda w: -0.5 * float(w @ w),
                        np.zeros(1), cfg, rng)
        samples = result.weights[:, 0]
        assert abs(samples.mean()) < 0.02 or abs(samples.mean()) < 3 * samples.std() / math.sqrt(
            effective_sample_size(samples))
        assert samples.var() == pytest.approx(1.0, abs=0.05)


class TestRunChain:
    def test_sample_count_arithmetic(self, rng):
        arch = NetworkArchitecture(2, (2, 2), 2)
        cfg = McmcConfig(iterations=1000, burn_in=500, thinning=50,
                         mode="prior-only", seed=3)
        trace = run_chain(None, None, arch, PriorSpec("normal"), cfg)
        assert trace.n_samples == 10
        assert list(trace.iterations) == list(range(550, 1001, 50))

    def test_same_seed_bit_identical(self, rng):
        arch = NetworkArchitecture(3, (3, 2), 2)
        X = rng.standard_normal((10, 3))
        y = rng.integers(0, 2, 10)
        cfg = McmcConfig(iterations=2000, burn_in=500, thinning=10, seed=42)
        t1 = run_chain(X, y, arch, PriorSpec("laplace"), cfg)
        t2 = run_chain(X, y, arch, PriorSpec("laplace"), cfg)
        np.testing.assert_array_equal(t1.weights, t2.weights)
        np.testing.assert_array_equal(t1.log_liks, t2.log_liks)
        assert t1.acceptance_rate == t2.acceptance_rate

    def test_prior_only_ignores_data(self, rng):
        arch = NetworkArchitecture(3, (3, 2), 2)
        cfg = McmcConfig(iterations=2000, burn_in=100, thinning=10,
                         mode="prior-only", seed=9)
        X1 = rng.standard_normal((10, 3))
        X2 = rng.standard_normal((20, 3)) * 50
        t1 = run_chain(X1, rng.integers(0, 2, 10), arch, PriorSpec("normal"), cfg)
        t2 = run_chain(X2, rng.integers(0, 2, 20), arch, PriorSpec("normal"), cfg)
        np.testing.assert_array_equal(t1.weights, t2.weights)

    def test_zero_window_accepts_everything(self, rng):
        arch = NetworkArchitecture(2, (2, 2), 2)
        cfg = McmcConfig(iterations=500, burn_in=100, thinning=10,
                         proposal_window=0.0, mode="prior-only", seed=1)
        trace = run_chain(None, None, arch, PriorSpec("normal"), cfg)
        assert trace.acceptance_rate == 1.0

    @pytest.mark.parametrize("kind", priors.PRIOR_KINDS)
    def test_prior_recovery_ks(self, kind):
        # Oracle: prior-only chain marginals, pooled across weights, must
        # match the analytic prior CDF (KS < 0.02 at 1e5 iterations).
        arch = NetworkArchitecture(2, (3, 2), 2)  # 17 weights
        spec = PriorSpec(kind)
        cfg = McmcConfig(iterations=100_000, burn_in=10_000, thinning=45,
                         proposal_window=1.5, update_fraction=0.5,
                         mode="prior-only", seed=17)
        trace = run_chain(None, None, arch, spec, cfg)
        pooled = trace.weights.ravel()
        result = stats.kstest(pooled, lambda xs: np.array(
            [priors.cdf_weight(spec, x) for x in xs]))
        assert result.statistic < 0.02

    def test_median_retained_log_posterior_improves(self, rng):
        # The chain should find higher-density regions than its prior init.
        arch = NetworkArchitecture(3, (4, 3), 3)
        X = rng.standard_normal((30, 3))
        y = rng.integers(0, 3, 30)
        for kind in priors.PRIOR_KINDS:
            spec = PriorSpec(kind)
            cfg = McmcConfig(iterations=20_000, burn_in=5_000, thinning=50,
                             seed=23, adapt_iterations=2_000)
            init_rng = np.random.default_rng(cfg.seed)
            w0 = priors.sample_prior(spec, arch.n_weights, init_rng)
            lp0 = priors.log_prior(spec, w0) + network.log_likelihood(arch, w0, X, y)
            trace = run_chain(X, y, arch, spec, cfg)
            assert np.median(trace.log_posteriors) > lp0

    def test_detailed_balance_two_state_target(self):
        # Two sharp quadratic wells at w=0 and w=1 with masses 0.3/0.7 pin
        # the weight to an effective two-state grid. Long-run visit
        # frequencies must match the well masses within 2%.
        p0, p1 = 0.3, 0.7
        stiffness = 200.0

        def log_target(w):
            v = w[0]
            if v < 0.5:
                return math.log(p0) - stiffness * v * v
            return math.log(p1) - stiffness * (v - 1.0) ** 2

        cfg = McmcConfig(iterations=400_000, burn_in=10_000, thinning=5,
                         proposal_window=1.2, update_fraction=1.0,
                         mode="posterior", seed=31)
        result = run_mh(flat_prior, log_target, np.array([0.0]), cfg,
                        np.random.default_rng(31))
        frac_state1 = float(np.mean(result.weights[:, 0] >= 0.5))
        assert frac_state1 == pytest.approx(p1, abs=0.02)

    def test_gaussian_2d_mean_and_covariance(self):
        # Plug-in 2-D Gaussian with distinct diagonal covariance.
        cov = np.array([1.0, 4.0])
        mean = np.array([0.5, -1.0])

        def log_target(w):
            d = w - mean
            return -0.5 * float(np.sum(d * d / cov))

        cfg = McmcConfig(iterations=300_000, burn_in=30_000, thinning=10,
                         proposal_window=2.0, update_fraction=1.0,
                         mode="posterior", seed=77)
        result = run_mh(flat_prior, log_target, np.zeros(2), cfg,
                        np.random.default_rng(77))
        samples = result.weights
        for dim in range(2):
            series = samples[:, dim]
            ess = effective_sample_size(series)
            mc_se = series.std() / math.sqrt(ess)
            assert abs(series.mean() - mean[dim]) < 3 * mc_se
            assert series.var() == pytest.approx(cov[dim], rel=0.10)

    def test_posterior_needs_data(self):
        arch = NetworkArchitecture(2, (2, 2), 2)
        cfg = McmcConfig(iterations=100, seed=0)
        with pytest.raises(Exception):
            run_chain(np.empty((0, 2)), np.empty(0, dtype=int), arch,
                      PriorSpec("normal"), cfg)


class TestEffectiveSampleSize:
    def test_iid_series(self, rng):
        n = 10_000
        ess = effective_sample_size(rng.standard_normal(n))
        assert 0.8 * n <= ess <= 1.2 * n

    def test_ar1_analytic_oracle(self, rng):
        # Oracle: AR(1) with phi=0.9 has ESS = N (1-phi)/(1+phi) ~ 526.
        n, phi = 10_000, 0.9
        noise = rng.standard_normal(n) * math.sqrt(1 - phi * phi)
        x = np.empty(n)
        x[0] = rng.standard_normal()
        for i in range(1, n):
            x[i] = phi * x[i - 1] + noise[i]
        expected = n * (1 - phi) / (1 + phi)
        ess = effective_sample_size(x)
        assert expected * 0.7 <= ess <= expected * 1.3

    def test_duplicated_series_adds_no_information(self, rng):
        # Duplicating every element doubles the length but also the
        # autocorrelation: under the cutoff estimator the ideal ESS is
        # exactly unchanged (2N / (1 + 2(2S + 1/2)) = N / (1 + 2S)), so the
        # duplicated series ends far below its own length and within a
        # whisker of the original ESS.
        x = rng.standard_normal(2_000)
        doubled = np.repeat(x, 2)
        ess_x = effective_sample_size(x)
        ess_d = effective_sample_size(doubled)
        assert ess_d < 0.55 * len(doubled)
        assert ess_d == pytest.approx(ess_x, rel=0.05)

    def test_constant_series_returns_n_with_warning(self):
        with pytest.warns(UserWarning):
            assert effective_sample_size(np.ones(50)) == 50.0

    def test_result_bounded_by_n(self, rng):
        x = rng.standard_normal(500)
        assert 0 < effective_sample_size(x) <= 500

    def test_short_series_rejected(self):
        with pytest.raises(Exception):
            effective_sample_size(np.arange(5))


class TestTraceIO:
    def _trace(self, rng, mode="posterior"):
        arch = NetworkArchitecture(2, (2, 2), 2)
        X = rng.standard_normal((6, 2))
        y = rng.integers(0, 2, 6)
        cfg = McmcConfig(iterations=300, burn_in=100, thinning=20, seed=8,
                         mode=mode)
        return run_chain(X, y, arch, PriorSpec("cauchy", bound=3.0), cfg)

    def test_round_trip_bit_exact(self, tmp_path, rng):
        trace = self._trace(rng)
        path = tmp_path / "chain.trace"
        mcmc.save_trace(trace, path)
        loaded = mcmc.load_trace(path)
        assert loaded.arch == trace.arch
        assert loaded.prior == trace.prior
        assert loaded.mode == trace.mode
        assert loaded.seed == trace.seed
        assert loaded.burn_in == trace.burn_in
        assert loaded.thinning == trace.thinning
        assert loaded.acceptance_rate == trace.acceptance_rate
        np.testing.assert_array_equal(loaded.iterations, trace.iterations)
        np.testing.assert_array_equal(loaded.log_priors, trace.log_priors)
        np.testing.assert_array_equal(loaded.log_liks, trace.log_liks)
        np.testing.assert_array_equal(loaded.weights, trace.weights)

    def test_save_load_save_identical_bytes(self, tmp_path, rng):
        trace = self._trace(rng)
        p1, p2 = tmp_path / "a.trace", tmp_path / "b.trace"
        mcmc.save_trace(trace, p1)
        mcmc.save_trace(mcmc.load_trace(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.trace"
        path.write_text("")
        with pytest.raises(DataFormatError):
            mcmc.load_trace(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.trace"
        path.write_text("not json\n1,2,3\n")
        with pytest.raises(DataFormatError):
            mcmc.load_trace(path)

    def test_wrong_field_count_rejected(self, tmp_path, rng):
        trace = self._trace(rng)
        path = tmp_path / "chain.trace"
        mcmc.save_trace(trace, path)
        lines = path.read_text().splitlines()
        lines[1] = lines[1] + ",0.5"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError):
            mcmc.load_trace(path)
