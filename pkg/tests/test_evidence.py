import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priorbnn import evidence, network
from priorbnn.errors import DataFormatError, InvalidInputError
from priorbnn.evidence import (PredictionSummary, SupportThresholds, bayes_factor,
                               empirical_prior_class_probs, posterior_class_probs,
                               summarize, summarize_many)
from priorbnn.mcmc import McmcConfig, PosteriorTrace, run_chain
from priorbnn.network import NetworkArchitecture
from priorbnn.priors import PriorSpec


def make_trace(arch, weights, mode="posterior", prior=PriorSpec("normal")):
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    n = weights.shape[0]
    return PosteriorTrace(
        arch=arch, prior=prior, mode=mode, seed=0, burn_in=0, thinning=1,
        iterations=np.arange(1, n + 1, dtype=np.int64),
        log_priors=np.zeros(n), log_liks=np.zeros(n), weights=weights,
        acceptance_rate=1.0)


class TestThresholds:
    def test_defaults(self):
        t = SupportThresholds()
        assert t.pp_threshold == 0.95
        assert t.bf_threshold == 150.0

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            SupportThresholds(pp_threshold=0.4)
        with pytest.raises(InvalidInputError):
            SupportThresholds(pp_threshold=1.0)
        with pytest.raises(InvalidInputError):
            SupportThresholds(bf_threshold=1.0)


class TestPosteriorClassProbs:
    def test_single_zero_sample_uniform(self):
        arch = NetworkArchitecture(2, (2, 2), 5)
        trace = make_trace(arch, np.zeros((1, arch.n_weights)))
        probs = posterior_class_probs(trace, np.array([0.1, 0.2]))
        np.testing.assert_allclose(probs, [0.2] * 5, atol=1e-15)

    def test_two_extreme_samples_average(self):
        # Two weight samples whose outputs saturate to (~1,0) and (~0,1):
        # the averaged posterior probabilities are (0.5, 0.5).
        arch = NetworkArchitecture(1, (1, 1), 2)
        w_pos = network.pack_weights(arch, (np.array([[0.0], [50.0]]),
                                            np.array([[1.0]]),
                                            np.array([[50.0, -50.0]])))
        w_neg = network.pack_weights(arch, (np.array([[0.0], [50.0]]),
                                            np.array([[1.0]]),
                                            np.array([[-50.0, 50.0]])))
        trace = make_trace(arch, np.vstack([w_pos, w_neg]))
        probs = posterior_class_probs(trace, np.array([0.0]))
        np.testing.assert_allclose(probs, [0.5, 0.5], atol=1e-12)

    def test_direct_averaging_oracle(self, small_arch, rng):
        # Oracle: recompute the mean by an explicit loop over samples.
        weights = rng.standard_normal((100, small_arch.n_weights))
        trace = make_trace(small_arch, weights)
        x = rng.standard_normal(3)
        expected = np.zeros(small_arch.n_classes)
        for w in weights:
            expected += network.forward(small_arch, w, x)
        expected /= 100
        probs = posterior_class_probs(trace, x)
        np.testing.assert_allclose(probs, expected, atol=1e-12)
        assert abs(probs.sum() - 1.0) < 1e-9

    def test_concatenated_traces_weighted_mean(self, small_arch, rng):
        w1 = rng.standard_normal((30, small_arch.n_weights))
        w2 = rng.standard_normal((70, small_arch.n_weights))
        x = rng.standard_normal(3)
        p1 = posterior_class_probs(make_trace(small_arch, w1), x)
        p2 = posterior_class_probs(make_trace(small_arch, w2), x)
        p_all = posterior_class_probs(make_trace(small_arch, np.vstack([w1, w2])), x)
        np.testing.assert_allclose(p_all, 0.3 * p1 + 0.7 * p2, atol=1e-12)

    def test_argmax_frequency_estimator(self, small_arch, rng):
        weights = rng.standard_normal((50, small_arch.n_weights))
        trace = make_trace(small_arch, weights)
        x = rng.standard_normal(3)
        freq = posterior_class_probs(trace, x, estimator=evidence.ARGMAX_FREQUENCY)
        counts = np.zeros(small_arch.n_classes)
        for w in weights:
            counts[np.argmax(network.forward(small_arch, w, x))] += 1
        np.testing.assert_allclose(freq, counts / 50, atol=1e-15)

    def test_empty_trace_rejected(self, small_arch):
        trace = make_trace(small_arch, np.zeros((0, small_arch.n_weights)))
        with pytest.raises(InvalidInputError):
            posterior_class_probs(trace, np.zeros(3))


class TestEmpiricalPriors:
    def test_mode_enforced(self, small_arch):
        trace = make_trace(small_arch, np.zeros((1, small_arch.n_weights)),
                           mode="posterior")
        with pytest.raises(InvalidInputError):
            empirical_prior_class_probs(trace, np.zeros(3))

    def test_single_zero_sample_uniform(self, small_arch):
        trace = make_trace(small_arch, np.zeros((1, small_arch.n_weights)),
                           mode="prior-only")
        probs = empirical_prior_class_probs(trace, np.zeros(3))
        np.testing.assert_allclose(probs, [1 / 3] * 3, atol=1e-9)

    def test_clamping(self, small_arch):
        # A saturated single-sample trace puts empirical mass ~1/0 on
        # classes; clamping keeps everything inside [eps, 1-eps].
        arch = NetworkArchitecture(1, (1, 1), 2)
        w = network.pack_weights(arch, (np.array([[0.0], [50.0]]),
                                        np.array([[1.0]]),
                                        np.array([[80.0, -80.0]])))
        trace = make_trace(arch, w[None, :], mode="prior-only")
        probs = empirical_prior_class_probs(trace, np.array([0.0]))
        assert probs[0] == 1.0 - evidence.PRIOR_PROB_EPS
        assert probs[1] == evidence.PRIOR_PROB_EPS
        raw = empirical_prior_class_probs(trace, np.array([0.0]), clamp=False)
        assert abs(raw.sum() - 1.0) < 1e-9

    def test_mirrored_class_symmetry(self, rng):
        # Construction with permutation-symmetric classes: duplicate-feature
        # inputs and a prior-only chain under a symmetric prior. Flipping
        # output-layer sign symmetry means both classes have equal prior
        # probability up to Monte Carlo error.
        arch = NetworkArchitecture(2, (3, 2), 2)
        cfg = McmcConfig(iterations=60_000, burn_in=5_000, thinning=25,
                         proposal_window=1.0, update_fraction=0.5,
                         mode="prior-only", seed=4)
        trace = run_chain(None, None, arch, PriorSpec("normal"), cfg)
        probs = empirical_prior_class_probs(trace, np.array([0.4, 0.4]))
        assert probs[0] == pytest.approx(probs[1], abs=0.02)


class TestBayesFactor:
    def test_paper_worked_examples(self):
        # 0.93 posterior vs 0.20 prior -> about 53; vs 0.05 prior -> about 252.
        assert bayes_factor(0.93, 0.20) == pytest.approx(53.14, abs=0.3)
        assert bayes_factor(0.93, 0.05) == pytest.approx(252.4, abs=1.0)

    def test_no_evidence_is_one(self):
        for p in (0.2, 0.5, 0.77):
            assert bayes_factor(p, p) == pytest.approx(1.0, abs=1e-12)

    def test_certainty_is_infinite(self):
        assert bayes_factor(1.0, 0.5) == math.inf

    def test_degenerate_prior_rejected(self):
        with pytest.raises(InvalidInputError):
            bayes_factor(0.5, 0.0)
        with pytest.raises(InvalidInputError):
            bayes_factor(0.5, 1.0)
        with pytest.raises(InvalidInputError):
            bayes_factor(1.2, 0.5)

    def test_reciprocity(self, rng):
        for _ in range(20):
            pp, prior = rng.uniform(0.01, 0.99, 2)
            assert bayes_factor(pp, prior) * bayes_factor(prior, pp) == pytest.approx(
                1.0, rel=1e-9)

    def test_monotonicity(self):
        assert bayes_factor(0.9, 0.3) < bayes_factor(0.95, 0.3)
        assert bayes_factor(0.9, 0.3) > bayes_factor(0.9, 0.4)

    @pytest.mark.parametrize("n_classes", range(2, 21))
    def test_uniform_prior_equivalence_to_pp_cutoff(self, n_classes):
        # With prior 1/K, BF > 150 holds iff pp > 150 / (150 + K - 1).
        prior = 1.0 / n_classes
        cutoff = 150.0 / (150.0 + n_classes - 1)
        for pp in (cutoff - 1e-6, cutoff + 1e-6):
            assert (bayes_factor(pp, prior) > 150.0) == (pp > cutoff)


class TestSummarize:
    def _traces(self, arch, rng, n=20):
        post = make_trace(arch, rng.standard_normal((n, arch.n_weights)))
        pri = make_trace(arch, rng.standard_normal((n, arch.n_weights)),
                         mode="prior-only")
        return post, pri

    def test_hand_arithmetic_bf_below_threshold(self):
        # PP (0.99, 0.01) against a 50/50 prior: BF = 99 < 150.
        bf = bayes_factor(0.99, 0.5)
        assert bf == pytest.approx(99.0, rel=1e-9)
        assert not bf > 150

    def test_hand_arithmetic_bf_above_threshold(self):
        # Same PP against prior 0.05: BF = 99 / 0.0526... ~ 1881 > 150.
        bf = bayes_factor(0.99, 0.05)
        assert bf == pytest.approx(1881.0, rel=1e-3)
        assert bf > 150

    def test_summary_fields(self, small_arch, rng):
        post, pri = self._traces(small_arch, rng)
        s = summarize("i0", rng.standard_normal(3), post, pri, true_label=1)
        assert s.predicted_class == int(np.argmax(s.posterior_probs))
        assert s.pp_pred == s.posterior_probs[s.predicted_class]
        assert s.supported_pp == (s.pp_pred > 0.95)
        for k in range(small_arch.n_classes):
            expected_bf = bayes_factor(float(s.posterior_probs[k]),
                                       float(s.prior_probs[k]))
            assert s.bayes_factors[k] == pytest.approx(expected_bf, rel=1e-9)
        assert abs(s.posterior_probs.sum() - 1.0) < 1e-9
        # prior probs are clamped before odds; sum stays within K*eps of 1
        assert abs(s.prior_probs.sum() - 1.0) < small_arch.n_classes * 1e-6 + 1e-9

    def test_uniform_pp_never_supported(self, small_arch):
        post = make_trace(small_arch, np.zeros((1, small_arch.n_weights)))
        pri = make_trace(small_arch, np.zeros((1, small_arch.n_weights)),
                         mode="prior-only")
        s = summarize("i0", np.zeros(3), post, pri)
        assert not s.supported_pp
        assert not s.supported_bf

    def test_architecture_mismatch_rejected(self, small_arch, rng):
        other = NetworkArchitecture(3, (2, 2), 3)
        post = make_trace(small_arch, rng.standard_normal((5, small_arch.n_weights)))
        pri = make_trace(other, rng.standard_normal((5, other.n_weights)),
                         mode="prior-only")
        with pytest.raises(InvalidInputError):
            summarize("i0", np.zeros(3), post, pri)

    def test_prior_spec_mismatch_rejected(self, small_arch, rng):
        post = make_trace(small_arch, rng.standard_normal((5, small_arch.n_weights)),
                          prior=PriorSpec("normal"))
        pri = make_trace(small_arch, rng.standard_normal((5, small_arch.n_weights)),
                         mode="prior-only", prior=PriorSpec("laplace"))
        with pytest.raises(InvalidInputError):
            summarize("i0", np.zeros(3), post, pri)


class TestPredictionsFile:
    def test_round_trip(self, tmp_path, small_arch, rng):
        post = make_trace(small_arch, rng.standard_normal((10, small_arch.n_weights)))
        pri = make_trace(small_arch, rng.standard_normal((10, small_arch.n_weights)),
                         mode="prior-only")
        X = rng.standard_normal((7, 3))
        summaries = summarize_many(X, [f"i{k}" for k in range(7)],
                                   rng.integers(0, 3, 7), post, pri)
        path = tmp_path / "pred.csv"
        evidence.write_predictions(path, summaries)
        loaded = evidence.read_predictions(path)
        assert len(loaded) == 7
        for orig, back in zip(summaries, loaded):
            assert back.instance_id == orig.instance_id
            assert back.true_label == orig.true_label
            assert back.predicted_class == orig.predicted_class
            assert back.pp_pred == orig.pp_pred
            assert back.prior_pred == orig.prior_pred
            assert back.bf_pred == orig.bf_pred
            assert back.supported_pp == orig.supported_pp
            assert back.supported_bf == orig.supported_bf
            np.testing.assert_array_equal(back.posterior_probs, orig.posterior_probs)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataFormatError):
            evidence.read_predictions(path)

    def test_infinite_bf_round_trips(self, tmp_path):
        s = PredictionSummary(
            instance_id="x", posterior_probs=np.array([1.0, 0.0]),
            prior_probs=np.array([0.5, 0.5]),
            bayes_factors=np.array([math.inf, 0.0]),
            predicted_class=0, supported_pp=True, supported_bf=True,
            true_label=0)
        path = tmp_path / "inf.csv"
        evidence.write_predictions(path, [s])
        back = evidence.read_predictions(path)[0]
        assert back.bf_pred == math.inf


@settings(max_examples=100, deadline=None)
@given(pp=st.floats(0.001, 0.999), prior=st.floats(0.001, 0.999))
def test_bf_monotone_property(pp, prior):
    bf = bayes_factor(pp, prior)
    assert bf >= 0
    if pp < 0.99:
        assert bayes_factor(pp + 0.001, prior) > bf
    if prior < 0.99:
        assert bayes_factor(pp, prior + 0.001) < bf
