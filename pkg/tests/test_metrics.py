import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from pathrisk.metrics import (InsufficientDataError, LOG_2PI_E, MetricError,
                              MIEstimatorConfig, SimilarityConfig,
                              avg_pairwise_similarity, coherence,
                              contextual_distance, fluency,
                              mutual_information, semantic_entropy, sim,
                              windowed_slope)
from pathrisk.records import KnowledgeBase

RAW = SimilarityConfig(clamp=False)
CLAMPED = SimilarityConfig(clamp=True)

_vectors = st.lists(st.floats(min_value=-1e6, max_value=1e6,
                              allow_nan=False), min_size=2, max_size=8)


class TestSim:
    def test_identity(self):
        v = np.array([0.3, -1.2, 4.0])
        assert sim(v, v, RAW) == pytest.approx(1.0)
        assert sim(v, v, CLAMPED) == pytest.approx(1.0)

    def test_antipodal(self):
        v = np.array([1.0, 2.0])
        assert sim(v, -v, RAW) == pytest.approx(-1.0)
        assert sim(v, -v, CLAMPED) == pytest.approx(0.0)

    def test_orthogonal(self):
        assert sim([1.0, 0.0], [0.0, 1.0], RAW) == pytest.approx(0.0)
        assert sim([1.0, 0.0], [0.0, 1.0], CLAMPED) == pytest.approx(0.5)

    def test_zero_vector_error(self):
        with pytest.raises(MetricError, match="zero vector"):
            sim([0.0, 0.0], [1.0, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            sim([1.0], [1.0, 0.0])

    @given(_vectors)
    def test_self_similarity_one(self, values):
        v = np.asarray(values)
        if np.linalg.norm(v) == 0.0:
            return
        assert sim(v, v, RAW) == pytest.approx(1.0, abs=1e-12)

    @given(_vectors, _vectors)
    def test_symmetry(self, a_vals, b_vals):
        n = min(len(a_vals), len(b_vals))
        a = np.asarray(a_vals[:n])
        b = np.asarray(b_vals[:n])
        if np.linalg.norm(a) == 0.0 or np.linalg.norm(b) == 0.0:
            return
        assert sim(a, b, RAW) == pytest.approx(sim(b, a, RAW), abs=1e-12)


class TestFluency:
    def test_certain_tokens(self):
        assert fluency([0.0, 0.0, 0.0]) == pytest.approx(1.0)

    def test_constant_probability(self):
        assert fluency([math.log(0.5)] * 2) == pytest.approx(0.5)

    def test_geometric_mean(self):
        # exp((ln 0.9 + ln 0.1)/2) = sqrt(0.09) = 0.3
        assert fluency([math.log(0.9), math.log(0.1)]) == pytest.approx(0.3)

    def test_empty_error(self):
        with pytest.raises(MetricError):
            fluency([])

    def test_positive_logprob_error(self):
        with pytest.raises(MetricError):
            fluency([0.5])

    @given(st.lists(st.floats(min_value=-20.0, max_value=0.0,
                              allow_nan=False), min_size=1, max_size=12))
    def test_bounds_and_monotonicity(self, logs):
        value = fluency(logs)
        assert 0.0 < value <= 1.0
        bumped = list(logs)
        bumped[0] = min(0.0, bumped[0] + 1.0)
        assert fluency(bumped) >= value - 1e-12


class TestMutualInformation:
    CFG = MIEstimatorConfig(num_bins_per_axis=2, projection_dims=1, seed=5)

    def test_identical_samples_near_ln2(self, rng):
        xs = rng.uniform(size=1000)
        estimate = mutual_information(xs, xs, self.CFG)
        assert estimate >= 0.6
        # oracle: exact plug-in on the known 2-bin contingency of the data;
        # binning a monotone scalar map of xs yields the same partition
        lo, hi = xs.min(), xs.max()
        b = np.minimum((2 * (xs - lo) / (hi - lo)).astype(int), 1)
        counts = np.bincount(b, minlength=2) / xs.size
        oracle = -float(np.sum(counts[counts > 0]
                               * np.log(counts[counts > 0])))
        assert estimate == pytest.approx(oracle, abs=1e-9)

    def test_independent_samples_near_zero(self, rng):
        xs = rng.uniform(size=1000)
        ys = rng.uniform(size=1000)
        assert mutual_information(xs, ys, self.CFG) <= 0.05

    def test_constant_marginal_zero(self, rng):
        xs = rng.uniform(size=1000)
        ys = np.full(1000, 0.7)
        assert mutual_information(xs, ys, self.CFG) == 0.0

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            mutual_information([1.0] * 10, [1.0] * 10, self.CFG)

    def test_deterministic_given_seed(self, rng):
        xs = rng.standard_normal((500, 3))
        ys = rng.standard_normal((500, 3))
        cfg = MIEstimatorConfig(num_bins_per_axis=2, projection_dims=1,
                                seed=9)
        assert mutual_information(xs, ys, cfg) == \
            mutual_information(xs, ys, cfg)

    def test_dependence_beats_shuffle_statistically(self):
        # MI(x, x) >= MI(x, shuffled x) in at least 99 of 100 seeded trials
        wins = 0
        for seed in range(100):
            local = np.random.default_rng(seed)
            xs = local.uniform(size=1000)
            shuffled = local.permutation(xs)
            cfg = MIEstimatorConfig(num_bins_per_axis=2, projection_dims=1,
                                    seed=seed)
            if mutual_information(xs, xs, cfg) >= \
                    mutual_information(xs, shuffled, cfg):
                wins += 1
        assert wins >= 99


class TestCoherence:
    KB = KnowledgeBase(entries=(("a", np.array([1.0, 0.0])),
                                ("b", np.array([0.0, 1.0]))))

    def test_exact_match(self):
        assert coherence([np.array([1.0, 0.0]), np.array([0.0, 1.0])],
                         self.KB) == pytest.approx(1.0)

    def test_orthogonal_claim_clamp_midpoint(self):
        kb = KnowledgeBase(entries=(("a", np.array([1.0, 0.0])),))
        assert coherence([np.array([0.0, 1.0])], kb) == pytest.approx(0.5)

    def test_mixed_mean(self):
        kb = KnowledgeBase(entries=(("a", np.array([1.0, 0.0])),))
        value = coherence([np.array([1.0, 0.0]), np.array([0.0, 1.0])], kb)
        assert value == pytest.approx(0.75)

    def test_empty_inputs(self):
        with pytest.raises(MetricError):
            coherence([], self.KB)


class TestAvgPairwiseSimilarity:
    def test_identical(self):
        vecs = [np.array([1.0, 1.0])] * 4
        assert avg_pairwise_similarity(vecs) == pytest.approx(1.0)

    def test_orthogonal_pair(self):
        assert avg_pairwise_similarity([np.array([1.0, 0.0]),
                                        np.array([0.0, 1.0])]) == \
            pytest.approx(0.0)

    def test_three_vector_enumeration(self):
        vecs = [np.array([1.0, 0.0]), np.array([1.0, 0.0]),
                np.array([0.0, 1.0])]
        assert avg_pairwise_similarity(vecs) == pytest.approx(1.0 / 3.0)

    def test_too_few(self):
        with pytest.raises(MetricError):
            avg_pairwise_similarity([np.array([1.0])])


class TestSemanticEntropy:
    def test_unit_variance_1d(self):
        samples = [0.0, math.sqrt(2.0)]   # ddof=1 variance exactly 1
        assert semantic_entropy(samples) == pytest.approx(0.5 * LOG_2PI_E)

    def test_identical_samples_with_ridge(self):
        samples = np.tile([1.0, 2.0, 3.0], (5, 1))
        assert semantic_entropy(samples, ridge=1.0) == \
            pytest.approx(3 * 0.5 * LOG_2PI_E)

    def test_scaling_shifts_entropy(self, rng):
        samples = rng.standard_normal(50)
        base = semantic_entropy(samples)
        assert semantic_entropy(2.0 * samples) == \
            pytest.approx(base + math.log(2.0), abs=1e-9)

    def test_contraction_decreases_entropy(self, rng):
        samples = rng.standard_normal((40, 3))
        mean = samples.mean(axis=0)
        contracted = mean + 0.5 * (samples - mean)
        assert semantic_entropy(contracted) < semantic_entropy(samples)

    def test_singular_without_ridge(self):
        with pytest.raises(MetricError):
            semantic_entropy(np.tile([1.0, 2.0], (5, 1)), ridge=0.0)

    def test_needs_enough_samples(self):
        with pytest.raises(InsufficientDataError):
            semantic_entropy(np.zeros((2, 4)), ridge=0.0)


class TestContextualDistance:
    def test_zero_at_identity(self):
        assert contextual_distance([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_three_four_five(self):
        assert contextual_distance([0.0, 0.0], [3.0, 4.0]) == \
            pytest.approx(5.0)

    @given(_vectors, _vectors)
    def test_symmetry(self, a_vals, b_vals):
        n = min(len(a_vals), len(b_vals))
        a, b = np.asarray(a_vals[:n]), np.asarray(b_vals[:n])
        assert contextual_distance(a, b) == \
            pytest.approx(contextual_distance(b, a))


class TestWindowedSlope:
    def test_linear_series(self):
        assert windowed_slope([1.0, 3.0, 5.0, 7.0]) == pytest.approx(2.0)

    def test_uses_last_window(self):
        series = [0.0] * 10 + [1.0, 2.0, 3.0, 4.0, 5.0]
        assert windowed_slope(series, window=5) == pytest.approx(1.0)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            windowed_slope([1.0])
