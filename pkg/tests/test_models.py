import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from socialtrend import streams
from socialtrend.models import (FiniteLikelihood, GaussianLikelihood, HypothesisSet,
                                InfiniteKLError, LikelihoodModel, ModelError, TrendDistribution,
                                average_likelihood, check_global_identifiability, kl_divergence,
                                sample_observation, sample_trend)


def test_gaussian_kl_closed_form():
    g = GaussianLikelihood([0.0, 0.3])
    assert g.kl(0, 1) == pytest.approx(0.045)
    assert g.kl(1, 0) == pytest.approx(0.045)
    assert g.kl(0, 0) == 0.0


def test_finite_kl_hand_value():
    f = FiniteLikelihood([[0.5, 0.5], [0.25, 0.75]])
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert f.kl(0, 1) == pytest.approx(expected, abs=1e-15)


def test_finite_kl_infinite_when_support_missing():
    f = FiniteLikelihood([[0.5, 0.5], [1.0, 0.0]])
    with pytest.raises(InfiniteKLError):
        f.kl(0, 1)
    assert f.kl(1, 0) == pytest.approx(math.log(2))
    with pytest.raises(InfiniteKLError):
        LikelihoodModel([f]).validate(0)


def test_finite_rows_must_be_pmfs():
    with pytest.raises(ModelError):
        FiniteLikelihood([[0.5, 0.6], [0.5, 0.5]])


def test_gaussian_log_likelihood_matches_scipy():
    g = GaussianLikelihood([0.0, 0.3, 0.9])
    x = np.array([-1.2, 0.0, 2.5])
    assert_allclose(g.log_likelihood(x), stats.norm.logpdf(x[:, None], loc=g.means), atol=1e-14)


def test_gaussian_sample_law_of_large_numbers():
    g = GaussianLikelihood([0.3, 0.0])
    u = streams.uniforms(11, streams.OBSERVATION, 0, 1, 100_000)
    x = g.sample(0, u)
    assert x.mean() == pytest.approx(0.3, abs=0.01)
    assert x.std() == pytest.approx(1.0, abs=0.01)


def test_finite_sample_frequencies():
    f = FiniteLikelihood([[0.2, 0.0, 0.8], [1 / 3, 1 / 3, 1 / 3]])
    u = streams.uniforms(5, streams.OBSERVATION, 0, 1, 50_000)
    x = f.sample(0, u).astype(int)
    freq = np.bincount(x, minlength=3) / x.size
    assert freq[1] == 0
    assert_allclose(freq, [0.2, 0.0, 0.8], atol=0.01)


def test_trend_frequencies_and_zero_mass():
    pi = TrendDistribution([0.0, 0.25, 0.25, 0.25, 0.25])
    u = streams.uniforms(3, streams.TREND, 0, 1, 100_000)
    tau = pi.sample(u)
    assert not np.any(tau == 0)
    assert_allclose(np.bincount(tau, minlength=5)[1:] / tau.size, 0.25, atol=0.01)


def test_uniform_trend_chi_square():
    pi = TrendDistribution.uniform(4)
    u = streams.uniforms(8, streams.TREND, 0, 1, 20_000)
    counts = np.bincount(pi.sample(u), minlength=4)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_trend_rejects_bad_pmf():
    with pytest.raises(ModelError, match="sums to"):
        TrendDistribution([0.3, 0.3, 0.3])
    with pytest.raises(ModelError):
        TrendDistribution([1.2, -0.2])


def test_sample_helpers_use_addressed_streams():
    model = LikelihoodModel.gaussian([[0.0, 1.0], [0.5, 0.0]])
    u = streams.uniform(4, streams.OBSERVATION, 1, 7)
    assert sample_observation(model, 1, 0, seed=4, time=7) == pytest.approx(0.5 + stats.norm.ppf(u))
    pi = TrendDistribution([0.5, 0.5])
    assert sample_trend(pi, 4, 7) == int(streams.uniform(4, streams.TREND, 0, 7) >= 0.5)


def test_kl_to_average_two_hypotheses_is_plain_kl():
    g = GaussianLikelihood([0.0, 1.3])
    value, err = g.kl_to_average(0, 0)
    assert value == pytest.approx(g.kl(0, 1), abs=1e-8)
    assert err < 1e-6


def test_kl_to_average_monte_carlo():
    g = GaussianLikelihood([0.0, 0.3, 5.0, -2.0])
    value, _ = g.kl_to_average(0, 1)
    x = 0.0 + stats.norm.ppf(streams.uniforms(2, streams.OBSERVATION, 0, 1, 200_000))
    lp = stats.norm.logpdf(x)
    lq = np.log(np.mean(stats.norm.pdf(x[:, None], loc=[0.0, 5.0, -2.0]), axis=1))
    samples = lp - lq
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - value) < 3 * se


def test_finite_kl_to_average_exact():
    rows = np.array([[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]])
    f = FiniteLikelihood(rows)
    mix = (rows[0] + rows[2]) / 2
    expected = np.sum(rows[1] * np.log(rows[1] / mix))
    assert f.kl_to_average(1, 1)[0] == pytest.approx(expected)


def test_average_likelihood():
    model = LikelihoodModel.gaussian([[0.0, 1.0, 2.0]])
    x = 0.4
    expected = (stats.norm.pdf(x, 0.0) + stats.norm.pdf(x, 2.0)) / 2
    assert average_likelihood(model, 0, 1, x) == pytest.approx(expected)


def test_fig3_kl_table(fig3):
    # agents share means 0.3*n with one column collapsed to the truth's mean
    D = fig3.model.kl_matrix(0)
    assert D.shape == (10, 5)
    assert_allclose(D[:, 0], 0.0)
    assert kl_divergence(fig3.model, 0, 0, 4) == pytest.approx(0.5 * 1.2 ** 2)
    witnesses = {i.theta: i.witnesses for i in check_global_identifiability(fig3.model, 0)}
    assert witnesses[1] == (2, 3, 4, 5, 6, 7, 8, 9)
    assert witnesses[4] == (0, 1, 2, 3, 4, 5, 6)


def test_unidentifiable_hypothesis_reported():
    model = LikelihoodModel.gaussian([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]])
    ident = check_global_identifiability(model, 0)
    assert [(i.theta, i.identifiable) for i in ident] == [(1, False), (2, True)]


def test_models_must_agree_on_hypothesis_count():
    with pytest.raises(ModelError):
        LikelihoodModel([GaussianLikelihood([0, 1]), GaussianLikelihood([0, 1, 2])])


def test_hypothesis_set():
    hs = HypothesisSet(4, 2)
    assert hs.wrong() == [0, 1, 3]
    with pytest.raises(ModelError):
        HypothesisSet(3, 3)


def test_stacked_log_likelihood_shape():
    model = LikelihoodModel([GaussianLikelihood([0, 1, 2]),
                             FiniteLikelihood([[0.5, 0.5], [0.1, 0.9], [0.9, 0.1]])])
    L = model.log_likelihoods(np.array([[0.2, 1.0], [1.0, 0.0]]))
    assert L.shape == (2, 2, 3)
    assert L[0, 1, 1] == pytest.approx(math.log(0.9))
