import math

import numba
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hawkesbandit.bayes import (BayesianHawkes, MHConfig, PriorConfig, log_posterior, log_prior, mh_sample,
                                random_walk_metropolis, sample_prior)
from hawkesbandit.hawkes import log_likelihood, simulate_thinning

WEIGHTS = np.array([0.2, 0.3, 0.5])


@numba.njit(cache=True)
def _three_bins(x, args):
    # piecewise-constant density on [0, 3) with bin masses args
    v = x[0]
    if v < 0.0 or v >= 3.0:
        return -np.inf
    return math.log(args[int(v)])


def prior_oracle(mu, alpha, beta, pr):
    return (stats.gamma.logpdf(mu, pr.k_p, scale=pr.k_c) + stats.gamma.logpdf(beta, pr.k_p, scale=pr.k_c)
            + stats.beta.logpdf(alpha, pr.m, pr.n))


class TestDensities:
    def test_empty_events_posterior_minus_prior(self):
        p = (1.0, 0.4, 2.0)
        assert log_posterior(p, [], (0.0, 2.0)) - log_prior(p) == pytest.approx(-2.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 5), st.floats(0.01, 0.99), st.floats(0.01, 5), st.floats(0.5, 3), st.floats(0.5, 3),
           st.floats(0.5, 4), st.floats(0.5, 4))
    def test_prior_matches_scipy(self, mu, alpha, beta, k_p, k_c, m, n):
        pr = PriorConfig(k_p, k_c, m, n)
        ev = [0.3, 0.8, 1.1]
        lp = log_posterior((mu, alpha, beta), ev, (0.0, 2.0), pr) - log_likelihood((mu, alpha, beta), ev, (0.0, 2.0))
        assert lp == pytest.approx(prior_oracle(mu, alpha, beta, pr), abs=1e-9)

    def test_unit_exponential_mu(self):
        a = log_prior((0.5, 0.5, 1.0))
        b = log_prior((2.5, 0.5, 1.0))
        assert b - a == pytest.approx(-2.0, abs=1e-12)

    @pytest.mark.parametrize("params", [(0.0, 0.5, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 1.0), (1.0, 0.5, -1.0)])
    def test_outside_support(self, params):
        assert log_prior(params) == -np.inf
        assert log_posterior(params, [0.5], (0.0, 1.0)) == -np.inf

    def test_bad_config(self):
        with pytest.raises(ValueError):
            PriorConfig(k_p=0.0)
        with pytest.raises(ValueError):
            MHConfig(thin=0)
        with pytest.raises(ValueError):
            MHConfig(num_samples=0)


class TestSampler:
    def test_zero_scale_keeps_initial_state(self):
        out = mh_sample([0.5, 1.0], (0.0, 2.0), cfg=MHConfig(num_samples=20, proposal_scales=0.0),
                        random_state=0, initial=(1.3, 0.2, 0.7))
        np.testing.assert_allclose(out.theta, np.tile([1.3, 0.2, 0.7], (20, 1)), rtol=1e-12)
        assert out.diagnostics["all_rejected"]

    def test_empty_events_alpha_prior_mean(self):
        pr = PriorConfig(m=2.0, n=3.0)
        cfg = MHConfig(num_samples=2000, burn_in=500, thin=5)
        out = mh_sample([], (0.0, 0.01), pr, cfg, random_state=1)
        # thinned draws are close to independent; allow for some autocorrelation
        se = stats.beta.std(2, 3) / math.sqrt(2000)
        assert abs(out.alpha.mean() - 0.4) < 3 * 2 * se

    def test_recovers_truth(self):
        truth = np.array([1.0, 0.5, 2.0])
        ev = simulate_thinning(truth, [], (0.0, 2000.0), random_state=2)
        out = mh_sample(ev, (0.0, 2000.0), random_state=3)
        assert np.all(np.abs(out.theta.mean(axis=0) - truth) / truth < 0.25)

    def test_support_and_length(self):
        out = mh_sample([0.1, 0.2, 0.25, 3.0], (0.0, 4.0), cfg=MHConfig(num_samples=30), random_state=4)
        assert out.theta.shape == (30, 3) and len(out) == 30
        assert np.all(out.mu > 0) and np.all(out.beta > 0)
        assert np.all((out.alpha > 0) & (out.alpha < 1))

    def test_deterministic(self):
        ev = [0.1, 0.5, 0.7, 1.9]
        a = mh_sample(ev, (0.0, 2.0), random_state=7)
        b = mh_sample(ev, (0.0, 2.0), random_state=7)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_detailed_balance_three_points(self):
        samples, rate, _ = random_walk_metropolis(_three_bins, WEIGHTS, [1.5], [1.0], 100_000, random_state=0)
        freq = np.bincount(samples[:, 0].astype(int), minlength=3) / samples.shape[0]
        assert 0.5 * np.abs(freq - WEIGHTS).sum() < 0.05
        assert 0 < rate < 1

    def test_prior_draws(self):
        th = sample_prior(PriorConfig(), 500, 0)
        assert th.shape == (500, 3)
        assert np.all(th[:, 0] > 0) and np.all((th[:, 1] > 0) & (th[:, 1] < 1))


class TestEstimator:
    def test_fit_and_predict(self):
        est = BayesianHawkes(num_samples=10, burn_in=100, random_state=0).fit([0.2, 0.4, 1.5], (0.0, 2.0))
        assert est.posterior_mean_.shape == (3,)
        lam = est.predict_intensity([0.2, 0.4, 1.5], 2.0)
        assert lam.shape == (10,) and np.all(lam > 0)
        assert est.get_params()["num_samples"] == 10
