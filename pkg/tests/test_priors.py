import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from statdag.errors import EmptyTruncation
from statdag.priors import (
    NoiseScale,
    PriorConfig,
    TaskCorrelation,
    _mgp_update,
    angle_log_prior_latent,
    cumulative_shrinkage_update,
    horseshoe_gibbs_update,
    log_beta_complement,
    polar_build,
    sample_factors_prior,
    sample_gig,
    sample_horseshoe_prior,
    sample_noise_prior,
    sample_shrinkage_prior,
    second_difference_penalty,
    soft_threshold,
    stick_breaking_update,
    stick_weights,
)

KS_LEVEL = 0.001  # several KS tests per module; keep the family-wise false alarm rate small


def numeric_cdf(logpdf, lo, hi, n=20001):
    """CDF on a log-spaced grid from an unnormalized log density."""
    x = np.geomspace(lo, hi, n)
    lp = logpdf(x)
    w = np.exp(lp - lp.max())
    c = integrate.cumulative_trapezoid(w, x, initial=0.0)
    return lambda q: np.interp(q, x, c / c[-1])


class TestSoftThreshold:
    def test_fixed_point(self):
        assert soft_threshold(np.pi / 2, 0.7) == np.pi / 2

    def test_shrinks_by_threshold(self):
        assert abs(soft_threshold(np.pi / 2 + 0.5, 0.2) - (np.pi / 2 + 0.3)) < 1e-15

    def test_zero_threshold(self):
        a = np.array([0.1, 1.0, 3.0])
        np.testing.assert_allclose(soft_threshold(a, 0.0), a, rtol=0, atol=1e-15)

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(1.0, -0.1)

    @given(st.floats(0.001, np.pi - 0.001), st.floats(0.001, np.pi - 0.001), st.floats(0, np.pi / 2))
    def test_monotone_and_lipschitz(self, a, b, lam):
        fa, fb = soft_threshold(a, lam), soft_threshold(b, lam)
        assert abs(fa - fb) <= abs(a - b) + 1e-12
        assert (fa - fb) * (a - b) >= -1e-15


class TestPolar:
    def test_right_angle_s2(self):
        B = polar_build(np.array([[0, 0], [np.pi / 2, 0]]))
        np.testing.assert_allclose(B, np.eye(2), atol=1e-15)

    def test_right_angles_s3(self):
        np.testing.assert_allclose(polar_build(np.full((3, 3), np.pi / 2)), np.eye(3), atol=1e-15)

    def test_third_of_pi(self):
        B = polar_build(np.array([[0, 0], [np.pi / 3, 0]]))
        np.testing.assert_allclose(B[1], [0.5, math.sqrt(3) / 2], atol=1e-15)
        assert abs((B @ B.T)[0, 1] - 0.5) < 1e-15

    def test_last_entry_is_full_product(self):
        a = np.zeros((3, 3))
        a[2, 0], a[2, 1] = 0.4, 1.1
        B = polar_build(a)
        assert abs(B[2, 2] - math.sin(0.4) * math.sin(1.1)) < 1e-15

    @given(st.integers(2, 6), st.integers(0, 2**31))
    def test_unit_rows(self, S, seed):
        angles = np.random.default_rng(seed).uniform(0, np.pi, size=(S, S))
        B = polar_build(angles)
        np.testing.assert_allclose(np.linalg.norm(B, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.diag(B @ B.T), 1.0, atol=1e-12)
        assert np.all(np.triu(B, 1) == 0)

    def test_task_correlation_threshold_gives_zeros(self):
        raw = np.zeros((3, 3))
        raw[1, 0], raw[2, 0], raw[2, 1] = np.pi / 2 + 0.1, 0.3, np.pi / 2 - 0.05
        Q = TaskCorrelation(raw, 0.2).Q()
        assert Q[1, 0] == pytest.approx(0.0, abs=1e-15)
        assert abs(Q[2, 0]) > 0.5


class TestHorseshoe:
    def test_half_cauchy_marginal(self, rng):
        lam = np.concatenate([np.sqrt(sample_horseshoe_prior(50, rng).lambda2[~np.eye(50, dtype=bool)])
                              for _ in range(41)])[:100_000]
        assert stats.kstest(lam, stats.halfcauchy.cdf).pvalue > 0.01

    def test_zero_weights_conditional(self, rng):
        p = 3
        state = sample_horseshoe_prior(p, rng)
        state.nu[:] = 0.25
        draws = [horseshoe_gibbs_update(state, np.zeros((p, p)), np.ones(p), rng).lambda2[0, 1] for _ in range(4000)]
        assert stats.kstest(draws, stats.invgamma(1.0, scale=4.0).cdf).pvalue > KS_LEVEL

    def test_prior_invariance(self, rng):
        p, n = 3, 3000
        d = np.array([0.5, 1.0, 2.0])
        before, after = [], []
        for _ in range(n):
            hs = sample_horseshoe_prior(p, rng)
            W = rng.normal(size=(p, p)) * np.sqrt(hs.prior_variance(d))
            new = horseshoe_gibbs_update(hs, W, d, rng)
            before.append(math.log(sample_horseshoe_prior(p, rng).tau2))
            after.append(math.log(new.tau2))
        assert stats.ks_2samp(before, after).pvalue > KS_LEVEL

    def test_positive_and_unit_diagonal(self, rng):
        W = rng.normal(size=(4, 4))
        np.fill_diagonal(W, 0)
        s = horseshoe_gibbs_update(sample_horseshoe_prior(4, rng), W, np.ones(4), rng)
        assert np.all(s.lambda2 > 0) and s.tau2 > 0 and np.all(s.nu > 0) and s.xi_aux > 0
        assert np.all(np.diag(s.lambda2) == 1)

    def test_snapshot_reproducible(self):
        def run():
            r = np.random.default_rng(7)
            s = sample_horseshoe_prior(3, r)
            W = np.array([[0, 0.5, 0], [0, 0, -1.0], [0.2, 0, 0]])
            return horseshoe_gibbs_update(s, W, np.ones(3), r)

        a, b = run(), run()
        assert np.array_equal(a.lambda2, b.lambda2) and a.tau2 == b.tau2


class TestGig:
    def test_density(self, rng):
        p, a, b = -2.5, 1.0, 6.0
        x = sample_gig(np.full(20000, p), a, b, rng)
        cdf = numeric_cdf(lambda t: (p - 1) * np.log(t) - 0.5 * (a * t + b / t), 1e-4, 1e3)
        assert stats.kstest(x, cdf).pvalue > KS_LEVEL


class TestStickBreaking:
    def _state(self, rng, M=4, p=1, mu=2.0):
        return NoiseScale(np.zeros(p, dtype=int), np.ones(M), np.r_[np.full(M - 1, 0.5), 1.0], mu, 1.0)

    def test_no_data_atom_is_prior(self, rng):
        mu = 2.0
        draws = []
        for _ in range(4000):
            s = stick_breaking_update(self._state(rng, mu=mu), np.zeros(1), np.zeros(1), rng)
            draws.append(s.atoms[s.assignment[0]])
        # inverse Gaussian with mean mu and shape mu^2
        assert stats.kstest(draws, stats.invgauss(mu=1.0 / mu, scale=mu**2).cdf).pvalue > KS_LEVEL

    def test_atom_conditional_matches_prior_times_likelihood(self, rng):
        mu, n, A = 2.0, 6.0, 3.0
        draws = []
        for _ in range(4000):
            s = stick_breaking_update(self._state(rng, mu=mu), np.array([n]), np.array([A]), rng)
            draws.append(s.atoms[s.assignment[0]])

        def log_post(t):
            log_prior = -1.5 * np.log(t) - (t - mu) ** 2 / (2 * t)
            log_lik = -0.5 * n * np.log(t) - A / t
            return log_prior + log_lik

        assert stats.kstest(draws, numeric_cdf(log_post, 1e-4, 1e3)).pvalue > KS_LEVEL

    def test_separated_groups_form_two_clusters(self):
        prior = PriorConfig(truncation=10)
        n_obs = np.full(6, 200.0)
        d_true = np.array([1, 1, 1, 100, 100, 100.0])
        ok = 0
        for chain in range(20):
            r = np.random.default_rng(chain)
            quad = 0.5 * r.chisquare(n_obs) * d_true
            state = sample_noise_prior(6, prior, r)
            counts = []
            for it in range(300):
                state = stick_breaking_update(state, n_obs, quad, r, prior)
                if it >= 100:
                    counts.append(len(np.unique(state.assignment)))
            ok += np.bincount(counts).argmax() >= 2
        assert ok >= 19

    def test_prior_invariance(self, rng):
        prior = PriorConfig(truncation=5, mu_d_prior_sd=2.0)
        p, n_obs = 4, np.full(4, 6.0)
        fwd, upd = [], []
        for _ in range(3000):
            state = sample_noise_prior(p, prior, rng)
            quad = 0.5 * rng.chisquare(n_obs) * state.d
            new = stick_breaking_update(state, n_obs, quad, rng, prior)
            ref = sample_noise_prior(p, prior, rng)
            fwd.append([math.log(ref.mu_d), math.log(ref.v), math.log(ref.d[0])])
            upd.append([math.log(new.mu_d), math.log(new.v), math.log(new.d[0])])
        fwd, upd = np.array(fwd), np.array(upd)
        for k in range(3):
            assert stats.ks_2samp(fwd[:, k], upd[:, k]).pvalue > KS_LEVEL

    def test_weights(self, rng):
        s = sample_noise_prior(5, PriorConfig(truncation=6), rng)
        w = stick_weights(s.sticks)
        assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
        np.testing.assert_array_equal(s.d, s.atoms[s.assignment])

    def test_truncation_too_small(self, rng):
        s = NoiseScale(np.zeros(2, dtype=int), np.ones(1), np.ones(1), 1.0, 1.0)
        with pytest.raises(EmptyTruncation):
            stick_breaking_update(s, np.ones(2), np.ones(2), rng)
        with pytest.raises(EmptyTruncation):
            sample_noise_prior(3, PriorConfig(truncation=1), rng)

    def test_log_beta_complement(self, rng):
        x = -np.expm1(log_beta_complement(np.full(20000, 2.0), np.full(20000, 3.0), rng))
        assert stats.kstest(x, stats.beta(2, 3).cdf).pvalue > KS_LEVEL

    def test_log_beta_complement_tiny_concentration(self, rng):
        lr = log_beta_complement(np.full(5000, 1.0), np.full(5000, 1e-3), rng)
        assert np.all(np.isfinite(lr))
        # log(1 - V) for V ~ Beta(1, b) is Exp(b) with a minus sign
        assert stats.kstest(-lr, stats.expon(scale=1e3).cdf).pvalue > KS_LEVEL


class TestAnglePrior:
    def test_beta_option_normalizes(self):
        prior = PriorConfig(angle_prior="beta", beta_a=2.5)
        val, _ = integrate.quad(lambda u: math.exp(angle_log_prior_latent(u, prior)), -np.inf, np.inf)
        assert abs(val - math.exp(special.betaln(2.5, 2.5))) < 1e-7

    def test_normal_option(self):
        prior = PriorConfig(sigma_t2=2.0)
        assert angle_log_prior_latent(2.0, prior) == pytest.approx(-1.0)


class TestShrinkage:
    def test_no_entries_gives_prior_deltas(self, rng):
        prior = PriorConfig()
        deltas = np.array([_mgp_update(np.zeros((0, 2)), np.ones((0, 2)), np.ones(2), 1.0, prior, rng)[1]
                           for _ in range(4000)])
        assert stats.kstest(deltas[:, 0], stats.gamma(prior.kappa1).cdf).pvalue > KS_LEVEL
        assert stats.kstest(deltas[:, 1], stats.gamma(prior.kappa2).cdf).pvalue > KS_LEVEL

    def test_tau_is_cumulative_product(self, rng):
        s = sample_shrinkage_prior(3, 4, 8, 3, PriorConfig(), rng)
        s = cumulative_shrinkage_update(s, sample_factors_prior(s, rng), rng)
        np.testing.assert_allclose(s.tau_xi, np.cumprod(s.delta_xi))
        np.testing.assert_allclose(s.tau_chi, np.cumprod(s.delta_chi))

    def test_prior_invariance(self, rng):
        prior = PriorConfig()
        fwd, upd = [], []
        for _ in range(3000):
            s = sample_shrinkage_prior(2, 3, 6, 2, prior, rng)
            new = cumulative_shrinkage_update(s, sample_factors_prior(s, rng), rng, prior)
            ref = sample_shrinkage_prior(2, 3, 6, 2, prior, rng)
            fwd.append([math.log(ref.tau_xi[-1]), math.log(ref.sigma_kappa), math.log(ref.sigma_xi)])
            upd.append([math.log(new.tau_xi[-1]), math.log(new.sigma_kappa), math.log(new.sigma_xi)])
        fwd, upd = np.array(fwd), np.array(upd)
        for k in range(3):
            assert stats.ks_2samp(fwd[:, k], upd[:, k]).pvalue > KS_LEVEL

    def test_penalty_null_space(self):
        P = second_difference_penalty(8, ridge=0.0)
        t = np.arange(8.0)
        np.testing.assert_allclose(P @ np.ones(8), 0, atol=1e-12)
        np.testing.assert_allclose(P @ t, 0, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(second_difference_penalty(8)) >= 0.01 - 1e-12)
