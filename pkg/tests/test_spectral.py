import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from statdag.errors import DimensionMismatch, InvalidBasis, OutOfDomain
from statdag.spectral import (
    SpectralDensity,
    SpectralEvaluator,
    SpectralParams,
    autocovariance,
    bspline_basis,
    cp_kappa,
    density,
    eval_spectral_density,
    integrate_symmetric,
    link,
    link_grad,
    link_inverse,
    spectral_weights,
    theta_from_kappa,
)


def random_params(rng, S=2, p=3, J=8, R=2, scale=1.0):
    return SpectralParams(scale * rng.normal(size=(S, R)), scale * rng.normal(size=(p, R)),
                          scale * rng.normal(size=(J, R)))


class TestBasis:
    @pytest.mark.parametrize("J,degree", [(4, 3), (10, 3), (7, 2), (5, 1)])
    def test_columns_integrate_to_one(self, J, degree):
        for j in range(J):
            val, _ = integrate.quad(lambda u: bspline_basis(J, degree, [u])[0, j], 0, 1, limit=200)
            assert abs(val - 1) < 1e-8

    @pytest.mark.parametrize("J", [4, 6, 12])
    def test_partition_of_unity(self, J):
        u = np.linspace(0, 1, 101)
        np.testing.assert_allclose(bspline_basis(J, 3, u, normalized=False).sum(axis=1), 1.0, atol=1e-12)

    def test_bernstein_first_function(self):
        u = np.linspace(0, 1, 37)
        np.testing.assert_allclose(bspline_basis(4, 3, u)[:, 0], 4 * (1 - u) ** 3, atol=1e-12)

    def test_unsorted_grid(self):
        u = np.array([0.9, 0.1, 0.5])
        np.testing.assert_allclose(bspline_basis(6, 3, u), bspline_basis(6, 3, np.sort(u))[[2, 0, 1]])

    def test_too_small(self):
        with pytest.raises(InvalidBasis):
            bspline_basis(3, 3, [0.5])

    def test_grid_outside(self):
        with pytest.raises(ValueError):
            bspline_basis(5, 3, [1.5])


class TestLink:
    def test_values(self):
        assert link(0.0) == 0.5
        assert link(1.0) == 0.75

    @given(st.floats(-1e6, 1e6))
    def test_symmetry(self, u):
        assert abs(link(u) + link(-u) - 1) < 1e-12

    @given(st.floats(-50, 50), st.floats(1e-3, 10))
    def test_increasing(self, u, du):
        assert link(u + du) > link(u)

    @given(st.floats(-100, 100))
    def test_inverse(self, u):
        assert abs(link_inverse(link(u)) - u) < 1e-8 * max(1, abs(u)) ** 2

    def test_gradient_fd(self, rng):
        u = rng.normal(size=20) * 3
        h = 1e-6
        np.testing.assert_allclose(link_grad(u), (link(u + h) - link(u - h)) / (2 * h), rtol=1e-6)


class TestKappaTheta:
    def test_all_ones(self):
        par = SpectralParams(np.ones((2, 1)), np.ones((3, 1)), np.ones((5, 1)))
        assert np.all(cp_kappa(par) == 1)

    def test_triple_loop(self, rng):
        par = random_params(rng, R=2)
        K = cp_kappa(par)
        for s in range(par.S):
            for k in range(par.p):
                for j in range(par.J):
                    ref = sum(par.xi[s, r] * par.chi[k, r] * par.eta[j, r] for r in range(par.R))
                    assert abs(K[s, k, j] - ref) < 1e-12

    def test_linear_in_xi(self, rng):
        a, b = random_params(rng), random_params(rng)
        b = SpectralParams(b.xi, a.chi, a.eta)
        mix = SpectralParams(2 * a.xi - 3 * b.xi, a.chi, a.eta)
        np.testing.assert_allclose(cp_kappa(mix), 2 * cp_kappa(a) - 3 * cp_kappa(b), atol=1e-12)

    def test_rank_permutation_invariance(self, rng):
        par = random_params(rng, R=3)
        perm = [2, 0, 1]
        swapped = SpectralParams(par.xi[:, perm], par.chi[:, perm], par.eta[:, perm])
        np.testing.assert_allclose(spectral_weights(swapped), spectral_weights(par), atol=1e-14)

    def test_equal_kappa(self):
        np.testing.assert_allclose(theta_from_kappa(np.full(7, 0.3)), 1 / 14)

    def test_limit(self):
        np.testing.assert_allclose(theta_from_kappa(np.array([0.0, 1e6])), [1 / 6, 1 / 3], atol=1e-6)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=15))
    def test_simplex(self, kappa):
        th = theta_from_kappa(np.array(kappa))
        assert np.all(th > 0)
        assert abs(th.sum() - 0.5) < 1e-12

    def test_rank_mismatch(self):
        with pytest.raises(DimensionMismatch):
            SpectralParams(np.ones((2, 2)), np.ones((3, 1)), np.ones((5, 2)))


class TestDensity:
    def test_symmetric_and_positive(self, rng):
        par = random_params(rng)
        w = rng.uniform(-np.pi, np.pi, size=50)
        f = eval_spectral_density(par, 1, 2, w)
        assert np.all(f > 0)
        np.testing.assert_allclose(f, eval_spectral_density(par, 1, 2, -w), rtol=1e-14)

    def test_unit_integral(self, rng):
        par = random_params(rng, scale=2.0)
        for s in range(par.S):
            for k in range(par.p):
                assert abs(integrate_symmetric(density(par, s, k)) - 1) < 1e-8

    def test_uniform_weights(self):
        J = 6
        f = SpectralDensity(np.full(J, 1 / (2 * J)))
        w = np.linspace(-np.pi, np.pi, 11)
        ref = bspline_basis(J, 3, np.abs(w) / np.pi).sum(axis=1) / (2 * np.pi * J)
        np.testing.assert_allclose(f(w), ref, rtol=1e-12)
        val, _ = integrate.quad(f, -np.pi, np.pi, points=[0.0], limit=200)
        assert abs(val - 1) < 1e-8

    def test_out_of_domain(self, rng):
        with pytest.raises(OutOfDomain):
            eval_spectral_density(random_params(rng), 0, 0, 3.5)

    def test_evaluator_matches(self, rng):
        par = random_params(rng)
        w = np.linspace(0.1, np.pi, 9)
        vals = SpectralEvaluator(w, par.J)(par)
        np.testing.assert_allclose(vals[1, 2], eval_spectral_density(par, 1, 2, w), rtol=1e-12)


class TestAutocovariance:
    def test_unit_variance(self, rng):
        assert abs(autocovariance(density(random_params(rng), 0, 1), 0) - 1) < 1e-8

    @pytest.mark.parametrize("h", [1, 2, 5])
    def test_flat_density(self, h):
        assert abs(autocovariance(lambda w: 1 / (2 * np.pi), h)) < 1e-10

    def test_first_lag_of_cosine_density(self):
        f = lambda w: (1 + np.cos(w)) / (2 * np.pi)
        assert abs(autocovariance(f, 1) - 0.5) < 1e-10
        assert abs(autocovariance(f, 0) - 1) < 1e-10

    def test_bounded_by_variance(self, rng):
        f = density(random_params(rng, scale=3.0), 0, 0)
        for h in range(1, 8):
            assert abs(autocovariance(f, h)) <= 1 + 1e-10

    def test_negative_lag(self):
        with pytest.raises(ValueError):
            autocovariance(lambda w: 1 / (2 * np.pi), -1)
