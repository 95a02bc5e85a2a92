"""
Tests for the predictive t-mixture, its marginals and quantiles.
"""
import numpy as np
import pytest
from scipy import integrate

from src.basis.kernel_basis import build_basis
from src.model.hyperparameters import Hyperparameters
from src.model.state import ComponentState, init_state
from src.numstat.distributions import InvWishartParams, sample
from src.predictive.mixture import (
    determinant_routes,
    effective_components,
    marginal_cdf,
    marginal_quantile,
    marginal_table,
    predictive_logpdf,
    predictive_mean,
    predictive_mixture,
    predictive_mixture_design,
    predictive_weights,
    variance_diagnostic,
)
from src.utils.exceptions import DimensionMismatchError, DomainError, ImproperMixtureError

PROBES = np.array([[0.0, 0.0], [1.2, -0.7], [-1.9, 1.5]])


class TestMixture:
    def test_weights_sum_to_one(self, small_fit):
        w = predictive_weights(small_fit.state, small_fit.h.alpha)
        assert w.sum() == pytest.approx(1.0)
        assert np.all(w > 0)

    def test_locations_are_linear_predictions(self, small_fit):
        comps = effective_components(small_fit.state, small_fit.h)
        for x0 in PROBES:
            mix = predictive_mixture(x0, small_fit.state, small_fit.basis, small_fit.h)
            e0 = small_fit.basis.design(x0[None, :])[0]
            for comp, source in zip(mix.components, comps):
                np.testing.assert_allclose(comp.location, source.beta_hat.T @ e0, rtol=1e-9, atol=1e-12)
                assert comp.dof == pytest.approx(small_fit.state.sigma.dof + 1.0 - 2)

    def test_unoccupied_component_uses_prior(self):
        h = Hyperparameters.defaults(2, 1, trunc=3)
        state = init_state(h)
        busy = ComponentState(np.full((2, 2), 5.0), state.components[0].prec, 4.0)
        state = state.replace(components=(busy, busy, ComponentState(np.full((2, 2), 9.0), busy.prec, 0.0)), seen=8)
        comps = effective_components(state, h)
        assert comps[0] is busy
        np.testing.assert_array_equal(comps[2].beta_hat, np.zeros((2, 2)))

    def test_three_density_routes_agree(self, small_fit, rng):
        for x0 in PROBES:
            mix = predictive_mixture(x0, small_fit.state, small_fit.basis, small_fit.h)
            for j in range(len(mix.components)):
                y0 = mix.components[j].location + 0.3 * rng.standard_normal(2)
                routes = determinant_routes(y0, mix, j)
                assert routes["lemma"] == pytest.approx(routes["direct"], abs=1e-8)
                assert routes["t_density"] == pytest.approx(routes["direct"], abs=1e-8)

    def test_density_integrates_to_one(self, scalar_fit):
        mix = predictive_mixture(np.array([0.4, -0.3]), scalar_fit.state, scalar_fit.basis, scalar_fit.h)
        center = predictive_mean(mix)[0]
        grid = np.linspace(center - 60.0, center + 60.0, 240_001)
        density = np.exp(predictive_logpdf(grid[:, None], mix))
        assert integrate.trapezoid(density, grid) == pytest.approx(1.0, abs=1e-4)

    def test_mean_is_weighted_location(self, small_fit):
        mix = predictive_mixture(PROBES[1], small_fit.state, small_fit.basis, small_fit.h)
        expected = sum(w * c.location for w, c in zip(mix.weights, mix.components))
        np.testing.assert_allclose(predictive_mean(mix), expected)

    def test_variance_matches_marginal_scale(self, small_fit):
        mix = predictive_mixture(PROBES[2], small_fit.state, small_fit.basis, small_fit.h)
        comp = mix.components[0]
        cov = variance_diagnostic(mix, 0)
        np.testing.assert_allclose(cov, comp.shape.inverse() / (comp.dof - 2.0), rtol=1e-10)
        np.testing.assert_allclose(np.diag(cov), comp.marginal_scale() ** 2 * comp.dof / (comp.dof - 2.0), rtol=1e-10)

    def test_heavy_tails_have_no_mean(self):
        h = Hyperparameters.defaults(2, 1, trunc=2, sigma_dof=1.5)
        X = np.random.default_rng(0).uniform(-1, 1, (20, 2))
        basis = build_basis(X, 1, np.random.default_rng(1))
        mix = predictive_mixture(X[0], init_state(h), basis, h)
        with pytest.raises(ImproperMixtureError):
            predictive_mean(mix)
        with pytest.raises(ImproperMixtureError):
            variance_diagnostic(mix, 0)
        assert np.isfinite(predictive_logpdf(np.zeros(2), mix))

    def test_design_length_checked(self, small_fit):
        with pytest.raises(DimensionMismatchError):
            predictive_mixture_design(np.ones(small_fit.state.design_dim + 1), small_fit.state, small_fit.h)

    @pytest.mark.slow
    def test_monte_carlo_moments(self, small_fit):
        rng = np.random.default_rng(99)
        state = small_fit.state
        e0 = small_fit.basis.design(PROBES[1][None, :])[0]
        mix = predictive_mixture_design(e0, state, small_fit.h)
        comp = effective_components(state, small_fit.h)[0]
        mu = float(state.tau.shape / state.tau.rate)
        leverage = float(comp.prec.inv_quad(e0))

        n = 400_000
        sigmas = sample(InvWishartParams(state.sigma.dof, state.sigma.scale), rng, n)
        chol = np.linalg.cholesky(sigmas)
        z = rng.standard_normal((n, 2, 1))
        draws = comp.beta_hat.T @ e0 + np.sqrt(leverage + 1.0 / mu) * (chol @ z)[:, :, 0]

        se = draws.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(draws.mean(axis=0) - mix.components[0].location) < 4 * se)
        np.testing.assert_allclose(np.cov(draws.T), variance_diagnostic(mix, 0), rtol=0.05)

    @pytest.mark.slow
    def test_monte_carlo_density(self, small_fit):
        rng = np.random.default_rng(5)
        state = small_fit.state
        mu = float(state.tau.shape / state.tau.rate)
        n = 1_000_000
        sigmas = sample(InvWishartParams(state.sigma.dof, state.sigma.scale), rng, n)
        _, logdet = np.linalg.slogdet(sigmas)
        probes = np.array([[0.0, 0.0], [0.5, -0.5], [-1.0, 1.0], [1.5, 0.3], [-0.2, -1.4]])
        x0 = PROBES[1]
        e0 = small_fit.basis.design(x0[None, :])[0]
        mix = predictive_mixture(x0, state, small_fit.basis, small_fit.h)
        comps = effective_components(state, small_fit.h)
        for y0 in probes:
            density = np.zeros(n)
            for w, comp in zip(mix.weights, comps):
                # beta integrated out exactly; tau at its variational mean
                scale = float(comp.prec.inv_quad(e0)) + 1.0 / mu
                d = y0 - comp.beta_hat.T @ e0
                quad = np.einsum("i,nij,j->n", d, np.linalg.inv(sigmas), d) / scale
                density += w * np.exp(-np.log(2 * np.pi) - np.log(scale) - 0.5 * logdet - 0.5 * quad)
            se = density.std() / np.sqrt(n)
            assert abs(density.mean() - np.exp(predictive_logpdf(y0, mix))) < 4 * se


class TestMarginals:
    def test_cdf_limits(self, small_fit):
        mix = predictive_mixture(PROBES[0], small_fit.state, small_fit.basis, small_fit.h)
        for dim in range(2):
            assert marginal_cdf(mix, dim, -1e8) == pytest.approx(0.0, abs=1e-9)
            assert marginal_cdf(mix, dim, 1e8) == pytest.approx(1.0, abs=1e-9)

    def test_cdf_monotone(self, small_fit):
        mix = predictive_mixture(PROBES[1], small_fit.state, small_fit.basis, small_fit.h)
        values = marginal_cdf(mix, 0, np.linspace(-5, 5, 201))
        assert np.all(np.diff(values) >= 0)

    @pytest.mark.parametrize("u", [1e-4, 0.05, 0.5, 0.93, 0.9999])
    def test_quantile_inverts_cdf(self, small_fit, u):
        mix = predictive_mixture(PROBES[2], small_fit.state, small_fit.basis, small_fit.h)
        for dim in range(2):
            q = marginal_quantile(mix, dim, u)
            assert marginal_cdf(mix, dim, q) == pytest.approx(u, abs=1e-9)

    def test_quantile_domain(self, small_fit):
        mix = predictive_mixture(PROBES[0], small_fit.state, small_fit.basis, small_fit.h)
        with pytest.raises(DomainError):
            marginal_quantile(mix, 0, 0.0)
        with pytest.raises(DomainError):
            marginal_quantile(mix, 0, np.array([0.5, 1.0]))
        with pytest.raises(DimensionMismatchError):
            marginal_cdf(mix, 2, 0.0)

    def test_table_matches_single_row_marginals(self, small_fit):
        E = small_fit.E[:6]
        table = marginal_table(E, small_fit.state, small_fit.h)
        for i, e in enumerate(E):
            row = predictive_mixture_design(e, small_fit.state, small_fit.h).marginals()
            np.testing.assert_allclose(table.location[i], row.location[0], rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(table.scale[i], row.scale[0], rtol=1e-9)
            assert table.dof == pytest.approx(row.dof)

    def test_table_quantiles_vectorized(self, small_fit):
        table = marginal_table(small_fit.E[:4], small_fit.state, small_fit.h)
        u = np.array([0.1, 0.35, 0.6, 0.9])
        q = table.quantile(1, u)
        np.testing.assert_allclose(table.cdf(1, q), u, atol=1e-9)
        grid = table.quantile(1, np.tile([[0.25, 0.75]], (4, 1)))
        assert grid.shape == (4, 2)
        assert np.all(grid[:, 0] < grid[:, 1])

    def test_mirror_symmetry(self, small_fit):
        state = small_fit.state
        mirrored = state.replace(components=tuple(
            ComponentState(-c.beta_hat, c.prec, c.mass) for c in state.components
        ))
        x0 = PROBES[1]
        mix = predictive_mixture(x0, state, small_fit.basis, small_fit.h)
        flipped = predictive_mixture(x0, mirrored, small_fit.basis, small_fit.h)
        for u in (0.1, 0.3):
            assert marginal_quantile(flipped, 0, u) == pytest.approx(-marginal_quantile(mix, 0, 1.0 - u), abs=1e-8)
