"""
Tests for sequential allocation probabilities, one-step assimilation and
the online fitting loop.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import t as student_t

from src.batchvb.coordinate_ascent import BatchOptions, fit_batch_designs, update_tau
from src.model.hyperparameters import Hyperparameters
from src.model.state import AllocationTable, ComponentState, init_state
from src.numstat.distributions import InvGammaParams, InvWishartParams
from src.numstat.linalg import SpdMatrix
from src.utils.exceptions import DomainError, InsufficientDataError
from src.vsugs.allocation import (
    AllocProbs,
    alloc_probs,
    allocation_prior_weights,
    conditional_log_evidence,
    plugin_gap,
)
from src.vsugs.online import OnlineOptions, assimilate_one, fit_online
from tests.conftest import model_class_data, two_regime_data


class TestPriorWeights:
    def test_second_observation(self):
        masses = np.zeros(10)
        masses[0] = 1.0
        w = allocation_prior_weights(masses, seen=1, alpha=3.0)
        assert w[0] == pytest.approx(0.325)
        assert w[1] == pytest.approx(0.675)
        assert np.all(w[2:] == 0)
        assert w.sum() == pytest.approx(1.0)

    def test_first_observation(self):
        np.testing.assert_array_equal(allocation_prior_weights(np.zeros(4), 0, 3.0), [1.0, 0.0, 0.0, 0.0])

    def test_full_candidate_set_sums_to_one(self):
        masses = np.array([3.0, 1.5, 0.5])
        w = allocation_prior_weights(masses, seen=5, alpha=2.0)
        assert w.sum() == pytest.approx(1.0)


class TestConditionalEvidence:
    def test_matches_student_t(self):
        S, nu, mu, v, b = 1.7, 4.0, 2.5, 3.0, 0.4
        comp = ComponentState(np.array([[b]]), SpdMatrix.from_values(np.array([[v]])))
        sigma = InvWishartParams(nu, SpdMatrix.from_values(np.array([[S]])))
        for y in (-2.0, 0.1, 3.3):
            got = conditional_log_evidence(np.array([y]), np.array([1.0]), comp, sigma, mu)
            scale = np.sqrt(S * (1.0 / mu + 1.0 / v) / nu)
            assert got == pytest.approx(student_t.logpdf(y, df=nu, loc=b, scale=scale), abs=1e-10)

    def test_matches_student_t_with_design(self, rng):
        V = np.array([[2.0, 0.3, 0.0], [0.3, 1.5, 0.2], [0.0, 0.2, 1.0]])
        beta = rng.standard_normal((3, 1))
        e = np.array([1.0, 0.4, 0.7])
        comp = ComponentState(beta, SpdMatrix.from_values(V))
        sigma = InvWishartParams(5.0, SpdMatrix.from_values(np.array([[0.8]])))
        leverage = e @ np.linalg.solve(V, e)
        scale = np.sqrt(0.8 * (1.0 / 1.2 + leverage) / 5.0)
        got = conditional_log_evidence(np.array([0.9]), e, comp, sigma, 1.2)
        assert got == pytest.approx(student_t.logpdf(0.9, df=5.0, loc=float(beta[:, 0] @ e), scale=scale), abs=1e-10)

    def test_rescaling_shifts_by_log_factor(self):
        comp = ComponentState(np.zeros((1, 1)), SpdMatrix.identity(1))
        c = 3.5
        base = conditional_log_evidence(
            np.array([0.8]), np.ones(1), comp, InvWishartParams(3.0, SpdMatrix.from_values(np.array([[2.0]]))), 2.0
        )
        scaled = conditional_log_evidence(
            np.array([0.8 * c]), np.ones(1), comp,
            InvWishartParams(3.0, SpdMatrix.from_values(np.array([[2.0 * c * c]]))), 2.0,
        )
        assert scaled == pytest.approx(base - np.log(c), abs=1e-12)

    def test_rejects_nonpositive_tau(self):
        comp = ComponentState(np.zeros((1, 1)), SpdMatrix.identity(1))
        with pytest.raises(DomainError):
            conditional_log_evidence(np.zeros(1), np.ones(1), comp, InvWishartParams(2.0, SpdMatrix.identity(1)), 0.0)

    def test_plugin_gap_small_when_tau_concentrated(self, rng):
        h = Hyperparameters.defaults(2, 2, trunc=2, a_tau=1e5, b_tau=1e4)
        state = init_state(h)
        gap = plugin_gap(rng.standard_normal(2), np.array([1.0, 0.5, 0.2]), state, 0)
        assert abs(gap) < 1e-3


class TestAllocProbs:
    def test_first_observation_forced(self):
        h = Hyperparameters.defaults(2, 1, trunc=3)
        alloc = alloc_probs(np.array([0.3, -0.2]), np.array([1.0, 0.5]), init_state(h), h.alpha)
        np.testing.assert_array_equal(alloc.probs, [1.0, 0.0, 0.0])
        assert alloc.index == 1
        assert alloc.candidates == 1

    def test_identical_components_split_evenly(self):
        h = Hyperparameters.defaults(2, 1, trunc=2)
        comp = ComponentState(np.ones((2, 2)), SpdMatrix.from_values(np.array([[3.0, 0.5], [0.5, 2.0]])), 2.5)
        state = init_state(h).replace(components=(comp, comp), seen=5)
        alloc = alloc_probs(np.array([0.3, -0.2]), np.array([1.0, 0.5]), state, h.alpha)
        np.testing.assert_allclose(alloc.probs, [0.5, 0.5], atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=2))
    def test_normalized(self, small_fit, y):
        e = small_fit.E[0]
        alloc = alloc_probs(np.array(y), e, small_fit.state, small_fit.h.alpha)
        assert np.all(alloc.probs >= 0)
        assert alloc.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_permutation_equivariance(self, small_fit):
        state = small_fit.state
        flipped = state.replace(components=state.components[::-1])
        for i in range(5):
            a = alloc_probs(small_fit.Y[i], small_fit.E[i], state, small_fit.h.alpha)
            b = alloc_probs(small_fit.Y[i], small_fit.E[i], flipped, small_fit.h.alpha)
            np.testing.assert_allclose(b.probs, a.probs[::-1], rtol=1e-10, atol=1e-14)


class TestAssimilate:
    def test_zero_weight_component_untouched(self, small_fit):
        state = small_fit.state
        alloc = AllocProbs(index=state.seen + 1, probs=np.array([1.0, 0.0]),
                           log_marginals=np.zeros(2), prior_weights=np.full(2, 0.5))
        new = assimilate_one(small_fit.Y[0], small_fit.E[0], state, alloc, small_fit.h)
        assert new.components[1] is state.components[1]
        assert new.components[0] is not state.components[0]
        assert new.sigma.dof == state.sigma.dof + 1.0
        assert new.seen == state.seen + 1
        assert new.masses.sum() == pytest.approx(state.masses.sum() + 1.0)

    def test_masses_track_seen(self, small_fit):
        assert small_fit.state.masses.sum() == pytest.approx(small_fit.state.seen)
        assert small_fit.fit.alloc_history.shape == (200, 2)

    def test_single_component_matches_batch_formulas(self, rng):
        _, Y, basis, E, _ = model_class_data(20, rng, basis_count=2)
        h = Hyperparameters.defaults(2, 2, trunc=1)
        state = init_state(h)
        V0 = state.components[0].prec.values.copy()
        S0 = state.sigma.scale.values.copy()
        mus = []
        for y, e in zip(Y, E):
            mus.append(float(state.tau.shape / state.tau.rate))
            state = assimilate_one(y, e, state, alloc_probs(y, e, state, h.alpha), h)

        mus = np.array(mus)
        V = V0 + (E * mus[:, None]).T @ E
        beta = np.linalg.solve(V, (E * mus[:, None]).T @ Y)
        S = S0 + (Y * mus[:, None]).T @ Y - beta.T @ V @ beta
        comp = state.components[0]
        np.testing.assert_allclose(comp.prec.values, V, rtol=1e-8)
        np.testing.assert_allclose(comp.beta_hat, beta, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(state.sigma.scale.values, S, rtol=1e-8)
        assert state.sigma.dof == h.sigma_dof + 20

    def test_recompute_mode_needs_statistics(self, small_fit):
        state = small_fit.state
        alloc = alloc_probs(small_fit.Y[0], small_fit.E[0], state, small_fit.h.alpha)
        with pytest.raises(DomainError):
            assimilate_one(small_fit.Y[0], small_fit.E[0], state, alloc, small_fit.h, tau_mode="recompute")


class TestFitOnline:
    def test_recomputed_tau_equals_batch_update(self):
        rng = np.random.default_rng(21)
        X, Y, basis, E, _ = model_class_data(60, rng, basis_count=2)
        h = Hyperparameters.defaults(2, 2, trunc=2)
        fit = fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=20, tau_mode="recompute"))
        expected = update_tau(Y, E, AllocationTable(fit.alloc_history), fit.state, h)
        assert fit.state.tau.shape == pytest.approx(expected.shape)
        assert fit.state.tau.rate == pytest.approx(expected.rate, rel=1e-8)

    def test_warm_start_is_batch_fit(self):
        rng = np.random.default_rng(22)
        X, Y, basis, E, _ = model_class_data(30, rng, basis_count=2)
        h = Hyperparameters.defaults(2, 2, trunc=2)
        online = fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=30, seed=4))
        batch = fit_batch_designs(Y, basis.design(X), h, BatchOptions(seed=4))
        for a, b in zip(online.state.components, batch.state.components):
            np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
        np.testing.assert_array_equal(online.alloc_history, batch.alloc.q)
        assert online.warm_diagnostics.iterations == batch.diagnostics.iterations

    def test_no_warm_start(self):
        rng = np.random.default_rng(23)
        X, Y, basis, _, _ = model_class_data(15, rng, basis_count=1)
        h = Hyperparameters.defaults(2, 1, trunc=3)
        fit = fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=0))
        np.testing.assert_array_equal(fit.alloc_history[0], [1.0, 0.0, 0.0])
        assert fit.warm_diagnostics is None
        assert fit.state.seen == 15

    def test_warm_count_exceeds_stream(self):
        rng = np.random.default_rng(24)
        X, Y, basis, _, _ = model_class_data(10, rng, basis_count=1)
        h = Hyperparameters.defaults(2, 1, trunc=2)
        with pytest.raises(InsufficientDataError):
            fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=11))

    def test_deterministic(self):
        a = fit_online_twice(seed=3)
        b = fit_online_twice(seed=3)
        np.testing.assert_array_equal(a.alloc_history, b.alloc_history)
        assert a.state.tau.rate == b.state.tau.rate

    def test_bound_trace_recorded(self):
        rng = np.random.default_rng(25)
        X, Y, basis, _, _ = model_class_data(40, rng, basis_count=1)
        h = Hyperparameters.defaults(2, 1, trunc=2)
        fit = fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=10, track_elbo=True))
        assert len(fit.bound_trace) == 30
        assert set(fit.timings) == {"warm_batch", "online_loop"}

    def test_allocation_follows_regression_regime(self):
        rng = np.random.default_rng(26)
        n = 1000
        X, Y, basis, _, labels = two_regime_data(n, rng)
        h = Hyperparameters.defaults(2, 2, trunc=2, a_omega=1.0, b_omega=1.0)
        q = fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=0)).alloc_history

        majorities = [int(np.argmax(q[labels == label].sum(axis=0))) for label in (0, 1)]
        assert majorities[0] != majorities[1]
        hits = sum(int(np.sum(q[labels == label, j] > 0.9)) for label, j in zip((0, 1), majorities))
        assert hits >= 0.95 * n


def fit_online_twice(seed):
    rng = np.random.default_rng(30)
    X, Y, basis, _, _ = model_class_data(50, rng, basis_count=2)
    h = Hyperparameters.defaults(2, 2, trunc=3)
    return fit_online(zip(X, Y), h, basis, OnlineOptions(warm_count=10, seed=seed))
