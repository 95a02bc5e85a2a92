"""
Tests for the density estimate, conflict p-values, the weak-informativity
measure, the bioassay simulator and the grid scan.
"""
import numpy as np
import pytest
from scipy import integrate
from scipy.stats import kstest

from src.model.hyperparameters import Hyperparameters
from src.priorcheck.bioassay import (
    DOSES,
    BioassaySimulator,
    bioassay_posterior_mode,
    bioassay_posterior_mode_batch,
    bioassay_simulate,
    fitted_probabilities,
    posterior_gradient,
    simulate_corpus,
)
from src.priorcheck.conflict import (
    conflict_pvalues,
    direct_conflict_pvalues,
    lower_tail_gap,
    weak_informativity_zeta,
)
from src.priorcheck.kde import kde, silverman_bandwidth
from src.priorcheck.scan import ScanConfig, fit_scan_model, prior_scan
from src.utils.exceptions import (
    DegenerateQuantileError,
    DegenerateSampleError,
    DimensionMismatchError,
    DomainError,
)
from src.vsugs.online import OnlineOptions


class TestKde:
    def test_standard_normal_at_zero(self):
        points = np.random.default_rng(0).standard_normal(100_000)
        assert kde(points, np.array([0.0]))[0] == pytest.approx(0.3989, abs=0.005)

    def test_integrates_to_one(self, rng):
        points = rng.standard_normal(2000) * 2.0 + 1.0
        grid = np.linspace(-15, 17, 4001)
        density = kde(points, grid)
        assert np.all(density >= 0)
        assert integrate.trapezoid(density, grid) == pytest.approx(1.0, abs=0.02)

    def test_bivariate_mass(self, rng):
        points = rng.standard_normal((1000, 2))
        axis = np.linspace(-6, 6, 121)
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        density = kde(points, np.column_stack([gx.ravel(), gy.ravel()])).reshape(gx.shape)
        mass = integrate.trapezoid(integrate.trapezoid(density, axis, axis=1), axis)
        assert mass == pytest.approx(1.0, abs=0.02)

    def test_bandwidth(self):
        points = np.array([0.0, 1.0, 2.0, 3.0])
        expected = 1.06 * np.std(points, ddof=1) * 4 ** -0.2
        assert silverman_bandwidth(points)[0] == pytest.approx(expected)

    def test_degenerate_samples(self):
        with pytest.raises(DegenerateSampleError):
            kde(np.array([1.0]), np.array([0.0]))
        with pytest.raises(DegenerateSampleError):
            kde(np.ones((5, 2)), np.zeros((1, 2)))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            kde(rng.standard_normal((10, 2)), np.zeros((1, 3)))


class TestConflictPvalues:
    def test_mode_and_far_tail(self, rng):
        sample = rng.standard_normal(2000)
        p = conflict_pvalues(sample, np.array([0.0, 12.0]))
        assert p[0] > 0.9
        assert p[1] == 0.0

    def test_null_uniformity(self):
        passes = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            p = conflict_pvalues(rng.standard_normal((1500, 2)), rng.standard_normal((300, 2)))
            passes += int(kstest(p, "uniform").pvalue > 0.01)
        assert passes >= 18

    def test_direct_mode(self, rng):
        simulator = BioassaySimulator()
        baseline = simulator(np.array([2.0, 2.0]), rng, 50)
        p = direct_conflict_pvalues(simulator, np.array([2.0, 2.0]), baseline, 200, rng)
        assert p.shape == (50,)
        assert np.all((p >= 0) & (p <= 1))


class TestZeta:
    baseline = np.arange(1, 101) / 100.0

    def test_alternative_never_conflicts(self):
        assert weak_informativity_zeta(self.baseline, np.ones(50), 0.1) == 1.0

    def test_same_distribution(self):
        assert weak_informativity_zeta(self.baseline, self.baseline, 0.1) == pytest.approx(0.0)

    def test_alternative_conflicts_more(self):
        assert weak_informativity_zeta(self.baseline, np.full(50, 0.05), 0.1) == 0.0

    def test_partial(self):
        alt = np.concatenate([np.full(5, 0.05), np.ones(95)])
        assert weak_informativity_zeta(self.baseline, alt, 0.1) == pytest.approx(0.5)

    def test_degenerate_quantile(self):
        with pytest.raises(DegenerateQuantileError):
            weak_informativity_zeta(np.zeros(20), self.baseline, 0.1)

    def test_gamma_range(self):
        with pytest.raises(DomainError):
            weak_informativity_zeta(self.baseline, self.baseline, 1.0)

    def test_lower_tail_gap(self, rng):
        a = rng.standard_normal(500)
        assert lower_tail_gap(a, a) == 0.0
        assert lower_tail_gap(a, a + 3.0) > 0.1


class TestBioassay:
    def test_doses_standardized(self):
        assert DOSES.mean() == pytest.approx(0.0, abs=1e-12)
        assert DOSES.std(ddof=1) == pytest.approx(0.5)

    def test_no_trials_gives_prior_mode(self):
        np.testing.assert_allclose(bioassay_posterior_mode(np.zeros(4), trials=0), [0.0, 0.0], atol=1e-12)

    def test_mode_is_stationary(self):
        y = np.array([0.0, 1.0, 3.0, 5.0])
        mode = bioassay_posterior_mode(y)
        assert np.max(np.abs(posterior_gradient(mode, y))) < 1e-8
        assert mode[1] > 0

    def test_separable_counts_stay_finite(self):
        modes = bioassay_posterior_mode_batch(np.array([[0, 0, 5, 5], [5, 5, 0, 0], [0, 0, 0, 0]]))
        assert np.all(np.isfinite(modes))
        assert modes[0, 1] > 0 > modes[1, 1]

    def test_wrong_group_count(self):
        with pytest.raises(DimensionMismatchError):
            bioassay_posterior_mode(np.zeros(3))

    def test_transforms(self):
        modes = np.array([[0.3, 1.7]])
        x = DOSES[[1, 2]]
        np.testing.assert_allclose(fitted_probabilities(modes, "printed")[0], 1 / (1 + np.exp(-0.3 + 1.7 * x)))
        np.testing.assert_allclose(fitted_probabilities(modes, "conventional")[0], 1 / (1 + np.exp(-(0.3 + 1.7 * x))))
        with pytest.raises(DomainError):
            fitted_probabilities(modes, "probit")

    def test_simulator_output(self, rng):
        stats = BioassaySimulator()(np.array([1.0, 2.0]), rng, 7)
        assert stats.shape == (7, 2)
        assert np.all((stats > 0) & (stats < 1))
        assert bioassay_simulate(1.0, 2.0, rng).shape == (2,)
        with pytest.raises(DomainError):
            BioassaySimulator()(np.array([-1.0, 2.0]), rng, 3)

    def test_corpus_within_bounds(self, rng):
        lambdas, stats = simulate_corpus(40, rng, BioassaySimulator(), ((0.5, 1.0), (2.0, 3.0)))
        assert lambdas.shape == stats.shape == (40, 2)
        assert np.all((lambdas[:, 0] >= 0.5) & (lambdas[:, 0] <= 1.0))
        assert np.all((lambdas[:, 1] >= 2.0) & (lambdas[:, 1] <= 3.0))


def scan_hyper():
    return Hyperparameters.defaults(2, 10, trunc=2, alpha=100.0, a_omega=5.0, b_omega=0.5, sigma_dof=3.0)


@pytest.fixture(scope="module")
def scan_model():
    rng = np.random.default_rng(77)
    lambdas, stats = simulate_corpus(400, rng, BioassaySimulator())
    return fit_scan_model(lambdas, stats, scan_hyper(), rng, OnlineOptions(warm_count=50, seed=77))


class TestScan:
    def config(self, **kwargs):
        return ScanConfig.regular_grid(
            ((0.5, 5.0), (0.5, 10.0)), 2, (3.0, 2.5), k_neighbors=100, baseline_count=120, seed=5, **kwargs
        )

    def test_regular_grid(self):
        cfg = self.config()
        assert cfg.grid == [(0.5, 0.5), (0.5, 10.0), (5.0, 0.5), (5.0, 10.0)]

    def test_scan_is_deterministic(self, scan_model):
        a = prior_scan(BioassaySimulator(), self.config(), scan_model)
        b = prior_scan(BioassaySimulator(), self.config(), scan_model)
        np.testing.assert_array_equal(a.zeta, b.zeta)
        assert a.pvalues.shape == (4, 120)
        assert np.all((a.zeta >= 0) & (a.zeta <= 1))

    def test_workers_do_not_change_result(self, scan_model):
        serial = prior_scan(BioassaySimulator(), self.config(), scan_model)
        threaded = prior_scan(BioassaySimulator(), self.config(workers=2), scan_model)
        np.testing.assert_array_equal(serial.zeta, threaded.zeta)
        np.testing.assert_array_equal(serial.pvalues, threaded.pvalues)

    def test_direct_baseline(self, scan_model):
        result = prior_scan(BioassaySimulator(), self.config(baseline_mode="direct", direct_count=300), scan_model)
        assert result.baseline_pvalues.shape == (120,)

    def test_frames(self, scan_model):
        result = prior_scan(BioassaySimulator(), self.config(), scan_model)
        frame = result.to_frame()
        assert list(frame.columns) == ["sigma0", "sigma1", "zeta"]
        assert len(result.pvalue_frame()) == 120 * 5

    def test_grid_dimension_checked(self, scan_model):
        cfg = ScanConfig(grid=[(1.0, 2.0, 3.0)], baseline=(3.0, 2.5), k_neighbors=10, baseline_count=20)
        with pytest.raises(DomainError):
            prior_scan(BioassaySimulator(), cfg, scan_model)

    def test_adjusted_sample_shape(self, scan_model):
        assert scan_model.adjusted_sample(np.array([2.0, 4.0]), 30).shape == (30, 2)


@pytest.mark.slow
def test_moderate_prior_is_weakly_informative():
    rng = np.random.default_rng(2024)
    simulator = BioassaySimulator()
    lambdas, stats = simulate_corpus(50_000, rng, simulator)
    model = fit_scan_model(lambdas, stats, scan_hyper(), rng, OnlineOptions(warm_count=500, seed=1))
    cfg = ScanConfig(grid=[(4.0, 4.0)], baseline=(10.0, 2.5), k_neighbors=1000, baseline_count=1000, seed=3)
    assert prior_scan(simulator, cfg, model).zeta[0] > 0

    observed = simulator(np.array([10.0, 2.5]), rng, 1000)
    regression = conflict_pvalues(model.adjusted_sample(np.array([4.0, 4.0]), 1000), observed)
    direct = direct_conflict_pvalues(simulator, np.array([4.0, 4.0]), observed, 10_000, rng)
    assert lower_tail_gap(direct, regression) < 0.05
