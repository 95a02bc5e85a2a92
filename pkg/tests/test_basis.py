"""
Tests for standardization, center selection, bandwidth and the design map.
"""
import numpy as np
import pytest

from src.basis.kernel_basis import (
    BasisMap,
    Standardizer,
    build_basis,
    estimate_bandwidth,
    expand,
    fit_standardizer,
    select_centers,
)
from src.utils.exceptions import (
    ConstantColumnError,
    DegenerateBandwidthError,
    DimensionMismatchError,
    DomainError,
    InsufficientDataError,
)


def unit_basis(centers, kappa_sq, kernel="literal"):
    centers = np.asarray(centers, dtype=float)
    dim = centers.shape[1]
    return BasisMap(centers, kappa_sq, Standardizer(np.zeros(dim), np.ones(dim)), kernel)


class TestStandardizer:
    def test_two_points(self):
        s = fit_standardizer(np.array([[0.0], [2.0]]))
        np.testing.assert_allclose(s.apply(np.array([[0.0], [2.0]]))[:, 0], [-1.0, 1.0])

    def test_population_sd(self):
        X = np.array([[1.0, 10.0], [2.0, 20.0], [4.0, 60.0]])
        s = fit_standardizer(X)
        np.testing.assert_allclose(s.sd, X.std(axis=0, ddof=0))
        Z = s.apply(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=0), 1.0)

    def test_constant_column(self):
        with pytest.raises(ConstantColumnError):
            fit_standardizer(np.array([[1.0, 3.0], [2.0, 3.0]]))

    def test_single_row(self):
        with pytest.raises(InsufficientDataError):
            fit_standardizer(np.array([[1.0, 3.0]]))

    def test_wrong_width(self):
        s = fit_standardizer(np.array([[0.0], [2.0]]))
        with pytest.raises(DimensionMismatchError):
            s.apply(np.zeros((3, 2)))


class TestCentersAndBandwidth:
    def test_centers_are_distinct_rows(self, rng):
        X = rng.standard_normal((30, 3))
        centers = select_centers(X, 10, rng)
        assert centers.shape == (10, 3)
        assert len({tuple(c) for c in centers}) == 10
        assert all(any(np.array_equal(c, x) for x in X) for c in centers)

    def test_too_many_centers(self, rng):
        with pytest.raises(InsufficientDataError):
            select_centers(np.zeros((4, 2)), 5, rng)

    def test_two_point_bandwidth(self, rng):
        assert estimate_bandwidth(np.array([[0.0], [2.0]]), rng) == pytest.approx(2.0)

    def test_three_point_bandwidth(self, rng):
        X = np.array([[0.0], [1.0], [2.0]])
        assert estimate_bandwidth(X, rng) == pytest.approx(4.0 / 3.0)
        assert estimate_bandwidth(X, rng, mode="mean-sq") == pytest.approx(2.0)

    def test_coincident_points(self, rng):
        with pytest.raises(DegenerateBandwidthError, match="degenerate bandwidth"):
            estimate_bandwidth(np.ones((5, 2)), rng)

    def test_unknown_mode(self, rng):
        with pytest.raises(DomainError):
            estimate_bandwidth(np.zeros((3, 1)), rng, mode="median")

    def test_large_sample_uses_random_pairs(self):
        X = np.random.default_rng(0).standard_normal((3000, 2))
        a = estimate_bandwidth(X, np.random.default_rng(1))
        b = estimate_bandwidth(X, np.random.default_rng(1))
        assert a == b
        # mean distance between two standard bivariate normals is sqrt(pi)
        assert a == pytest.approx(np.sqrt(np.pi), rel=0.05)


class TestDesign:
    def test_literal_kernel_values(self):
        basis = unit_basis([[1.0], [2.0], [4.0]], 0.5)
        np.testing.assert_allclose(expand(np.array([0.0]), basis), [1.0, np.exp(-1), np.exp(-2), np.exp(-4)])

    def test_gaussian_sq_kernel_values(self):
        basis = unit_basis([[1.0], [2.0]], 0.5, kernel="gaussian-sq")
        np.testing.assert_allclose(expand(np.array([0.0]), basis), [1.0, np.exp(-1), np.exp(-4)])

    def test_entries_bounded(self, rng):
        X = rng.standard_normal((50, 3))
        basis = build_basis(X, 8, rng)
        E = basis.design(X)
        assert E.shape == (50, 9)
        np.testing.assert_array_equal(E[:, 0], 1.0)
        assert np.all((E[:, 1:] > 0) & (E[:, 1:] <= 1))

    def test_center_permutation_permutes_columns(self, rng):
        centers = rng.standard_normal((5, 2))
        order = np.array([3, 0, 4, 1, 2])
        X = rng.standard_normal((7, 2))
        E = unit_basis(centers, 1.3).design(X)
        Ep = unit_basis(centers[order], 1.3).design(X)
        np.testing.assert_array_equal(Ep[:, 1:], E[:, 1:][:, order])

    def test_no_centers(self, rng):
        basis = build_basis(rng.standard_normal((10, 2)), 0, rng)
        np.testing.assert_array_equal(basis.design(np.zeros((3, 2))), np.ones((3, 1)))

    def test_expand_needs_vector(self):
        with pytest.raises(DimensionMismatchError):
            expand(np.zeros((2, 1)), unit_basis([[1.0]], 1.0))

    def test_unknown_kernel(self):
        with pytest.raises(DomainError):
            unit_basis([[1.0]], 1.0, kernel="laplace")

    def test_dict_roundtrip(self, rng):
        X = rng.standard_normal((40, 3))
        basis = build_basis(X, 6, rng, kernel="gaussian-sq", bandwidth_mode="mean-sq")
        again = BasisMap.from_dict(basis.to_dict())
        np.testing.assert_array_equal(again.design(X), basis.design(X))
        assert again.kernel == "gaussian-sq"

    def test_build_is_seeded(self):
        X = np.random.default_rng(5).standard_normal((60, 2))
        a = build_basis(X, 5, np.random.default_rng(8))
        b = build_basis(X, 5, np.random.default_rng(8))
        np.testing.assert_array_equal(a.centers, b.centers)
        assert a.kappa_sq == b.kappa_sq
