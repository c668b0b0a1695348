"""
Tests for Factor Model Service
"""
import numpy as np
import pytest
from scipy import linalg

from conftest import noise_free_panel, planted_factor
from services.factor_model_service import FactorModelService, LoadingMatrix, SparseFactorSet
from services.panel_service import panel_service
from services.simulation_service import simulation_service
from utils.error_handler import (
    DegenerateSpectrumError,
    DimensionError,
    PreconditionError,
    SingularDesignError,
)

SUPPORT = (2, 5, 9, 14, 20, 27)
VALUES = (3.0, -3.0, 2.0, -2.0, 4.0, -4.0)


@pytest.fixture
def service():
    return FactorModelService()


@pytest.fixture
def one_factor(rng):
    """Noise-free T=30, N=15 panel driven by a 6-sparse zero-mean factor"""
    f = planted_factor(30, SUPPORT, VALUES)
    loadings = rng.uniform(1.0, 2.0, size=15) * rng.choice([-1.0, 1.0], size=15)
    return noise_free_panel(f[:, None], loadings[:, None]), f


def factor_set_from(factors):
    factors = np.atleast_2d(np.asarray(factors, dtype=float))
    supports = tuple(tuple(int(i) for i in np.flatnonzero(factors[:, j])) for j in range(factors.shape[1]))
    return SparseFactorSet(factors=factors, supports=supports,
                           sparsities=tuple(factors.shape[0] for _ in supports),
                           converged=tuple(True for _ in supports))


class TestEstimate:
    """Test cases for FactorModelService.estimate"""

    def test_noise_free_recovery(self, service, one_factor, tight_settings):
        """Test exact recovery of a sparse factor up to sign"""
        panel, f = one_factor
        fit = service.estimate(panel, 1, [6], tight_settings)

        assert simulation_service.factor_angle_error(fit.factors[:, 0], f) < 1e-6
        assert fit.factor_set.supports == (SUPPORT,)
        assert fit.factor_set.converged == (True,)

    def test_factor_normalization(self, service, one_factor):
        """Test diag(F'F)/T = 1 and support sizes"""
        panel, _ = one_factor
        fit = service.estimate(panel, 1, [6])

        assert fit.factors[:, 0] @ fit.factors[:, 0] / panel.t == pytest.approx(1.0, abs=1e-8)
        assert np.count_nonzero(fit.factors[:, 0]) == len(fit.factor_set.supports[0]) <= 6

    def test_residuals_definition(self, service, rng):
        """Test residuals = X - common component and OLS orthogonality"""
        panel = panel_service.demean(panel_service.from_array(rng.standard_normal((40, 25))))
        fit = service.estimate(panel, 2, [8, 5])

        np.testing.assert_allclose(panel.values - service.common_component(fit), fit.residuals, atol=1e-10)
        assert np.max(np.abs(fit.factors.T @ fit.residuals)) <= 1e-6 * np.linalg.norm(panel.values)

    def test_common_component_reproduces_exact_panel(self, service, one_factor, tight_settings):
        """Test that a noise-free panel is reproduced"""
        panel, _ = one_factor
        fit = service.estimate(panel, 1, [6], tight_settings)
        np.testing.assert_allclose(service.common_component(fit), panel.values, atol=1e-8)

    def test_gram_eigenvalues_scale(self, service, rng):
        """Test gram_eigenvalues against the squared singular values of X"""
        panel = panel_service.demean(panel_service.from_array(rng.standard_normal((20, 12))))
        fit = service.estimate(panel, 1, [5])

        singular = np.linalg.svd(panel.values, compute_uv=False) ** 2
        assert np.all(np.diff(fit.gram_eigenvalues) <= 1e-9)
        np.testing.assert_allclose(fit.gram_eigenvalues[:12], singular, rtol=1e-8, atol=1e-8 * singular[0])

    def test_requires_centered(self, service, rng):
        """Test that an uncentered panel is rejected"""
        with pytest.raises(PreconditionError):
            service.estimate(panel_service.from_array(rng.standard_normal((10, 4))), 1, [3])

    def test_sparsity_count(self, service, one_factor):
        """Test that one sparsity per factor is required"""
        panel, _ = one_factor
        with pytest.raises(DimensionError):
            service.estimate(panel, 2, [6])

    def test_dense_limit_matches_apca(self, service, rng, tight_settings):
        """Test s=T against the classical top-r eigenvectors"""
        f = rng.standard_normal((40, 3)) * np.array([4.0, 3.0, 2.0])
        loadings = rng.standard_normal((60, 3))
        values = f @ loadings.T + 0.5 * rng.standard_normal((40, 60))
        panel = panel_service.demean(panel_service.from_array(values))

        fit = service.estimate(panel, 3, [40, 40, 40], tight_settings)
        dense_factors, _ = service.apca(panel, 3)
        distance = service.subspace_distance(linalg.orth(fit.factors), linalg.orth(dense_factors), "rho")
        assert distance < 1e-6


class TestEstimateLoadings:
    """Test cases for FactorModelService.estimate_loadings"""

    def test_exact_regression(self, service):
        """Test a spike factor with loadings of 2"""
        t = 9
        f = np.zeros(t)
        f[0] = np.sqrt(t)
        panel = panel_service.from_array(np.outer(f, np.full(4, 2.0)))
        loading_matrix = service.estimate_loadings(panel, factor_set_from(f[:, None]))

        np.testing.assert_allclose(loading_matrix.loadings[:, 0], np.full(4, 2.0), atol=1e-12)
        np.testing.assert_allclose(loading_matrix.noise_variances, 0.0, atol=1e-20)

    def test_orthonormal_factors(self, service, rng):
        """Test L = X'F/T and se = sigma/sqrt(T) when F'F/T = I"""
        t = 50
        basis, _ = np.linalg.qr(rng.standard_normal((t, 2)))
        factors = np.sqrt(t) * basis
        panel = panel_service.from_array(rng.standard_normal((t, 7)))
        loading_matrix = service.estimate_loadings(panel, factor_set_from(factors))

        np.testing.assert_allclose(loading_matrix.loadings, panel.values.T @ factors / t, atol=1e-10)
        expected_se = np.sqrt(loading_matrix.noise_variances)[:, None] / np.sqrt(t)
        np.testing.assert_allclose(loading_matrix.standard_errors, np.repeat(expected_se, 2, axis=1), atol=1e-10)
        assert np.all(loading_matrix.standard_errors >= 0)

    def test_singular_design(self, service, rng):
        """Test that duplicated factor columns are rejected"""
        column = rng.standard_normal(10)
        panel = panel_service.from_array(rng.standard_normal((10, 3)))
        with pytest.raises(SingularDesignError):
            service.estimate_loadings(panel, factor_set_from(np.column_stack([column, column])))

    def test_loading_matrix_flags(self):
        """Test that missing standard errors are distinguishable from zeros"""
        assert LoadingMatrix(loadings=np.ones((3, 1))).has_standard_errors is False
        assert LoadingMatrix(loadings=np.ones((3, 1)), standard_errors=np.zeros((3, 1))).has_standard_errors


class TestNumFactorsRatio:
    """Test cases for the eigenvalue ratio selector"""

    def test_constructed_gap(self, service):
        """Test eigenvalues [10, 9, 1, 0.9, 0.8] with K=3"""
        assert service.select_num_factors_ratio([10.0, 9.0, 1.0, 0.9, 0.8], 3) == 2

    def test_ties_pick_smallest(self, service):
        """Test equal eigenvalues"""
        assert service.select_num_factors_ratio([5.0, 5.0, 5.0, 5.0], 3) == 1

    def test_zero_tail_floored(self, service):
        """Test that trailing zeros do not produce 0/0"""
        ratios = service.eigenvalue_ratios([4.0, 2.0, 0.0, 0.0], 3)
        assert np.all(np.isfinite(ratios))
        assert service.select_num_factors_ratio([4.0, 2.0, 0.0, 0.0], 3) == 2

    def test_all_zero(self, service):
        """Test a spectrum of zeros"""
        with pytest.raises(DegenerateSpectrumError):
            service.select_num_factors_ratio([0.0, 0.0, 0.0], 2)

    def test_default_bound_uses_min_t_n(self, service):
        """Test that K defaults to min(T, N) // 3"""
        eigenvalues = [10.0, 9.0, 1.0, 0.9, 0.05, 0.04, 0.03, 0.02, 0.015, 0.01, 0.008, 0.006]
        assert service.select_num_factors_ratio(eigenvalues, n=6) == 2
        assert service.select_num_factors_ratio(eigenvalues) == 4

    def test_needs_k_plus_one(self, service):
        """Test that K must leave one eigenvalue for the numerator"""
        with pytest.raises(DimensionError):
            service.select_num_factors_ratio([3.0, 2.0, 1.0], 3)

    def test_scale_invariance(self, service, rng):
        """Test r_hat(cX) = r_hat(X)"""
        f = rng.standard_normal((60, 2)) * 3.0
        values = f @ rng.standard_normal((30, 2)).T + rng.standard_normal((60, 30))
        selected = []
        for scale in (1.0, 0.01, 250.0):
            panel = panel_service.demean(panel_service.from_array(scale * values))
            eigenvalues = service.gram_eigenvalues(panel_service.scaled_gram(panel).values, panel.n, panel.t)
            selected.append(service.select_num_factors_ratio(eigenvalues, 10))
        assert selected[0] == selected[1] == selected[2] == 2


class TestNumFactorsIc:
    """Test cases for the information criterion selector"""

    def test_pure_noise_picks_one(self, service, rng):
        """Test a panel without factor structure"""
        panel = panel_service.demean(panel_service.from_array(rng.standard_normal((60, 60))))
        assert service.select_num_factors_ic(panel) == 1

    def test_two_strong_factors(self, service, rng):
        """Test a strong two-factor panel"""
        f = rng.standard_normal((100, 2))
        loadings = rng.uniform(2.0, 4.0, size=(80, 2)) * rng.choice([-1.0, 1.0], size=(80, 2))
        values = f @ loadings.T + rng.standard_normal((100, 80))
        panel = panel_service.demean(panel_service.from_array(values))
        assert service.select_num_factors_ic(panel, 8) == 2

    def test_exact_fit_picks_smallest(self, service, one_factor):
        """Test that a perfect fit at k=1 is selected"""
        panel, _ = one_factor
        criteria = service.information_criteria(panel, 4)
        assert criteria[0] == -np.inf
        assert service.select_num_factors_ic(panel, 4) == 1

    def test_criterion_values(self, service, rng):
        """Test IC(k) against an explicit dense refit"""
        panel = panel_service.demean(panel_service.from_array(rng.standard_normal((30, 20))))
        criteria = service.information_criteria(panel, 3)
        n, t = panel.n, panel.t
        for k in (1, 2, 3):
            factors, loadings = service.apca(panel, k)
            rss = np.sum((panel.values - factors @ loadings.T) ** 2)
            expected = np.log(rss / (n * t)) + k * ((n + t) / (n * t)) * np.log(n * t / (n + t))
            assert criteria[k - 1] == pytest.approx(expected, rel=1e-8)


class TestSubspaceDistance:
    """Test cases for FactorModelService.subspace_distance"""

    def test_identical_spaces(self, service, rng):
        """Test that a space is at distance 0 from itself"""
        basis, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        for kind in ("D", "rho", "sin_theta"):
            assert service.subspace_distance(basis, basis, kind) == pytest.approx(0.0, abs=1e-7)

    def test_orthogonal_complements(self, service):
        """Test perpendicular planes in R^4"""
        identity = np.eye(4)
        h1, h2 = identity[:, :2], identity[:, 2:]
        assert service.subspace_distance(h1, h2, "D") == pytest.approx(1.0)
        assert service.subspace_distance(h1, h2, "rho") == pytest.approx(2.0)
        assert service.subspace_distance(h1, h2, "sin_theta") == pytest.approx(np.sqrt(2.0))

    def test_identities(self, service, rng):
        """Test rho^2 = 2 r D^2 = 2 ||sin theta||^2"""
        h1, _ = np.linalg.qr(rng.standard_normal((10, 3)))
        h2, _ = np.linalg.qr(rng.standard_normal((10, 3)))
        d_value = service.subspace_distance(h1, h2, "D")
        rho = service.subspace_distance(h1, h2, "rho")
        sin_theta = service.subspace_distance(h1, h2, "sin_theta")

        assert 0.0 <= d_value <= 1.0
        assert rho ** 2 == pytest.approx(2 * 3 * d_value ** 2, abs=1e-10)
        assert rho ** 2 == pytest.approx(2 * sin_theta ** 2, abs=1e-8)

    def test_non_orthonormal(self, service):
        """Test that non-orthonormal bases are rejected"""
        with pytest.raises(PreconditionError):
            service.subspace_distance(np.ones((4, 1)), np.eye(4)[:, :1], "D")

    def test_unknown_kind(self, service):
        """Test an unsupported distance name"""
        with pytest.raises(DimensionError):
            service.subspace_distance(np.eye(3)[:, :1], np.eye(3)[:, :1], "frobenius")


class TestDiagnostics:
    """Test cases for explained variance, group means and active periods"""

    def test_explained_variance_noise_free(self, service, one_factor, tight_settings):
        """Test that an exact one-factor fit explains everything"""
        panel, _ = one_factor
        fit = service.estimate(panel, 1, [6], tight_settings)
        shares = service.explained_variance(panel, fit)

        assert shares['total'] == pytest.approx(1.0, abs=1e-8)
        assert shares['per_factor'][0] == pytest.approx(1.0, abs=1e-8)

    def test_group_loading_means(self, service):
        """Test per-group averages with an unmapped series"""
        loading_matrix = LoadingMatrix(loadings=np.array([[1.0], [3.0], [5.0], [7.0]]))
        summary = service.group_loading_means(
            loading_matrix, ["a", "b", "c", "d"], {"a": "g1", "b": "g1", "c": "g2"})

        assert list(summary.index) == ["g1", "g2"]
        assert summary.loc["g1", "factor_1"] == pytest.approx(2.0)
        assert summary.loc["g2", "factor_1"] == pytest.approx(5.0)
        assert summary.loc["g1", "count"] == 2

    def test_group_loading_means_no_match(self, service):
        """Test a mapping that covers no series"""
        with pytest.raises(PreconditionError):
            service.group_loading_means(LoadingMatrix(loadings=np.ones((2, 1))), ["a", "b"], {"z": "g"})

    def test_active_periods_order(self, service, one_factor, tight_settings):
        """Test that support dates are listed by decreasing magnitude"""
        panel, _ = one_factor
        fit = service.estimate(panel, 1, [6], tight_settings)
        periods = service.active_periods(fit, panel.labels())[0]

        assert sorted(entry['index'] for entry in periods) == list(SUPPORT)
        assert {periods[0]['index'], periods[1]['index']} == {20, 27}
        magnitudes = [abs(entry['value']) for entry in periods]
        assert magnitudes == sorted(magnitudes, reverse=True)
