"""
Tests for Sparsity Selection Service
"""
import math

import numpy as np
import pytest

from conftest import noise_free_panel, planted_factor
from services.panel_service import panel_service
from services.sparse_eigen_service import SolverSettings, sparse_eigen_service
from services.sparsity_selection_service import (
    CrossSectionSplit,
    PenaltyKind,
    SparsitySelectionService,
)
from utils.error_handler import DimensionError, NumericalError, PreconditionError, SingularDesignError

SUPPORT = (1, 7, 12, 20, 27, 33)
VALUES = (1.0, -3.5, 2.25, -2.5, 4.5, -1.75)


@pytest.fixture
def service():
    return SparsitySelectionService()


@pytest.fixture
def sparse_panel(rng):
    """Noise-free T=36, N=20 panel with a 6-sparse factor and strong loadings"""
    f = planted_factor(36, SUPPORT, VALUES)
    loadings = rng.uniform(5.0, 10.0, size=20) * rng.choice([-1.0, 1.0], size=20)
    return noise_free_panel(f[:, None], loadings[:, None])


class TestMakeSplits:
    """Test cases for SparsitySelectionService.make_splits"""

    def test_even_sizes(self, service):
        """Test N=4, J=1"""
        split = service.make_splits(4, 1, seed=3)[0]
        assert len(split.train_indices) == len(split.test_indices) == 2
        assert set(split.train_indices).isdisjoint(split.test_indices)

    def test_odd_train_gets_extra(self, service):
        """Test N=5 sizes"""
        split = service.make_splits(5, 1)[0]
        assert (len(split.train_indices), len(split.test_indices)) == (3, 2)

    def test_reproducible(self, service):
        """Test that the same seed gives the same splits"""
        assert service.make_splits(30, 4, seed=11) == service.make_splits(30, 4, seed=11)
        assert service.make_splits(30, 4, seed=11) != service.make_splits(30, 4, seed=12)

    def test_partitions_cover_all(self, service):
        """Test that each split is a sorted partition of the columns"""
        for split in service.make_splits(17, 5, seed=1):
            assert sorted(split.train_indices + split.test_indices) == list(range(17))
            assert list(split.train_indices) == sorted(split.train_indices)

    def test_too_few_series(self, service):
        """Test N < 4"""
        with pytest.raises(DimensionError):
            service.make_splits(3, 1)

    def test_overlap_rejected(self):
        """Test that overlapping sides are rejected"""
        with pytest.raises(PreconditionError):
            CrossSectionSplit(train_indices=(0, 1, 2), test_indices=(2, 3), seed=0)


class TestTestingError:
    """Test cases for SparsitySelectionService.testing_error"""

    def test_in_span(self, service, rng):
        """Test a test panel inside the factor span"""
        factors = rng.standard_normal((20, 2))
        test_values = factors @ rng.standard_normal((2, 6))
        assert service.testing_error(factors, test_values) == pytest.approx(0.0, abs=1e-20)

    def test_orthogonal(self, service, rng):
        """Test a test panel orthogonal to the factors"""
        basis, _ = np.linalg.qr(rng.standard_normal((12, 5)))
        factors = basis[:, :2]
        test_values = basis[:, 2:] @ rng.standard_normal((3, 4))
        expected = np.sum(test_values ** 2) / (4 * 12)
        assert service.testing_error(factors, test_values) == pytest.approx(expected, rel=1e-10)

    def test_matches_column_regressions(self, service, rng):
        """Test against one least-squares fit per column"""
        factors = rng.standard_normal((25, 3))
        test_values = rng.standard_normal((25, 7))
        total = 0.0
        for column in test_values.T:
            coefficients, *_ = np.linalg.lstsq(factors, column, rcond=None)
            total += np.sum((column - factors @ coefficients) ** 2)
        assert service.testing_error(factors, test_values) == pytest.approx(total / (7 * 25), rel=1e-10)

    def test_singular_factors(self, service, rng):
        """Test duplicated factor columns"""
        column = rng.standard_normal(10)
        with pytest.raises(SingularDesignError):
            service.testing_error(np.column_stack([column, column]), rng.standard_normal((10, 3)))


class TestPenalty:
    """Test cases for the penalty terms and grid"""

    def test_g_arithmetic(self, service):
        """Test g(10, 10) = 0.2 ln 5"""
        assert service.penalty_g(10, 10) == pytest.approx(0.321888, abs=1e-6)

    def test_g_symmetric(self, service):
        """Test g(N1, T) = g(T, N1)"""
        assert service.penalty_g(37, 250) == pytest.approx(service.penalty_g(250, 37), rel=1e-14)

    def test_g_vanishes(self, service):
        """Test that g decreases to zero along a doubling sequence"""
        values = [service.penalty_g(2 ** k, 2 ** (k + 1)) for k in range(3, 16)]
        assert all(later < earlier for earlier, later in zip(values, values[1:]))
        assert values[-1] < 1e-3

    def test_penalty_kinds(self, service):
        """Test r s g and r (s / sqrt T) g"""
        g = service.penalty_g(50, 100)
        assert service.penalty(PenaltyKind.PC_LINEAR, 2, 7, 50, 100) == pytest.approx(14 * g)
        assert service.penalty(PenaltyKind.IC_LOG, 2, 7, 50, 100) == pytest.approx(14 * g)
        assert service.penalty(PenaltyKind.IC_LOG_SCALED, 2, 7, 50, 100) == pytest.approx(2 * 0.7 * g)

    def test_default_grid_returns_panel(self, service):
        """Test the grid for T=3273"""
        grid = service.default_grid(3273)
        assert (grid[0], grid[-1]) == (48, 208)
        assert grid == list(range(48, 209))

    def test_default_grid_clipped(self, service):
        """Test clipping to [1, T] for short panels"""
        assert service.default_grid(50) == list(range(1, 51))


class TestSelectSparsity:
    """Test cases for SparsitySelectionService.select_sparsity"""

    def test_noise_free_selects_true_sparsity(self, service, sparse_panel):
        """Test that the smallest exact sparsity wins"""
        report = service.select_sparsity(sparse_panel, 1, grid=range(3, 10), j=2,
                                         penalty_kind="pc_linear", seed=5)

        assert report.selected == 6
        assert report.candidate_grid == tuple(range(3, 10))
        assert report.j_partitions == 2
        assert report.boundary_hit is False
        assert report.failed_candidates == ()

    def test_raw_error_non_increasing(self, service, sparse_panel):
        """Test that noise-free testing errors shrink as s grows"""
        report = service.select_sparsity(sparse_panel, 1, grid=range(1, 9), j=2, penalty_kind="pc_linear")
        errors = np.array(report.raw_errors)
        assert np.all(np.diff(errors) <= 1e-9)
        assert errors[5] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("kind", ["pc_linear", "ic_log", "ic_log_scaled"])
    def test_report_self_consistent(self, service, sparse_panel, kind):
        """Test criterion = transformed error + penalty"""
        report = service.select_sparsity(sparse_panel, 1, grid=[2, 4, 5], j=3, penalty_kind=kind, seed=2)
        n_train = math.ceil(sparse_panel.n / 2)

        for s, raw, penalty, criterion in zip(report.candidate_grid, report.raw_errors,
                                              report.penalties, report.criterion_values):
            transformed = raw if kind == "pc_linear" else math.log(raw)
            assert penalty == pytest.approx(service.penalty(PenaltyKind(kind), 1, s, n_train, sparse_panel.t))
            assert criterion == pytest.approx(transformed + penalty, rel=1e-12)
        assert report.criterion_values[report.candidate_grid.index(report.selected)] == min(report.criterion_values)

    def test_split_errors_average(self, service, sparse_panel):
        """Test that raw errors are split means"""
        report = service.select_sparsity(sparse_panel, 1, grid=[3, 4], j=4, penalty_kind="pc_linear")
        means = np.mean(np.array(report.split_errors), axis=0)
        np.testing.assert_allclose(report.raw_errors, means, rtol=1e-12)

    def test_boundary_hit(self, service, sparse_panel):
        """Test that a selection at the grid edge is flagged"""
        report = service.select_sparsity(sparse_panel, 1, grid=[6, 7, 8], j=1, penalty_kind="pc_linear")
        assert report.selected == 6
        assert report.boundary_hit is True

    def test_permutation_invariance(self, service, rng, sparse_panel):
        """Test that relabeling series with matching splits leaves the criterion unchanged"""
        settings = SolverSettings(epsilon=1e-12, max_iterations=20000)
        splits = service.make_splits(sparse_panel.n, 3, seed=9)
        permutation = rng.permutation(sparse_panel.n)
        inverse = np.argsort(permutation)
        permuted = panel_service.subset_columns(sparse_panel, permutation)
        permuted_splits = [
            CrossSectionSplit(
                train_indices=tuple(sorted(int(inverse[i]) for i in split.train_indices)),
                test_indices=tuple(sorted(int(inverse[i]) for i in split.test_indices)),
                seed=split.seed,
            )
            for split in splits
        ]

        original = service.select_sparsity(sparse_panel, 1, grid=range(2, 9), penalty_kind="pc_linear",
                                           settings=settings, splits=splits)
        relabeled = service.select_sparsity(permuted, 1, grid=range(2, 9), penalty_kind="pc_linear",
                                            settings=settings, splits=permuted_splits)
        assert relabeled.selected == original.selected
        np.testing.assert_allclose(relabeled.criterion_values, original.criterion_values, rtol=1e-8, atol=1e-12)

    def test_failed_candidate_excluded(self, service, sparse_panel, monkeypatch):
        """Test that a candidate failing on a split is dropped and reported"""
        solve = sparse_eigen_service.sparse_eigen_sequence

        def flaky(s, sparsities, settings=None, initial_vector=None):
            if sparsities[0] == 4:
                raise NumericalError("forced failure")
            return solve(s, sparsities, settings, initial_vector)

        monkeypatch.setattr(sparse_eigen_service, "sparse_eigen_sequence", flaky)
        report = service.select_sparsity(sparse_panel, 1, grid=[3, 4, 6, 7], j=2,
                                         penalty_kind="pc_linear", threads=1)

        assert report.failed_candidates == (4,)
        assert report.candidate_grid == (3, 6, 7)
        assert report.selected == 6

    def test_requires_centered(self, service, rng):
        """Test that an uncentered panel is rejected"""
        with pytest.raises(PreconditionError):
            service.select_sparsity(panel_service.from_array(rng.standard_normal((10, 6))), 1, grid=[2])

    def test_unknown_penalty(self, service, sparse_panel):
        """Test an unsupported penalty name"""
        with pytest.raises(DimensionError):
            service.select_sparsity(sparse_panel, 1, grid=[2], penalty_kind="bic")

    def test_grid_out_of_range(self, service, sparse_panel):
        """Test a candidate above T"""
        with pytest.raises(DimensionError):
            service.select_sparsity(sparse_panel, 1, grid=[2, 100])

    def test_report_dict(self, service, sparse_panel):
        """Test the serialized report keys"""
        payload = service.select_sparsity(sparse_panel, 1, grid=[5, 6], j=1).to_dict()
        assert payload['penalty_kind'] == "ic_log_scaled"
        assert set(payload) == {
            'candidate_grid', 'raw_errors', 'penalties', 'criterion_values', 'selected',
            'j_partitions', 'penalty_kind', 'failed_candidates', 'boundary_hit',
        }
