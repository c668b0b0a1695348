"""
Sparsity Selection Service
Chooses the factor sparsity s by cross-sectional cross-validation with a
penalized out-of-sample projection error.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from config import Config
from constants import (
    DEFAULT_J_PARTITIONS,
    DEFAULT_PENALTY_KIND,
    ErrorMessages,
    GRID_ABOVE_SQRT_T,
    GRID_BELOW_SQRT_T,
    MAX_DESIGN_CONDITION,
)
from services.base_service import BaseService
from services.panel_service import Panel, panel_service
from services.sparse_eigen_service import SolverSettings, sparse_eigen_service
from utils.error_handler import (
    DimensionError,
    NumericalError,
    PreconditionError,
    SingularDesignError,
    SparseApcaError,
)
from utils.helpers import ceil_sqrt, rng_for
from utils.validators import validate_positive_int


class PenaltyKind(str, Enum):
    PC_LINEAR = "pc_linear"
    IC_LOG = "ic_log"
    IC_LOG_SCALED = "ic_log_scaled"


@dataclass(frozen=True)
class CrossSectionSplit:
    """Disjoint 0-based train/test column indices"""

    train_indices: Tuple[int, ...]
    test_indices: Tuple[int, ...]
    seed: int

    def __post_init__(self):
        train, test = set(self.train_indices), set(self.test_indices)
        if train & test:
            raise PreconditionError("Train and test columns overlap")
        if len(self.train_indices) < 2 or len(self.test_indices) < 2:
            raise DimensionError("Each side of a split needs at least 2 series")


@dataclass(frozen=True)
class SparsitySelectionReport:
    """Cross-validation outcome over the candidate grid"""

    candidate_grid: Tuple[int, ...]
    raw_errors: Tuple[float, ...]
    penalties: Tuple[float, ...]
    criterion_values: Tuple[float, ...]
    selected: int
    j_partitions: int
    penalty_kind: str
    failed_candidates: Tuple[int, ...] = ()
    boundary_hit: bool = False
    split_errors: Tuple[Tuple[float, ...], ...] = field(default=(), compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'candidate_grid': list(self.candidate_grid),
            'raw_errors': list(self.raw_errors),
            'penalties': list(self.penalties),
            'criterion_values': list(self.criterion_values),
            'selected': self.selected,
            'j_partitions': self.j_partitions,
            'penalty_kind': self.penalty_kind,
            'failed_candidates': list(self.failed_candidates),
            'boundary_hit': self.boundary_hit,
        }


def _split_task(panel: Panel, split: CrossSectionSplit, r: int, grid: Sequence[int],
                settings: SolverSettings) -> List[Optional[float]]:
    """Testing errors of every candidate on one split; None marks a failed solve"""
    service = sparsity_selection_service
    train = panel_service.subset_columns(panel, split.train_indices)
    test = panel.values[:, list(split.test_indices)]
    gram = panel_service.scaled_gram(train)
    warm_start = sparse_eigen_service.dense_leading_eigenvector(gram, settings.warm_start_steps, settings.seed)
    if not np.any(warm_start):
        warm_start = None

    errors: List[Optional[float]] = []
    for cardinality in grid:
        try:
            results = sparse_eigen_service.sparse_eigen_sequence(
                gram, [cardinality] * r, settings, initial_vector=warm_start)
            factors = np.column_stack([np.sqrt(panel.t) * result.vector.values for result in results])
            errors.append(service.testing_error(factors, test))
        except SparseApcaError as error:
            service._handle_error("cross_validation_cell", error, {'s': cardinality, 'split_seed': split.seed})
            errors.append(None)
    return errors


class SparsitySelectionService(BaseService):
    """Service for data-driven sparsity selection"""

    def __init__(self):
        super().__init__("SparsitySelectionService")

    def make_splits(self, n: int, j: int = DEFAULT_J_PARTITIONS, seed: int = 0) -> List[CrossSectionSplit]:
        """
        J random balanced partitions of the N columns; the larger half trains

        Args:
            n: Number of series, at least 4
            j: Number of partitions
            seed: Master seed; split j uses SeedSequence([seed, j])

        Returns:
            List of CrossSectionSplit with sorted index tuples
        """
        n = validate_positive_int(n, "N", 4)
        j = validate_positive_int(j, "J", 1)
        n_train = math.ceil(n / 2)
        splits = []
        for index in range(j):
            permutation = rng_for(seed, index).permutation(n)
            splits.append(CrossSectionSplit(
                train_indices=tuple(sorted(int(i) for i in permutation[:n_train])),
                test_indices=tuple(sorted(int(i) for i in permutation[n_train:])),
                seed=seed,
            ))
        return splits

    def testing_error(self, factors: np.ndarray, test_values: np.ndarray) -> float:
        """R = ||X2 - P_F X2||_F^2 / (N2 T)"""
        factors = np.asarray(factors, dtype=float)
        if factors.ndim == 1:
            factors = factors[:, None]
        test_values = np.asarray(test_values, dtype=float)
        if factors.shape[0] != test_values.shape[0]:
            raise DimensionError("Factors and test panel disagree on T")
        design = factors.T @ factors
        condition = float(np.linalg.cond(design))
        if not np.isfinite(condition) or condition >= MAX_DESIGN_CONDITION:
            raise SingularDesignError(ErrorMessages.SINGULAR_DESIGN, details={'condition': condition})
        coefficients = linalg.solve(design, factors.T @ test_values, assume_a="pos")
        residual = test_values - factors @ coefficients
        t, n_test = test_values.shape
        return float(np.sum(residual ** 2)) / (n_test * t)

    def penalty_g(self, n_train: int, t: int) -> float:
        """((N1 + T) / (N1 T)) ln(N1 T / (N1 + T))"""
        n_train = validate_positive_int(n_train, "N1", 2)
        t = validate_positive_int(t, "T", 2)
        return ((n_train + t) / (n_train * t)) * math.log(n_train * t / (n_train + t))

    def default_grid(self, t: int) -> List[int]:
        """[ceil(sqrt T) - 10, ceil(sqrt T) + 150] clipped to [1, T]"""
        t = validate_positive_int(t, "T", 1)
        root = ceil_sqrt(t)
        low = max(1, root - GRID_BELOW_SQRT_T)
        high = min(t, root + GRID_ABOVE_SQRT_T)
        return list(range(low, high + 1))

    def penalty(self, kind: PenaltyKind, r: int, cardinality: int, n_train: int, t: int) -> float:
        g = self.penalty_g(n_train, t)
        if kind == PenaltyKind.IC_LOG_SCALED:
            return r * (cardinality / math.sqrt(t)) * g
        return r * cardinality * g

    def select_sparsity(self, panel: Panel, r: int, grid: Optional[Sequence[int]] = None,
                        j: int = DEFAULT_J_PARTITIONS, penalty_kind: str = DEFAULT_PENALTY_KIND,
                        settings: Optional[SolverSettings] = None, seed: int = 0,
                        threads: int = 1,
                        splits: Optional[Sequence[CrossSectionSplit]] = None) -> SparsitySelectionReport:
        """
        Pick s minimizing the penalized cross-validated testing error

        Args:
            panel: Centered panel with N >= 4
            r: Number of factors
            grid: Candidate sparsities; defaults to default_grid(T)
            j: Number of random partitions
            penalty_kind: pc_linear, ic_log or ic_log_scaled
            settings: Convergence settings
            seed: Master seed for the partitions
            threads: Worker count, 0 for all cores
            splits: Explicit partitions, overriding j and seed

        Returns:
            SparsitySelectionReport; ties go to the smallest s
        """
        if not panel.centered:
            raise PreconditionError(ErrorMessages.NOT_CENTERED)
        settings = settings or SolverSettings()
        try:
            kind = PenaltyKind(penalty_kind)
        except ValueError as error:
            raise DimensionError(f"Unknown penalty kind {penalty_kind!r}") from error
        r = validate_positive_int(r, "r", 1, panel.t)

        grid = sorted(set(self.default_grid(panel.t) if grid is None else grid))
        if not grid:
            raise DimensionError("Candidate grid is empty")
        grid = [validate_positive_int(value, "s", 1, panel.t) for value in grid]

        if splits is None:
            splits = self.make_splits(panel.n, j, seed)
        splits = list(splits)

        self._log_operation(
            "select_sparsity",
            f"T={panel.t} N={panel.n} r={r} grid=[{grid[0]}, {grid[-1]}] J={len(splits)} penalty={kind.value}")

        with self._timed("select_sparsity"):
            per_split = Parallel(n_jobs=Config.resolve_threads(threads))(
                delayed(_split_task)(panel, split, r, grid, settings) for split in splits
            )

        included, failed = [], []
        for column, cardinality in enumerate(grid):
            if any(errors[column] is None for errors in per_split):
                failed.append(cardinality)
            else:
                included.append(column)
        if not included:
            raise NumericalError("Every candidate sparsity failed on some split", details={"grid": grid})
        if failed:
            self.logger.warning(f"Excluded candidates after solver failures: {failed}")

        n_train = len(splits[0].train_indices)
        candidates, raw, penalties, criteria = [], [], [], []
        for column in included:
            cardinality = grid[column]
            # mean over splits in split order
            mean_error = float(np.mean([errors[column] for errors in per_split]))
            penalty = self.penalty(kind, r, cardinality, n_train, panel.t)
            if kind == PenaltyKind.PC_LINEAR:
                transformed = mean_error
            else:
                transformed = math.log(mean_error) if mean_error > 0 else -math.inf
            candidates.append(cardinality)
            raw.append(mean_error)
            penalties.append(penalty)
            criteria.append(transformed + penalty)

        best = int(np.argmin(criteria))
        selected = candidates[best]
        boundary_hit = len(grid) > 1 and selected in (grid[0], grid[-1])
        if boundary_hit:
            self.logger.warning(f"Selected sparsity {selected} lies on the grid boundary")

        return SparsitySelectionReport(
            candidate_grid=tuple(candidates),
            raw_errors=tuple(raw),
            penalties=tuple(penalties),
            criterion_values=tuple(criteria),
            selected=selected,
            j_partitions=len(splits),
            penalty_kind=kind.value,
            failed_candidates=tuple(failed),
            boundary_hit=boundary_hit,
            split_errors=tuple(
                tuple(errors[column] for column in included) for errors in per_split
            ),
        )


# Create singleton instance
sparsity_selection_service = SparsitySelectionService()
