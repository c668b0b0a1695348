"""
Factor Model Service
Sparse factor estimation, loadings with standard errors, factor-count
selection and subspace distances.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from constants import DISTANCE_KINDS, EIGENVALUE_FLOOR, ErrorMessages, MAX_DESIGN_CONDITION
from services.base_service import BaseService
from services.panel_service import Panel, panel_service
from services.sparse_eigen_service import SolverResult, SolverSettings, sparse_eigen_service
from utils.error_handler import (
    DegenerateSpectrumError,
    DimensionError,
    NumericalError,
    PreconditionError,
    SingularDesignError,
)
from utils.helpers import default_num_factors_bound
from utils.validators import validate_orthonormal_columns, validate_positive_int


@dataclass(frozen=True)
class SparseFactorSet:
    """T x r factors scaled so that F'F / T has unit diagonal"""

    factors: np.ndarray
    supports: Tuple[Tuple[int, ...], ...]
    sparsities: Tuple[int, ...]
    converged: Tuple[bool, ...]

    def __post_init__(self):
        factors = np.array(self.factors, dtype=float, copy=True)
        if factors.ndim != 2 or factors.shape[1] != len(self.sparsities):
            raise DimensionError("Factor matrix must have one column per sparsity")
        for column, (support, bound) in enumerate(zip(self.supports, self.sparsities)):
            if len(support) > bound or np.count_nonzero(factors[:, column]) != len(support):
                raise NumericalError(f"Factor {column + 1} violates its support", details={'bound': bound})
        factors.setflags(write=False)
        object.__setattr__(self, 'factors', factors)

    @property
    def r(self) -> int:
        return self.factors.shape[1]

    @property
    def t(self) -> int:
        return self.factors.shape[0]

    @classmethod
    def from_results(cls, results: Sequence[SolverResult], t: int) -> "SparseFactorSet":
        factors = np.column_stack([np.sqrt(t) * result.vector.values for result in results])
        return cls(
            factors=factors,
            supports=tuple(result.vector.support for result in results),
            sparsities=tuple(result.vector.cardinality_bound for result in results),
            converged=tuple(result.converged for result in results),
        )


@dataclass(frozen=True)
class LoadingMatrix:
    """N x r loadings with optional standard errors and idiosyncratic variances"""

    loadings: np.ndarray
    standard_errors: Optional[np.ndarray] = None
    noise_variances: Optional[np.ndarray] = None

    @property
    def has_standard_errors(self) -> bool:
        return self.standard_errors is not None


@dataclass(frozen=True)
class ModelFit:
    """Everything estimated from one panel"""

    factor_set: SparseFactorSet
    loading_matrix: LoadingMatrix
    residuals: np.ndarray
    gram_eigenvalues: np.ndarray
    r: int
    solver_results: Tuple[SolverResult, ...] = ()

    @property
    def factors(self) -> np.ndarray:
        return self.factor_set.factors

    @property
    def loadings(self) -> np.ndarray:
        return self.loading_matrix.loadings


class FactorModelService(BaseService):
    """Service for sparse APCA estimation and diagnostics"""

    def __init__(self):
        super().__init__("FactorModelService")

    # ------------------------------------------------------------------
    # Estimation
    # ------------------------------------------------------------------
    def estimate(self, panel: Panel, r: int, sparsities: Sequence[int],
                 settings: Optional[SolverSettings] = None, assume_zero_mean: bool = False) -> ModelFit:
        """
        Estimate r sparse factors and their loadings

        Args:
            panel: Centered panel
            r: Number of factors
            sparsities: One cardinality per factor
            settings: Convergence settings
            assume_zero_mean: Accept an uncentered panel from a zero-mean design

        Returns:
            ModelFit with factors, loadings, residuals and the scaled gram spectrum
        """
        if not (panel.centered or assume_zero_mean):
            raise PreconditionError(ErrorMessages.NOT_CENTERED)
        r = validate_positive_int(r, "r", 1, panel.t)
        if len(sparsities) != r:
            raise DimensionError(f"Expected {r} sparsities, got {len(sparsities)}")

        self._log_operation("estimate", f"T={panel.t} N={panel.n} r={r} s={list(sparsities)}")
        with self._timed("estimate"):
            gram = panel_service.scaled_gram(panel, assume_zero_mean)
            results = sparse_eigen_service.sparse_eigen_sequence(gram, sparsities, settings)
            factor_set = SparseFactorSet.from_results(results, panel.t)
            loading_matrix = self.estimate_loadings(panel, factor_set)
            residuals = panel.values - factor_set.factors @ loading_matrix.loadings.T
            gram_eigenvalues = self.gram_eigenvalues(gram.values, panel.n, panel.t)

        if not all(factor_set.converged):
            self.logger.warning("Some factors did not converge", context={'converged': list(factor_set.converged)})
        return ModelFit(factor_set, loading_matrix, residuals, gram_eigenvalues, r, tuple(results))

    def gram_eigenvalues(self, s: np.ndarray, n: int, t: int) -> np.ndarray:
        """Eigenvalues of X X' = N T S in descending order"""
        return linalg.eigvalsh(s)[::-1] * (n * t)

    def estimate_loadings(self, panel: Panel, factor_set: SparseFactorSet) -> LoadingMatrix:
        """
        Least-squares loadings L' = (F'F)^{-1} F'X with standard errors

        Args:
            panel: Panel the factors were estimated from
            factor_set: Estimated factors

        Returns:
            LoadingMatrix with standard errors sigma_i * sqrt(diag((F'F)^{-1}))
        """
        f = factor_set.factors
        if f.shape[0] != panel.t:
            raise DimensionError("Factors and panel disagree on T")
        design = f.T @ f
        inverse = self._inverse_design(design)
        loadings = (inverse @ (f.T @ panel.values)).T
        residuals = panel.values - f @ loadings.T
        noise_variances = np.mean(residuals ** 2, axis=0)
        standard_errors = np.sqrt(noise_variances)[:, None] * np.sqrt(np.diag(inverse))[None, :]
        return LoadingMatrix(loadings=loadings, standard_errors=standard_errors, noise_variances=noise_variances)

    def _inverse_design(self, design: np.ndarray) -> np.ndarray:
        condition = float(np.linalg.cond(design))
        if not np.isfinite(condition) or condition >= MAX_DESIGN_CONDITION:
            raise SingularDesignError(ErrorMessages.SINGULAR_DESIGN, details={'condition': condition})
        return linalg.inv(design)

    def common_component(self, fit: ModelFit) -> np.ndarray:
        """C = F L'"""
        return fit.factors @ fit.loadings.T

    def apca(self, panel: Panel, r: int) -> Tuple[np.ndarray, np.ndarray]:
        """Dense asymptotic PCA: F = sqrt(T) x top-r eigenvectors of S, L = X'F / T"""
        if not panel.centered:
            raise PreconditionError(ErrorMessages.NOT_CENTERED)
        r = validate_positive_int(r, "r", 1, panel.t)
        gram = panel_service.scaled_gram(panel)
        _, eigenvectors = linalg.eigh(gram.values, subset_by_index=[panel.t - r, panel.t - 1])
        factors = np.sqrt(panel.t) * eigenvectors[:, ::-1]
        loadings = panel.values.T @ factors / panel.t
        return factors, loadings

    # ------------------------------------------------------------------
    # Number of factors
    # ------------------------------------------------------------------
    def eigenvalue_ratios(self, eigenvalues: Sequence[float], k_max: int) -> np.ndarray:
        """lambda_{k+1} / lambda_k for k = 1..K with denominators floored at 1e-12 lambda_1"""
        values = np.asarray(eigenvalues, dtype=float)
        k_max = validate_positive_int(k_max, "K", 1)
        if values.ndim != 1 or values.size < k_max + 1:
            raise DimensionError(f"Need at least K+1={k_max + 1} eigenvalues, got {values.size}")
        values = np.sort(values)[::-1]
        if values[0] <= 0.0:
            raise DegenerateSpectrumError(ErrorMessages.DEGENERATE_SPECTRUM)
        floor = EIGENVALUE_FLOOR * values[0]
        numerators = np.clip(values[1:k_max + 1], 0.0, None)
        denominators = np.maximum(values[:k_max], floor)
        return numerators / denominators

    def select_num_factors_ratio(self, eigenvalues: Sequence[float], k_max: Optional[int] = None,
                                 n: Optional[int] = None) -> int:
        """
        argmin over k of lambda_{k+1} / lambda_k; ties go to the smallest k

        Without k_max the bound is min(T, N) // 3 with T = len(eigenvalues)
        and N = n (T when n is not given), capped so K + 1 values exist.
        """
        values = np.asarray(eigenvalues, dtype=float)
        if k_max is None:
            t = values.size
            k_max = min(default_num_factors_bound(t, t if n is None else n), max(1, t - 1))
        ratios = self.eigenvalue_ratios(values, k_max)
        return int(np.argmin(ratios)) + 1

    def information_criteria(self, panel: Panel, k_max: Optional[int] = None) -> np.ndarray:
        """IC(k) for k = 1..K using the dense fit"""
        if not panel.centered:
            raise PreconditionError(ErrorMessages.NOT_CENTERED)
        n, t = panel.n, panel.t
        if k_max is None:
            k_max = default_num_factors_bound(t, n)
        k_max = validate_positive_int(k_max, "K", 1, min(t, n))

        total = float(np.sum(panel.values ** 2))
        eigenvalues = self.gram_eigenvalues(panel_service.scaled_gram(panel).values, n, t)
        # ||X - F_k L_k'||^2 = ||X||^2 - sum of the top k eigenvalues of XX'
        residual = np.clip(total - np.cumsum(eigenvalues[:k_max]), 0.0, None)
        residual[residual <= EIGENVALUE_FLOOR * total] = 0.0
        ks = np.arange(1, k_max + 1)
        penalty = ks * ((n + t) / (n * t)) * np.log(n * t / (n + t))
        with np.errstate(divide="ignore"):
            return np.log(residual / (n * t)) + penalty

    def select_num_factors_ic(self, panel: Panel, k_max: Optional[int] = None) -> int:
        """argmin over k of the information criterion; exact fits pick the smallest such k"""
        criteria = self.information_criteria(panel, k_max)
        return int(np.argmin(criteria)) + 1

    # ------------------------------------------------------------------
    # Distances and diagnostics
    # ------------------------------------------------------------------
    def subspace_distance(self, h1: np.ndarray, h2: np.ndarray, kind: str = "D") -> float:
        """
        Distance between the column spaces of two orthonormal T x r bases

        Args:
            h1: Orthonormal basis
            h2: Orthonormal basis of the same shape
            kind: "D" (normalized trace), "rho" (projection Frobenius) or "sin_theta"

        Returns:
            Non-negative distance
        """
        if kind not in DISTANCE_KINDS:
            raise DimensionError(f"Unknown distance kind {kind!r}; expected one of {DISTANCE_KINDS}")
        h1 = validate_orthonormal_columns(h1, "H1")
        h2 = validate_orthonormal_columns(h2, "H2")
        if h1.shape != h2.shape:
            raise DimensionError(f"Basis shapes differ: {h1.shape} vs {h2.shape}")

        r = h1.shape[1]
        cross = h1.T @ h2
        overlap = float(np.sum(cross ** 2))
        d_value = np.sqrt(max(0.0, 1.0 - overlap / r))
        rho = np.sqrt(max(0.0, 2.0 * r - 2.0 * overlap))
        cosines = np.clip(linalg.svdvals(cross), 0.0, 1.0)
        sin_theta = np.sqrt(float(np.sum(1.0 - cosines ** 2)))

        if abs(rho ** 2 - 2.0 * sin_theta ** 2) > 1e-8 * max(1.0, rho ** 2):
            raise NumericalError("Subspace distances disagree", details={'rho': rho, 'sin_theta': sin_theta})
        return float({'D': d_value, 'rho': rho, 'sin_theta': sin_theta}[kind])

    def explained_variance(self, panel: Panel, fit: ModelFit) -> Dict[str, Any]:
        """Share of total sum of squares captured by the common component and by each factor"""
        total = float(np.sum(panel.values ** 2))
        if total == 0.0:
            return {'total': 0.0, 'per_factor': [0.0] * fit.r}
        per_factor = [
            float(np.sum(np.outer(fit.factors[:, j], fit.loadings[:, j]) ** 2)) / total
            for j in range(fit.r)
        ]
        common = float(np.sum(self.common_component(fit) ** 2)) / total
        return {'total': common, 'per_factor': per_factor}

    def group_loading_means(self, loading_matrix: LoadingMatrix, series_ids: Sequence[str],
                            groups: Mapping[str, str]) -> pd.DataFrame:
        """
        Average loading per group and factor

        Args:
            loading_matrix: Estimated loadings, rows aligned with series_ids
            series_ids: Panel column identifiers
            groups: Series id to group label; unmapped series are skipped

        Returns:
            DataFrame indexed by group with one column per factor and a count column
        """
        frame = pd.DataFrame(
            loading_matrix.loadings,
            index=list(series_ids),
            columns=[f"factor_{j + 1}" for j in range(loading_matrix.loadings.shape[1])],
        )
        frame["group"] = [groups.get(series_id) for series_id in frame.index]
        missing = int(frame["group"].isna().sum())
        if missing:
            self.logger.warning(f"{missing} series have no group and are skipped")
        frame = frame.dropna(subset=["group"])
        if frame.empty:
            raise PreconditionError("No series matched the group mapping")
        grouped = frame.groupby("group", sort=True)
        summary = grouped.mean()
        summary["count"] = grouped.size()
        return summary

    def active_periods(self, fit: ModelFit, time_labels: Sequence[str]) -> List[List[Dict[str, Any]]]:
        """Support dates of each factor ordered by decreasing |f_t|"""
        if len(time_labels) != fit.factor_set.t:
            raise DimensionError("Time labels do not match the factor length")
        periods = []
        for column, support in enumerate(fit.factor_set.supports):
            values = fit.factors[list(support), column]
            order = np.argsort(-np.abs(values), kind="stable")
            periods.append([
                {'index': int(support[i]), 'label': str(time_labels[support[i]]), 'value': float(values[i])}
                for i in order
            ])
        return periods


# Create singleton instance
factor_model_service = FactorModelService()
