"""
Sparse Eigen Service
Truncated power iterations, projection deflation and the generalized
iteration that solves successive sparse eigenproblems on a deflated gram.
"""
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from constants import (
    B_NORMALIZATION_TOLERANCE,
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_PSEUDO_INVERSE_TOLERANCE,
    DEFAULT_SEED,
    DEGENERATE_NORM_TOLERANCE,
    ErrorMessages,
    MAX_DEGENERATE_RESTARTS,
    PROJECTION_TOLERANCE,
    RANDOM_START_STREAM,
    RANDOM_STARTS,
    WARM_START_STEPS,
)
from services.base_service import BaseService
from services.panel_service import GramMatrix
from utils.error_handler import (
    DegenerateIterateError,
    DimensionError,
    InitializationError,
    NumericalError,
)
from utils.validators import validate_positive_int, validate_square, validate_symmetric

MatrixLike = Union[np.ndarray, GramMatrix]


class SolverSettings(BaseModel):
    """Convergence and numerical settings shared by all iterations"""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0)
    max_iterations: int = Field(default=DEFAULT_MAX_ITERATIONS, ge=1)
    pseudo_inverse_tolerance: float = Field(default=DEFAULT_PSEUDO_INVERSE_TOLERANCE, gt=0, lt=1)
    seed: int = DEFAULT_SEED
    warm_start_steps: int = Field(default=WARM_START_STEPS, ge=1)
    random_starts: int = Field(default=RANDOM_STARTS, ge=0)


@dataclass(frozen=True)
class SparseVector:
    """Length-T vector with at most `cardinality_bound` nonzeros"""

    values: np.ndarray
    support: Tuple[int, ...]
    cardinality_bound: int

    @classmethod
    def from_dense(cls, values: np.ndarray, cardinality_bound: int) -> "SparseVector":
        values = np.array(values, dtype=float, copy=True)
        support = tuple(int(index) for index in np.flatnonzero(values))
        if len(support) > cardinality_bound:
            raise DimensionError(
                f"Vector has {len(support)} nonzeros, bound is {cardinality_bound}")
        values.setflags(write=False)
        return cls(values=values, support=support, cardinality_bound=cardinality_bound)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class SolverResult:
    """Outcome of one sparse eigen solve"""

    vector: SparseVector
    converged: bool
    iterations: int
    rayleigh_path: Tuple[float, ...] = ()
    restarts: int = 0
    start_index: int = 0

    def to_trace(self) -> Dict[str, Any]:
        return {
            'converged': self.converged,
            'iterations': self.iterations,
            'restarts': self.restarts,
            'start_index': self.start_index,
            'support': list(self.vector.support),
            'rayleigh_path': list(self.rayleigh_path),
        }


@dataclass(frozen=True)
class DeflationState:
    """Projection B, removed directions and the current deflated gram"""

    b_matrix: np.ndarray
    q_vectors: Tuple[np.ndarray, ...] = field(default_factory=tuple)
    deflated_gram: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, s: np.ndarray) -> "DeflationState":
        s = np.asarray(s, dtype=float)
        return cls(b_matrix=np.eye(s.shape[0]), q_vectors=(), deflated_gram=s)

    def projection_defect(self) -> float:
        """max(||B^2 - B||_F, ||B'B - B||_F)"""
        b = self.b_matrix
        return max(float(np.linalg.norm(b @ b - b)), float(np.linalg.norm(b.T @ b - b)))

    def projection_defect_bound(self) -> float:
        """
        O(T^2 r) bound on the projection defect via B = I - QQ'.
        Q'Q = I makes I - QQ' idempotent, so the defect is governed by
        ||Q'Q - I|| plus the drift of B from I - QQ'.
        """
        if not self.q_vectors:
            return float(np.linalg.norm(self.b_matrix - np.eye(self.b_matrix.shape[0])))
        q = np.column_stack(self.q_vectors)
        gram_defect = float(np.linalg.norm(q.T @ q - np.eye(q.shape[1])))
        drift = float(np.linalg.norm(self.b_matrix - np.eye(q.shape[0]) + q @ q.T))
        return gram_defect + drift


def _as_array(matrix: MatrixLike) -> np.ndarray:
    if isinstance(matrix, GramMatrix):
        return matrix.values
    return validate_square(matrix, "S")


def _sign_normalized(values: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry (lowest index on ties) is positive"""
    pivot = int(np.argmax(np.abs(values)))
    return -values if values[pivot] < 0 else values


class SparseEigenService(BaseService):
    """Service for sparse leading eigenvector problems"""

    def __init__(self):
        super().__init__("SparseEigenService")

    # ------------------------------------------------------------------
    # Building blocks
    # ------------------------------------------------------------------
    def truncate_top_k(self, v: np.ndarray, k: int) -> SparseVector:
        """
        Keep the k largest-magnitude entries of v and zero the rest.
        Ties are broken by the lower index.
        """
        v = np.asarray(v, dtype=float)
        if v.ndim != 1:
            raise DimensionError(f"Expected a vector, got shape {v.shape}")
        k = validate_positive_int(k, "k", 1, v.shape[0])
        order = np.argsort(-np.abs(v), kind="stable")
        out = np.zeros_like(v)
        keep = order[:k]
        out[keep] = v[keep]
        return SparseVector.from_dense(out, k)

    def dense_leading_eigenvector(self, s: MatrixLike, steps: int = WARM_START_STEPS,
                                  seed: int = DEFAULT_SEED) -> np.ndarray:
        """
        Plain power steps from the normalized all-ones vector.
        Falls back to a seeded Gaussian start when S maps the all-ones
        vector to zero; returns zeros only for S = 0.
        """
        s = _as_array(s)
        t = s.shape[0]
        threshold = DEGENERATE_NORM_TOLERANCE * float(np.linalg.norm(s))
        if threshold == 0.0:
            return np.zeros(t)

        u = np.full(t, 1.0 / np.sqrt(t))
        if np.linalg.norm(s @ u) <= threshold:
            # centered panels have S 1 = 0
            u = np.random.default_rng(seed).standard_normal(t)
            u /= np.linalg.norm(u)
        for _ in range(steps):
            w = s @ u
            norm = float(np.linalg.norm(w))
            if norm <= threshold:
                return np.zeros(t)
            u = w / norm
        return u

    def pseudo_sqrt_pair(self, b: np.ndarray,
                         tolerance: float = DEFAULT_PSEUDO_INVERSE_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
        """
        Symmetric square root and Moore-Penrose pseudo inverse square root of a PSD matrix

        Args:
            b: Symmetric positive semidefinite matrix
            tolerance: Eigenvalues below tolerance * largest count as zero

        Returns:
            (B^{1/2}, B^{+1/2})
        """
        b = validate_symmetric(b, PROJECTION_TOLERANCE, "B")
        b = 0.5 * (b + b.T)
        eigenvalues, eigenvectors = linalg.eigh(b)
        eigenvalues = np.clip(eigenvalues, 0.0, None)
        largest = float(eigenvalues.max()) if eigenvalues.size else 0.0
        if largest == 0.0:
            zeros = np.zeros_like(b)
            return zeros, zeros.copy()

        half = (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T
        keep = eigenvalues > tolerance * largest
        kept = eigenvectors[:, keep]
        pinv_half = (kept / np.sqrt(eigenvalues[keep])) @ kept.T
        return 0.5 * (half + half.T), 0.5 * (pinv_half + pinv_half.T)

    def deflate(self, s: MatrixLike, state: DeflationState,
                v_hat: Union[np.ndarray, SparseVector]) -> DeflationState:
        """
        Remove the direction q = B v_hat from S and from B.
        v_hat must be scaled so that v_hat' B v_hat = 1.
        """
        s = _as_array(s)
        v = v_hat.values if isinstance(v_hat, SparseVector) else np.asarray(v_hat, dtype=float)
        b = state.b_matrix
        if v.shape != (b.shape[0],) or s.shape != b.shape:
            raise DimensionError("Deflation operands have mismatched shapes")

        quadratic = float(v @ b @ v)
        if abs(quadratic - 1.0) > B_NORMALIZATION_TOLERANCE:
            raise NumericalError(
                "Deflation vector is not B-normalized",
                details={'v_B_v': quadratic},
            )

        q = b @ v
        # (I - qq') S (I - qq') and B (I - qq') as rank-one updates
        sq = s @ q
        deflated = s - np.outer(q, sq) - np.outer(sq, q) + float(q @ sq) * np.outer(q, q)
        b_next = b - np.outer(b @ q, q)

        next_state = DeflationState(
            b_matrix=0.5 * (b_next + b_next.T),
            q_vectors=state.q_vectors + (q,),
            deflated_gram=0.5 * (deflated + deflated.T),
        )
        defect = next_state.projection_defect_bound()
        if defect > PROJECTION_TOLERANCE:
            raise NumericalError("Deflated B is no longer a projection", details={'defect': defect})
        return next_state

    # ------------------------------------------------------------------
    # Iterations
    # ------------------------------------------------------------------
    def _fallback_start(self, t: int, s_card: int, seed: int, attempt: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        start = self.truncate_top_k(rng.standard_normal(t), s_card).values
        return start / np.linalg.norm(start)

    def truncated_power(self, s: MatrixLike, cardinality: int,
                        settings: Optional[SolverSettings] = None,
                        u0: Optional[np.ndarray] = None) -> SolverResult:
        """
        Leading eigenvector of S restricted to `cardinality` nonzeros

        Args:
            s: Symmetric PSD T x T matrix
            cardinality: Sparsity bound s in [1, T]
            settings: Convergence settings
            u0: Optional initial vector; truncated and normalized before use

        Returns:
            SolverResult with a unit, sign-normalized vector

        Without u0 the iteration runs from the truncated warm start, the
        top-s diagonal support and settings.random_starts seeded random
        supports, and keeps the run with the largest u'Su (earliest start
        on ties).
        """
        settings = settings or SolverSettings()
        s = _as_array(s)
        t = s.shape[0]
        cardinality = validate_positive_int(cardinality, "s", 1, t)

        if u0 is not None:
            u0 = np.asarray(u0, dtype=float)
            if u0.shape != (t,):
                raise DimensionError(f"Initial vector must have length {t}")
            if not np.any(u0):
                raise InitializationError(ErrorMessages.ZERO_INITIAL_VECTOR)
            return self._truncated_power_from(s, cardinality, settings, self.truncate_top_k(u0, cardinality).values)

        starts = self._multi_starts(s, cardinality, settings)
        if not np.any(s):
            return self._truncated_power_from(s, cardinality, settings, starts[0])

        best: Optional[SolverResult] = None
        best_value = -np.inf
        first_error: Optional[DegenerateIterateError] = None
        for index, start in enumerate(starts):
            try:
                result = self._truncated_power_from(s, cardinality, settings, start, start_index=index)
            except DegenerateIterateError as error:
                self.logger.debug(f"Start {index} collapsed into the null space of S")
                first_error = first_error or error
                continue
            vector = result.vector.values
            value = float(vector @ s @ vector)
            if value > best_value:
                best, best_value = result, value
        if best is None:
            raise first_error
        self.logger.debug(f"Best of {len(starts)} starts: start {best.start_index}, value {best_value:.6g}")
        return best

    def _multi_starts(self, s: np.ndarray, cardinality: int, settings: SolverSettings) -> List[np.ndarray]:
        t = s.shape[0]
        warm = self.truncate_top_k(
            self.dense_leading_eigenvector(s, settings.warm_start_steps, settings.seed), cardinality).values
        if not np.any(warm):
            warm = self._fallback_start(t, cardinality, settings.seed, 0)
        starts = [warm]

        diagonal = self.truncate_top_k(np.abs(np.diag(s)), cardinality).values
        if np.any(diagonal):
            starts.append(diagonal)
        for index in range(settings.random_starts):
            rng = np.random.default_rng(np.random.SeedSequence([settings.seed, RANDOM_START_STREAM, index]))
            starts.append(self.truncate_top_k(rng.standard_normal(t), cardinality).values)
        return starts

    def _truncated_power_from(self, s: np.ndarray, cardinality: int, settings: SolverSettings,
                              start: np.ndarray, start_index: int = 0) -> SolverResult:
        """One truncated power run from an s-sparse start"""
        t = s.shape[0]
        u = start / np.linalg.norm(start)

        path = [float(u @ s @ u)]
        if not np.any(s):
            self.logger.warning("Gram matrix is zero; returning the initial iterate")
            return SolverResult(SparseVector.from_dense(_sign_normalized(u), cardinality), True, 0, tuple(path),
                                start_index=start_index)

        converged = False
        restarts = 0
        iterations = 0
        threshold = DEGENERATE_NORM_TOLERANCE * float(np.linalg.norm(s))
        while iterations < settings.max_iterations:
            iterations += 1
            w = s @ u
            norm = float(np.linalg.norm(w))
            if norm <= threshold:
                restarts += 1
                if restarts > MAX_DEGENERATE_RESTARTS:
                    raise DegenerateIterateError(
                        "Iterate fell into the null space of S", details={'restarts': restarts - 1})
                u = self._fallback_start(t, cardinality, settings.seed, restarts)
                continue
            candidate = self.truncate_top_k(w / norm, cardinality).values
            candidate = candidate / np.linalg.norm(candidate)
            path.append(float(candidate @ s @ candidate))
            step = float(np.max(np.abs(candidate - u)))
            u = candidate
            if step <= settings.epsilon:
                converged = True
                break

        if not converged:
            self.logger.warning(
                f"Truncated power iteration hit max_iterations={settings.max_iterations}",
                context={'cardinality': cardinality, 'T': t})

        vector = SparseVector.from_dense(_sign_normalized(u), cardinality)
        return SolverResult(vector, converged, iterations, tuple(path), restarts, start_index)

    def generalized_truncated_power(self, s: MatrixLike, b: np.ndarray, cardinality: int,
                                    settings: Optional[SolverSettings] = None,
                                    x0: Optional[np.ndarray] = None,
                                    projection: bool = False) -> SolverResult:
        """
        Sparse maximizer of v'Sv subject to v'Bv = 1.

        Iterates in the B^{1/2} coordinates on A = B^{+1/2} S B^{+1/2} and
        returns the last sparse iterate x* (not rescaled).

        Args:
            s: Symmetric PSD T x T matrix
            b: Symmetric PSD T x T matrix, a projection after deflation
            cardinality: Sparsity bound s in [1, T]
            settings: Convergence settings
            x0: Optional initial sparse vector
            projection: Caller guarantees B is an orthogonal projection with
                S = BSB, so B^{1/2} = B^{+1/2} = B and A = S

        Returns:
            SolverResult whose vector is x*, sign-normalized
        """
        settings = settings or SolverSettings()
        s = _as_array(s)
        t = s.shape[0]
        b = validate_square(b, "B")
        if b.shape != s.shape:
            raise DimensionError("S and B must have the same shape")
        cardinality = validate_positive_int(cardinality, "s", 1, t)

        if projection:
            b_half = b_pinv_half = b
            a = s
        else:
            b_half, b_pinv_half = self.pseudo_sqrt_pair(b, settings.pseudo_inverse_tolerance)
            a = b_pinv_half @ s @ b_pinv_half
            a = 0.5 * (a + a.T)

        def to_iterate(sparse_values: np.ndarray) -> Optional[np.ndarray]:
            mapped = b_half @ sparse_values
            norm = np.linalg.norm(mapped)
            return None if norm <= DEGENERATE_NORM_TOLERANCE else mapped / norm

        def restart(attempt: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
            start = self._fallback_start(t, cardinality, settings.seed, attempt)
            mapped = to_iterate(start)
            if mapped is None:
                rng = np.random.default_rng(np.random.SeedSequence([settings.seed, attempt, 1]))
                mapped = to_iterate(rng.standard_normal(t))
            return start, mapped

        if x0 is not None:
            x0 = np.asarray(x0, dtype=float)
            if x0.shape != (t,):
                raise DimensionError(f"Initial vector must have length {t}")
            if not np.any(x0):
                raise InitializationError(ErrorMessages.ZERO_INITIAL_VECTOR)
            x_star = self.truncate_top_k(x0, cardinality).values
        else:
            x_star = self.truncate_top_k(
                self.dense_leading_eigenvector(s, settings.warm_start_steps, settings.seed), cardinality).values
        x = to_iterate(x_star)
        if x is None:
            x_star, x = restart(0)

        if x is None or not np.any(a):
            self.logger.warning("Deflated problem is degenerate; returning the initial iterate")
            return SolverResult(SparseVector.from_dense(_sign_normalized(x_star), cardinality), True, 0, ())

        def rayleigh(values: np.ndarray) -> float:
            denominator = float(values @ b @ values)
            return float(values @ s @ values) / denominator if denominator > 0 else 0.0

        path = [rayleigh(x_star)]
        threshold = DEGENERATE_NORM_TOLERANCE * float(np.linalg.norm(a))
        converged = False
        restarts = 0
        iterations = 0
        while iterations < settings.max_iterations:
            iterations += 1
            ax = a @ x
            norm = float(np.linalg.norm(ax))
            candidate = None
            if norm > threshold:
                candidate_star = self.truncate_top_k(b_pinv_half @ ax / norm, cardinality).values
                candidate = to_iterate(candidate_star)
            if candidate is None:
                restarts += 1
                self.logger.debug(f"Degenerate generalized iterate, restart {restarts}")
                if restarts > MAX_DEGENERATE_RESTARTS:
                    raise DegenerateIterateError(
                        "Generalized iterate collapsed after restarts",
                        details={'restarts': MAX_DEGENERATE_RESTARTS, 'cardinality': cardinality})
                x_star, x = restart(restarts)
                if x is None:
                    raise DegenerateIterateError("B has no range to restart in")
                continue

            x_star = candidate_star
            path.append(rayleigh(x_star))
            step = float(np.max(np.abs(candidate - x)))
            x = candidate
            if step <= settings.epsilon:
                converged = True
                break

        if not converged:
            self.logger.warning(
                f"Generalized iteration hit max_iterations={settings.max_iterations}",
                context={'cardinality': cardinality, 'T': t})

        vector = SparseVector.from_dense(_sign_normalized(x_star), cardinality)
        return SolverResult(vector, converged, iterations, tuple(path), restarts)

    # ------------------------------------------------------------------
    # Sequential solve
    # ------------------------------------------------------------------
    def sparse_eigen_sequence(self, s: MatrixLike, sparsities: Sequence[int],
                              settings: Optional[SolverSettings] = None,
                              initial_vector: Optional[np.ndarray] = None) -> List[SolverResult]:
        """
        Successive sparse eigenvectors with projection deflation between solves.

        Args:
            s: Symmetric PSD T x T matrix
            sparsities: One cardinality per factor
            settings: Convergence settings
            initial_vector: Optional start for the first solve

        Returns:
            One SolverResult per factor; vectors are unit-norm and sign-normalized
        """
        settings = settings or SolverSettings()
        s = _as_array(s)
        t = s.shape[0]
        if len(sparsities) < 1:
            raise DimensionError("At least one factor is required")
        sparsities = [validate_positive_int(value, "s", 1, t) for value in sparsities]

        state = DeflationState.initial(s)
        results: List[SolverResult] = []
        for index, cardinality in enumerate(sparsities):
            if index == 0:
                result = self.truncated_power(state.deflated_gram, cardinality, settings, u0=initial_vector)
                v_b = result.vector.values
            else:
                result = self.generalized_truncated_power(
                    state.deflated_gram, state.b_matrix, cardinality, settings, projection=True)
                x = result.vector.values
                quadratic = float(x @ state.b_matrix @ x)
                if quadratic <= DEGENERATE_NORM_TOLERANCE:
                    raise NumericalError(
                        "Sparse iterate lies in the null space of B",
                        details={'factor': index, 'cardinality': cardinality})
                v_b = x / np.sqrt(quadratic)

            if index < len(sparsities) - 1:
                state = self.deflate(state.deflated_gram, state, v_b)

            unit = _sign_normalized(v_b / np.linalg.norm(v_b))
            results.append(SolverResult(
                vector=SparseVector.from_dense(unit, cardinality),
                converged=result.converged,
                iterations=result.iterations,
                rayleigh_path=result.rayleigh_path,
                restarts=result.restarts,
            ))
            self.logger.debug(
                f"Factor {index + 1}: s={cardinality} iterations={result.iterations} converged={result.converged}")
        return results

    # ------------------------------------------------------------------
    # Exhaustive oracles for small T
    # ------------------------------------------------------------------
    def exhaustive_sparse_eigen(self, s: MatrixLike, cardinality: int) -> Tuple[float, Tuple[int, ...], np.ndarray]:
        """Best s-sparse Rayleigh quotient over all supports of size s"""
        s = _as_array(s)
        t = s.shape[0]
        cardinality = validate_positive_int(cardinality, "s", 1, t)
        best_value, best_support, best_vector = -np.inf, (), np.zeros(t)
        for support in combinations(range(t), cardinality):
            block = s[np.ix_(support, support)]
            eigenvalues, eigenvectors = linalg.eigh(block)
            if eigenvalues[-1] > best_value:
                best_value = float(eigenvalues[-1])
                best_support = support
                best_vector = np.zeros(t)
                best_vector[list(support)] = eigenvectors[:, -1]
        return best_value, best_support, _sign_normalized(best_vector)

    def exhaustive_generalized_sparse_eigen(self, s: MatrixLike, b: np.ndarray, cardinality: int,
                                            tolerance: float = DEFAULT_PSEUDO_INVERSE_TOLERANCE) -> float:
        """Best value of v'Sv subject to v'Bv = 1 and at most s nonzeros"""
        s = _as_array(s)
        b = validate_square(b, "B")
        t = s.shape[0]
        cardinality = validate_positive_int(cardinality, "s", 1, t)
        best_value = -np.inf
        for support in combinations(range(t), cardinality):
            index = np.ix_(support, support)
            half, pinv_half = self.pseudo_sqrt_pair(b[index], tolerance)
            if not np.any(half):
                continue
            reduced = pinv_half @ s[index] @ pinv_half
            best_value = max(best_value, float(linalg.eigvalsh(0.5 * (reduced + reduced.T))[-1]))
        return best_value


# Create singleton instance
sparse_eigen_service = SparseEigenService()
