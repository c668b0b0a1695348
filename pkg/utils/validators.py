"""
Input validation for matrices and integer arguments.
Validators raise the library exceptions directly.
"""
from typing import Optional

import numpy as np

from constants import ErrorMessages, ORTHONORMAL_TOLERANCE
from utils.error_handler import DimensionError, PreconditionError


def validate_positive_int(value: int, name: str, minimum: int = 1, maximum: Optional[int] = None) -> int:
    """
    Validate an integer argument against inclusive bounds

    Args:
        value: Integer to check
        name: Argument name used in the error message
        minimum: Smallest allowed value
        maximum: Largest allowed value, unbounded when None

    Returns:
        The value as a plain int
    """
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise DimensionError(f"{name} must be an integer, got {value!r}", details={name: value})
    if value < minimum or (maximum is not None and value > maximum):
        upper = "inf" if maximum is None else maximum
        raise DimensionError(
            f"{name}={value} outside [{minimum}, {upper}]",
            details={name: int(value), 'minimum': minimum, 'maximum': maximum},
        )
    return int(value)


def validate_square(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate a finite square 2-D array and return it as float64"""
    array = np.asarray(matrix, dtype=float)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise PreconditionError(f"{name} has non-finite entries")
    return array


def validate_symmetric(matrix: np.ndarray, tolerance: float, name: str = "matrix") -> np.ndarray:
    """Validate symmetry relative to the Frobenius norm"""
    array = validate_square(matrix, name)
    scale = max(1.0, float(np.linalg.norm(array)))
    asymmetry = float(np.linalg.norm(array - array.T))
    if asymmetry > tolerance * scale:
        raise PreconditionError(
            f"{name}: {ErrorMessages.ASYMMETRIC}",
            details={'asymmetry': asymmetry, 'tolerance': tolerance},
        )
    return array


def validate_orthonormal_columns(matrix: np.ndarray, name: str = "basis",
                                 tolerance: float = ORTHONORMAL_TOLERANCE) -> np.ndarray:
    """Validate that H'H equals the identity entrywise within tolerance"""
    array = np.asarray(matrix, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2 or array.shape[1] == 0 or array.shape[1] > array.shape[0]:
        raise DimensionError(f"{name} must be a tall matrix, got shape {array.shape}")
    deviation = float(np.max(np.abs(array.T @ array - np.eye(array.shape[1]))))
    if deviation > tolerance:
        raise PreconditionError(
            f"{name}: {ErrorMessages.NOT_ORTHONORMAL}",
            details={'deviation': deviation, 'tolerance': tolerance},
        )
    return array
