"""
Panel Service
Loads, validates and demeans T x N panels and forms the scaled gram matrix
"""
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from constants import (
    CENTERING_TOLERANCE,
    ErrorMessages,
    GRAM_PSD_CHECK_MAX_T,
    PSD_TOLERANCE,
    SYMMETRY_TOLERANCE,
)
from services.base_service import BaseService
from utils.error_handler import DimensionError, NumericalError, ParseError, PreconditionError, warn_idempotent

_PARSER_LINE = re.compile(r"line (\d+)")


def _readonly(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Panel:
    """T x N matrix of observations; columns are series, rows are time points"""

    values: np.ndarray
    series_ids: Tuple[str, ...]
    time_labels: Optional[Tuple[str, ...]] = None
    centered: bool = False

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2:
            raise DimensionError(f"Panel values must be 2-D, got shape {values.shape}")
        t, n = values.shape
        if t < 2 or n < 2:
            raise DimensionError(ErrorMessages.TOO_SMALL, details={'T': t, 'N': n})
        if not np.all(np.isfinite(values)):
            raise ParseError(ErrorMessages.NON_NUMERIC)

        series_ids = tuple(str(series_id) for series_id in self.series_ids)
        if len(series_ids) != n:
            raise DimensionError(f"Expected {n} series ids, got {len(series_ids)}")
        if len(set(series_ids)) != n:
            raise ParseError(ErrorMessages.DUPLICATE_IDS)

        time_labels = self.time_labels
        if time_labels is not None:
            time_labels = tuple(str(label) for label in time_labels)
            if len(time_labels) != t:
                raise DimensionError(f"Expected {t} time labels, got {len(time_labels)}")

        if self.centered:
            means = np.abs(values.mean(axis=0))
            scale = values.std(axis=0) + 1.0
            if np.any(means > CENTERING_TOLERANCE * scale):
                raise PreconditionError("Panel flagged as centered has nonzero column means")

        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'series_ids', series_ids)
        object.__setattr__(self, 'time_labels', time_labels)

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def labels(self) -> Tuple[str, ...]:
        """Time labels, falling back to 1-based row positions"""
        if self.time_labels is not None:
            return self.time_labels
        return tuple(str(index + 1) for index in range(self.t))


@dataclass(frozen=True)
class GramMatrix:
    """S = X X' / (N T) for a centered panel"""

    values: np.ndarray
    n: int
    t: int
    audited: bool = field(default=False, compare=False)

    def __post_init__(self):
        values = _readonly(self.values)
        if values.shape != (self.t, self.t):
            raise DimensionError(f"Gram matrix must be {self.t}x{self.t}, got {values.shape}")
        object.__setattr__(self, 'values', values)

    def audit(self) -> None:
        """Check symmetry and positive semidefiniteness; raises NumericalError"""
        scale = max(float(np.max(np.abs(self.values))), np.finfo(float).tiny)
        if float(np.max(np.abs(self.values - self.values.T))) > SYMMETRY_TOLERANCE * scale:
            raise NumericalError(f"Gram matrix: {ErrorMessages.ASYMMETRIC}")
        eigenvalues = linalg.eigvalsh(self.values)
        if eigenvalues[0] < -PSD_TOLERANCE * max(eigenvalues[-1], 0.0):
            raise NumericalError(
                "Gram matrix is not positive semidefinite",
                details={'min_eigenvalue': float(eigenvalues[0]), 'max_eigenvalue': float(eigenvalues[-1])},
            )


class PanelService(BaseService):
    """Service for panel input and preprocessing"""

    def __init__(self):
        super().__init__("PanelService")

    def load_csv(self, path: Union[str, Path], has_time_column: bool = False) -> Panel:
        """
        Read a panel from a delimited file with a header row of series ids

        Args:
            path: CSV file path
            has_time_column: Treat the first column as time labels

        Returns:
            Uncentered Panel
        """
        path = Path(path)
        self._log_operation("load_csv", str(path))
        try:
            raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                              skip_blank_lines=True, encoding="utf-8")
        except FileNotFoundError as error:
            raise ParseError(f"Input file not found: {path}", details={'path': str(path)}) from error
        except pd.errors.EmptyDataError as error:
            raise ParseError(f"Input file is empty: {path}", details={'path': str(path)}) from error
        except pd.errors.ParserError as error:
            match = _PARSER_LINE.search(str(error))
            line = int(match.group(1)) if match else None
            raise ParseError(
                f"{ErrorMessages.RAGGED_ROW} (line {line})",
                details={'path': str(path), 'line': line},
            ) from error

        header = [cell.strip() for cell in raw.iloc[0].fillna("")]
        body = raw.iloc[1:].reset_index(drop=True)

        short_rows = body.isna().any(axis=1)
        if short_rows.any():
            line = int(np.flatnonzero(short_rows.to_numpy())[0]) + 2
            raise ParseError(f"{ErrorMessages.RAGGED_ROW} (line {line})", details={'path': str(path), 'line': line})

        time_labels = None
        if has_time_column:
            time_labels = tuple(body.iloc[:, 0].str.strip())
            header = header[1:]
            body = body.iloc[:, 1:]

        numeric = body.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
        values = numeric.to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            row, col = (int(index) for index in np.argwhere(bad)[0])
            column_name = header[col] if col < len(header) else str(col)
            raise ParseError(
                f"{ErrorMessages.NON_NUMERIC}: line {row + 2}, column {column_name!r}",
                details={'line': row + 2, 'column': column_name, 'cell': body.iat[row, col]},
            )

        if values.shape[0] < 2 or values.shape[1] < 2:
            raise DimensionError(ErrorMessages.TOO_SMALL, details={'T': values.shape[0], 'N': values.shape[1]})

        panel = Panel(values=values, series_ids=tuple(header), time_labels=time_labels)
        self.logger.debug(f"Loaded panel T={panel.t} N={panel.n}")
        return panel

    def from_array(self, values: np.ndarray, series_ids: Optional[Sequence[str]] = None,
                   time_labels: Optional[Sequence[str]] = None) -> Panel:
        """Wrap an in-memory T x N array as an uncentered panel"""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise DimensionError(f"Panel values must be 2-D, got shape {values.shape}")
        if series_ids is None:
            series_ids = [f"s{index}" for index in range(values.shape[1])]
        return Panel(values=values, series_ids=tuple(series_ids),
                     time_labels=None if time_labels is None else tuple(time_labels))

    def demean(self, panel: Panel) -> Panel:
        """Subtract each column's time mean; warns and returns the input when already centered"""
        if panel.centered:
            warn_idempotent(ErrorMessages.ALREADY_CENTERED)
            return panel
        values = panel.values - panel.values.mean(axis=0, keepdims=True)
        # second pass removes the rounding left by large offsets
        values = values - values.mean(axis=0, keepdims=True)
        return Panel(values=values, series_ids=panel.series_ids,
                     time_labels=panel.time_labels, centered=True)

    def scaled_gram(self, panel: Panel, assume_zero_mean: bool = False) -> GramMatrix:
        """
        S = X X' / (N T); requires a centered panel

        assume_zero_mean accepts an uncentered panel drawn from a design whose
        population means are zero (simulated panels).
        """
        if not (panel.centered or assume_zero_mean):
            raise PreconditionError(ErrorMessages.NOT_CENTERED)
        x = panel.values
        s = (x @ x.T) / (panel.n * panel.t)
        s = 0.5 * (s + s.T)
        gram = GramMatrix(values=s, n=panel.n, t=panel.t)
        if panel.t <= GRAM_PSD_CHECK_MAX_T:
            gram.audit()
            object.__setattr__(gram, 'audited', True)
        return gram

    def subset_columns(self, panel: Panel, indices: Sequence[int]) -> Panel:
        """Column sub-panel; keeps the centered flag since columns are demeaned independently"""
        indices = np.asarray(indices, dtype=int)
        if indices.size < 1 or np.any(indices < 0) or np.any(indices >= panel.n):
            raise DimensionError("Column indices out of range", details={'N': panel.n})
        if indices.size < 2:
            # a single-series panel violates the N >= 2 invariant
            raise DimensionError(ErrorMessages.TOO_SMALL, details={'N': int(indices.size)})
        return Panel(values=panel.values[:, indices],
                     series_ids=tuple(panel.series_ids[index] for index in indices),
                     time_labels=panel.time_labels, centered=panel.centered)

    def summarize(self, panel: Panel) -> Dict[str, Any]:
        """Shape and per-series moments of a panel"""
        frame = pd.DataFrame(panel.values, columns=list(panel.series_ids))
        stats = frame.agg(['mean', 'std', 'min', 'max']).T
        return {
            'T': panel.t,
            'N': panel.n,
            'centered': panel.centered,
            'has_time_labels': panel.time_labels is not None,
            'column_means_max_abs': float(np.max(np.abs(panel.values.mean(axis=0)))),
            'grand_mean': float(panel.values.mean()),
            'total_sum_of_squares': float(np.sum(panel.values ** 2)),
            'series': {
                series_id: {key: float(value) for key, value in row.items()}
                for series_id, row in stats.iterrows()
            },
        }


# Create singleton instance
panel_service = PanelService()
