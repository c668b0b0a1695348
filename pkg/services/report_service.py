"""
Report Service
Serializes fits, selection reports and simulation summaries to the
output directory, and writes the reproducibility manifest.
"""
import json
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import joblib
import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import BaseModel, Field

from constants import APP_NAME, APP_VERSION
from services.base_service import BaseService
from services.factor_model_service import ModelFit
from services.panel_service import Panel
from utils.error_handler import ParseError
from utils.helpers import config_digest, shift_indices, to_jsonable

CSV_LINE_TERMINATOR = "\r\n"


class RunManifest(BaseModel):
    """Provenance record written next to every command's outputs"""

    command: str
    options: Dict[str, Any]
    config_digest: str
    seed: Optional[int] = None
    versions: Dict[str, str] = Field(default_factory=dict)
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[str] = Field(default_factory=list)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ReportService(BaseService):
    """Service for writing command outputs"""

    def __init__(self):
        super().__init__("ReportService")

    # ------------------------------------------------------------------
    # Primitive writers
    # ------------------------------------------------------------------
    def write_json(self, path: Path, payload: Any) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.logger.debug(f"Wrote {path}")
        return path

    def write_csv(self, path: Path, frame: pd.DataFrame, index: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=index, lineterminator=CSV_LINE_TERMINATOR, float_format="%.17g")
        self.logger.debug(f"Wrote {path}")
        return path

    # ------------------------------------------------------------------
    # Estimation outputs
    # ------------------------------------------------------------------
    def factors_frame(self, fit: ModelFit, panel: Panel) -> pd.DataFrame:
        frame = pd.DataFrame(fit.factors, columns=[f"factor_{j + 1}" for j in range(fit.r)])
        frame.insert(0, "time", list(panel.labels()))
        return frame

    def loadings_frame(self, fit: ModelFit, panel: Panel) -> pd.DataFrame:
        frame = pd.DataFrame({"series": list(panel.series_ids)})
        for j in range(fit.r):
            frame[f"loading_{j + 1}"] = fit.loadings[:, j]
            if fit.loading_matrix.has_standard_errors:
                frame[f"se_{j + 1}"] = fit.loading_matrix.standard_errors[:, j]
        if fit.loading_matrix.noise_variances is not None:
            frame["noise_variance"] = fit.loading_matrix.noise_variances
        return frame

    def supports_payload(self, fit: ModelFit, panel: Panel, one_based: bool) -> Dict[str, Any]:
        labels = panel.labels()
        return {
            "index_base": 1 if one_based else 0,
            "factors": [
                {
                    "factor": j + 1,
                    "sparsity": fit.factor_set.sparsities[j],
                    "support": shift_indices(support, one_based),
                    "labels": [labels[index] for index in support],
                }
                for j, support in enumerate(fit.factor_set.supports)
            ],
        }

    def fit_payload(self, fit: ModelFit, extras: Mapping[str, Any]) -> Dict[str, Any]:
        payload = {
            "r": fit.r,
            "sparsities": list(fit.factor_set.sparsities),
            "converged": list(fit.factor_set.converged),
            "iterations": [result.iterations for result in fit.solver_results],
            "gram_eigenvalues": fit.gram_eigenvalues[: min(len(fit.gram_eigenvalues), 20)],
            "residual_sum_of_squares": float(np.sum(fit.residuals ** 2)),
        }
        payload.update(extras)
        return payload

    def write_fit(self, out_dir: Path, fit: ModelFit, panel: Panel, one_based: bool,
                  extras: Mapping[str, Any], trace: bool = False) -> List[str]:
        """factors.csv, loadings.csv, supports.json, fit.json and optionally trace.json"""
        out_dir = Path(out_dir)
        written = [
            self.write_csv(out_dir / "factors.csv", self.factors_frame(fit, panel)),
            self.write_csv(out_dir / "loadings.csv", self.loadings_frame(fit, panel)),
            self.write_json(out_dir / "supports.json", self.supports_payload(fit, panel, one_based)),
            self.write_json(out_dir / "fit.json", self.fit_payload(fit, extras)),
        ]
        if trace:
            written.append(self.write_json(
                out_dir / "trace.json",
                {"factors": [result.to_trace() for result in fit.solver_results]}))
        self._log_operation("write_fit", str(out_dir))
        return [path.name for path in written]

    # ------------------------------------------------------------------
    # Inputs
    # ------------------------------------------------------------------
    def read_groups(self, path: Path) -> Dict[str, str]:
        """Two-column CSV mapping series id to group label"""
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
            raise ParseError(f"Cannot read group file {path}: {error}") from error
        if frame.shape[1] < 2:
            raise ParseError("Group file needs a series column and a group column")
        return dict(zip(frame.iloc[:, 0].str.strip(), frame.iloc[:, 1].str.strip()))

    def read_matrix(self, path: Path) -> np.ndarray:
        """Numeric CSV with a header row, returned as a float matrix"""
        try:
            frame = pd.read_csv(path)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
            raise ParseError(f"Cannot read matrix file {path}: {error}") from error
        first = frame.columns[0] if frame.shape[1] else None
        if frame.shape[1] > 1 and (str(first).lower() == "time"
                                   or not pd.api.types.is_numeric_dtype(frame[first])):
            # leading label column such as the factors.csv time column
            frame = frame.iloc[:, 1:]
        values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise ParseError(f"Matrix file {path} has non-numeric cells")
        return values

    # ------------------------------------------------------------------
    # Manifest
    # ------------------------------------------------------------------
    def versions(self) -> Dict[str, str]:
        return {
            APP_NAME: APP_VERSION,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "pydantic": pydantic.VERSION,
            "joblib": joblib.__version__,
        }

    def start_manifest(self, command: str, options: Dict[str, Any], seed: Optional[int] = None) -> RunManifest:
        options = to_jsonable(options)
        return RunManifest(command=command, options=options, config_digest=config_digest(options),
                           seed=seed, versions=self.versions(), started_at=utc_now())

    def finish_manifest(self, out_dir: Path, manifest: RunManifest, outputs: Sequence[str]) -> Path:
        finished = manifest.model_copy(update={'finished_at': utc_now(), 'outputs': sorted(outputs)})
        return self.write_json(Path(out_dir) / "manifest.json", finished.model_dump())


# Create singleton instance
report_service = ReportService()
