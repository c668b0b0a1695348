"""
Metrics and summary commands: compare saved factors and describe a panel
"""
import json
from typing import Any, Dict, Optional

import click
import numpy as np
from scipy import linalg

from commands.common import INPUT_PATH
from constants import DISTANCE_KINDS
from core.error_handlers import handle_command_errors
from core.service_manager import ServiceManager
from utils.error_handler import DimensionError
from utils.helpers import to_jsonable
from utils.logger import app_logger

METRIC_KINDS = ("angle", "recovery", "matrix") + DISTANCE_KINDS


class MetricsCommands:
    """Registers `metrics` and `summary`"""

    def __init__(self):
        self.logger = app_logger

    def register_commands(self, group: click.Group) -> None:

        @group.command("metrics")
        @click.option("--estimated", "estimated_path", type=INPUT_PATH, required=True,
                      help="Estimated factors CSV (factors.csv layout).")
        @click.option("--truth", "truth_path", type=INPUT_PATH, required=True,
                      help="Reference factors CSV with the same shape.")
        @click.option("--kind", type=click.Choice(METRIC_KINDS), multiple=True,
                      help="Metrics to report (default: all).")
        @handle_command_errors("metrics")
        def metrics(**options: Any):
            """Compare two factor matrices."""
            click.echo(json.dumps(to_jsonable(self.run_metrics(options)), sort_keys=True))

        @group.command("summary")
        @click.option("--input", "input_path", type=INPUT_PATH, required=True)
        @click.option("--time-column", is_flag=True)
        @handle_command_errors("summary")
        def summary(**options: Any):
            """Print the shape and per-series moments of a panel."""
            panel_service = ServiceManager.get_service('panel')
            panel = panel_service.load_csv(options['input_path'], options['time_column'])
            click.echo(json.dumps(to_jsonable(panel_service.summarize(panel)), sort_keys=True))

    def run_metrics(self, options: Dict[str, Any]) -> Dict[str, Any]:
        report = ServiceManager.get_service('report')
        simulation = ServiceManager.get_service('simulation')
        factor_model = ServiceManager.get_service('factor_model')

        estimated = report.read_matrix(options['estimated_path'])
        truth = report.read_matrix(options['truth_path'])
        if estimated.shape != truth.shape:
            raise DimensionError(f"Shapes differ: {estimated.shape} vs {truth.shape}")

        kinds = options['kind'] or METRIC_KINDS
        results: Dict[str, Any] = {}
        if "angle" in kinds:
            results['factor_angle_error'] = [
                simulation.factor_angle_error(estimated[:, j], truth[:, j]) for j in range(truth.shape[1])
            ]
        if "matrix" in kinds:
            results['factor_matrix_error'] = simulation.factor_matrix_error(estimated, truth)
        if "recovery" in kinds:
            results['recovery_rate'] = [
                self._column_recovery(simulation, estimated[:, j], truth[:, j]) for j in range(truth.shape[1])
            ]

        distances = [kind for kind in kinds if kind in DISTANCE_KINDS]
        if distances:
            # column spaces only; orthonormalize both bases first
            basis_estimated = linalg.orth(estimated)
            basis_truth = linalg.orth(truth)
            if basis_estimated.shape != basis_truth.shape:
                raise DimensionError("Factor matrices have different ranks")
            for kind in distances:
                results[f"distance_{kind}"] = factor_model.subspace_distance(basis_estimated, basis_truth, kind)
        self.logger.debug(f"Metrics: {results}")
        return results

    @staticmethod
    def _column_recovery(simulation, estimated: np.ndarray, truth: np.ndarray) -> Optional[float]:
        """Share of the true support found in the estimated column; None for an all-zero truth"""
        true_support = tuple(int(index) for index in np.flatnonzero(truth))
        if not true_support:
            return None
        estimated_support = tuple(int(index) for index in np.flatnonzero(estimated))
        return simulation.recovery_rate([estimated_support], [true_support], len(true_support))
