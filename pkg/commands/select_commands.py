"""
Select commands: number of factors and factor sparsity
"""
import json
from typing import Any, Dict, Optional

import click
import pandas as pd

from commands.common import (
    INPUT_PATH,
    OUTPUT_DIR,
    build_settings,
    cli_state,
    grid_options,
    resolve_grid,
    resolve_out_dir,
    solver_options,
)
from core.error_handlers import handle_command_errors
from core.service_manager import ServiceManager
from utils.helpers import default_num_factors_bound, to_jsonable
from utils.logger import app_logger


class SelectCommands:
    """Registers `select r` and `select s`"""

    def __init__(self):
        self.logger = app_logger

    def register_commands(self, group: click.Group) -> None:

        @group.group("select")
        def select():
            """Choose the number of factors or their sparsity."""

        @select.command("r")
        @click.option("--input", "input_path", type=INPUT_PATH, required=True)
        @click.option("--time-column", is_flag=True)
        @click.option("--method", type=click.Choice(["ratio", "ic"]), default="ratio", show_default=True)
        @click.option("--k-max", type=click.IntRange(min=1), default=None)
        @click.option("--out", type=OUTPUT_DIR, default=None)
        @click.pass_context
        @handle_command_errors("select r")
        def select_r(ctx: click.Context, **options: Any):
            """Estimate r by the eigenvalue ratio or the information criterion."""
            self.run_r(options)

        @select.command("s")
        @click.option("--input", "input_path", type=INPUT_PATH, required=True)
        @click.option("--time-column", is_flag=True)
        @click.option("--r", "num_factors", type=click.IntRange(min=1), default=1, show_default=True)
        @grid_options
        @solver_options
        @click.option("--out", type=OUTPUT_DIR, default=None)
        @click.pass_context
        @handle_command_errors("select s")
        def select_s(ctx: click.Context, **options: Any):
            """Choose s by penalized cross-sectional cross-validation."""
            self.run_s(options, threads=cli_state(ctx).get('threads'))

    def _load(self, options: Dict[str, Any]):
        panel_service = ServiceManager.get_service('panel')
        return panel_service.demean(panel_service.load_csv(options['input_path'], options['time_column']))

    def run_r(self, options: Dict[str, Any]) -> Dict[str, Any]:
        factor_model = ServiceManager.get_service('factor_model')
        report = ServiceManager.get_service('report')
        manifest = report.start_manifest("select r", options)

        panel = self._load(options)
        k_max = options['k_max'] or default_num_factors_bound(panel.t, panel.n)
        if options['method'] == "ic":
            criterion = factor_model.information_criteria(panel, k_max)
            selected = int(criterion.argmin()) + 1
        else:
            eigenvalues = factor_model.gram_eigenvalues(
                ServiceManager.get_service('panel').scaled_gram(panel).values, panel.n, panel.t)
            criterion = factor_model.eigenvalue_ratios(eigenvalues, min(k_max, panel.t - 1))
            selected = int(criterion.argmin()) + 1

        payload = {'method': options['method'], 'k_max': len(criterion), 'selected': selected,
                   'criterion': criterion}
        self._emit(options['out'], payload, pd.DataFrame({'k': range(1, len(criterion) + 1), 'criterion': criterion}),
                   manifest)
        return payload

    def run_s(self, options: Dict[str, Any], threads: Optional[int] = None) -> Dict[str, Any]:
        selection = ServiceManager.get_service('sparsity_selection')
        report = ServiceManager.get_service('report')
        settings = build_settings(options['epsilon'], options['max_iterations'],
                                  options['pseudo_inverse_tolerance'], options['seed'])
        manifest = report.start_manifest("select s", {**options, 'threads': threads}, settings.seed)

        panel = self._load(options)
        grid = resolve_grid(options['grid_min'], options['grid_max'], selection.default_grid(panel.t), panel.t)
        result = selection.select_sparsity(
            panel, options['num_factors'], grid=grid, j=options['j_partitions'],
            penalty_kind=options['penalty_kind'], settings=settings, seed=settings.seed, threads=threads)

        payload = result.to_dict()
        frame = pd.DataFrame({
            's': result.candidate_grid,
            'raw_error': result.raw_errors,
            'penalty': result.penalties,
            'criterion': result.criterion_values,
        })
        self._emit(options['out'], payload, frame, manifest)
        return payload

    def _emit(self, out, payload: Dict[str, Any], frame: pd.DataFrame, manifest) -> None:
        report = ServiceManager.get_service('report')
        out_dir = resolve_out_dir(out)
        outputs = [
            report.write_json(out_dir / "report.json", payload).name,
            report.write_csv(out_dir / "criterion.csv", frame).name,
            "manifest.json",
        ]
        report.finish_manifest(out_dir, manifest, outputs)
        click.echo(json.dumps(to_jsonable(payload), sort_keys=True))
