"""
Estimate command: full sparse factor fit of a panel
"""
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import click

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
from utils.error_handler import DimensionError
from utils.helpers import default_num_factors_bound
from utils.logger import app_logger


class EstimateCommands:
    """Registers the estimate command"""

    def __init__(self):
        self.logger = app_logger

    def register_commands(self, group: click.Group) -> None:

        @group.command("estimate")
        @click.option("--input", "input_path", type=INPUT_PATH, required=True, help="Panel CSV, one column per series.")
        @click.option("--time-column", is_flag=True, help="First column holds time labels.")
        @click.option("--r", "num_factors", type=click.IntRange(min=1), default=None,
                      help="Number of factors (default: eigenvalue ratio selection).")
        @click.option("--select-r", "r_method", type=click.Choice(["ratio", "ic"]), default="ratio",
                      show_default=True, help="Selector used when --r is absent.")
        @click.option("--k-max", type=click.IntRange(min=1), default=None, help="Largest factor count considered.")
        @click.option("--s", "sparsities", type=click.IntRange(min=1), multiple=True,
                      help="Sparsity, once for all factors or once per factor.")
        @click.option("--select-s", is_flag=True, help="Choose s by cross-validation (default when --s is absent).")
        @grid_options
        @solver_options
        @click.option("--out", type=OUTPUT_DIR, default=None, help="Output directory.")
        @click.option("--one-based", is_flag=True, help="Write 1-based support indices.")
        @click.option("--groups", "groups_path", type=INPUT_PATH, default=None,
                      help="CSV mapping series id to group; writes group_loadings.csv.")
        @click.option("--trace", is_flag=True, help="Write per-iteration Rayleigh quotients to trace.json.")
        @click.pass_context
        @handle_command_errors("estimate")
        def estimate(ctx: click.Context, **options: Any):
            """Estimate sparse factors, loadings and standard errors."""
            self.run(options, threads=cli_state(ctx).get('threads'))

    def run(self, options: Dict[str, Any], threads: Optional[int] = None) -> Path:
        panel_service = ServiceManager.get_service('panel')
        factor_model = ServiceManager.get_service('factor_model')
        selection = ServiceManager.get_service('sparsity_selection')
        report = ServiceManager.get_service('report')

        settings = build_settings(options['epsilon'], options['max_iterations'],
                                  options['pseudo_inverse_tolerance'], options['seed'])
        manifest = report.start_manifest("estimate", {**options, 'threads': threads}, settings.seed)

        panel = panel_service.demean(panel_service.load_csv(options['input_path'], options['time_column']))
        self.logger.info(f"Loaded panel T={panel.t} N={panel.n}")
        gram = panel_service.scaled_gram(panel)
        eigenvalues = factor_model.gram_eigenvalues(gram.values, panel.n, panel.t)
        k_max = options['k_max'] or default_num_factors_bound(panel.t, panel.n)
        k_max = min(k_max, len(eigenvalues) - 1)

        extras: Dict[str, Any] = {
            'T': panel.t,
            'N': panel.n,
            'k_max': k_max,
            'eigenvalue_ratios': factor_model.eigenvalue_ratios(eigenvalues, k_max),
        }

        r = options['num_factors']
        if r is None:
            if options['r_method'] == "ic":
                r = factor_model.select_num_factors_ic(panel, k_max)
            else:
                r = factor_model.select_num_factors_ratio(eigenvalues, k_max)
            extras['r_selection'] = {'method': options['r_method'], 'selected': r}
            self.logger.info(f"Selected r={r} by {options['r_method']}")

        out_dir = resolve_out_dir(options['out'])
        outputs = []
        sparsities, selection_report = self._resolve_sparsities(
            options, panel, r, settings, threads, selection)
        if selection_report is not None:
            extras['s_selection'] = {
                'selected': selection_report.selected,
                'boundary_hit': selection_report.boundary_hit,
                'penalty_kind': selection_report.penalty_kind,
                'j_partitions': selection_report.j_partitions,
            }

        fit = factor_model.estimate(panel, r, sparsities, settings)
        extras['explained_variance'] = factor_model.explained_variance(panel, fit)
        extras['active_periods'] = factor_model.active_periods(fit, panel.labels())

        outputs += report.write_fit(out_dir, fit, panel, options['one_based'], extras, trace=options['trace'])
        if selection_report is not None:
            outputs.append(report.write_json(out_dir / "selection_report.json", selection_report.to_dict()).name)
        if options['groups_path'] is not None:
            groups = report.read_groups(options['groups_path'])
            means = factor_model.group_loading_means(fit.loading_matrix, panel.series_ids, groups)
            outputs.append(report.write_csv(out_dir / "group_loadings.csv", means, index=True).name)

        report.finish_manifest(out_dir, manifest, outputs + ["manifest.json"])
        click.echo(str(out_dir))
        return out_dir

    def _resolve_sparsities(self, options: Dict[str, Any], panel, r: int, settings, threads,
                            selection) -> Tuple[Sequence[int], Optional[Any]]:
        given = list(options['sparsities'])
        if given and not options['select_s']:
            if len(given) == 1:
                given = given * r
            if len(given) != r:
                raise DimensionError(f"--s given {len(given)} times for r={r} factors")
            if any(value > panel.t for value in given):
                raise DimensionError(f"Sparsity exceeds T={panel.t}")
            return given, None

        grid = resolve_grid(options['grid_min'], options['grid_max'], selection.default_grid(panel.t), panel.t)
        report = selection.select_sparsity(
            panel, r, grid=grid, j=options['j_partitions'], penalty_kind=options['penalty_kind'],
            settings=settings, seed=settings.seed, threads=threads)
        return [report.selected] * r, report
