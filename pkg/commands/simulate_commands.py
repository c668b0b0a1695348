"""
Simulate command: Monte-Carlo replication of the built-in designs
"""
import json
import re
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click

from commands.common import OUTPUT_DIR, build_settings, cli_state, resolve_out_dir, solver_options
from constants import (
    LOADING_RULES,
    NOISE_KINDS,
    SIMULATION_TABLES,
    SIMULATION_TASKS,
    SPARSITY_RULES,
)
from core.error_handlers import handle_command_errors
from core.service_manager import ServiceManager
from services.simulation_service import SimulationOptions, make_config
from utils.error_handler import ConfigError
from utils.helpers import to_jsonable
from utils.logger import app_logger

_KEYED_CELL = re.compile(r"N=(?P<n>\d+):T=(?P<t>\d+)", re.IGNORECASE)


def _parse_cell(value: str) -> Tuple[int, int]:
    """'N=50:T=200', '50x200' or '50,200' -> (N, T)"""
    match = _KEYED_CELL.fullmatch(value.strip())
    if match:
        return int(match.group("n")), int(match.group("t"))
    for separator in ("x", ","):
        if separator in value:
            left, right = value.split(separator, 1)
            try:
                return int(left), int(right)
            except ValueError:
                break
    raise ConfigError(f"Cannot parse cell {value!r}; expected N=50:T=200 or 50x200")


def _parse_cells(values: Sequence[str]) -> List[Tuple[int, int]]:
    """Cells from repeated options; keyed values may also be comma separated"""
    cells: List[Tuple[int, int]] = []
    for value in values:
        items = value.split(",") if "=" in value else [value]
        cells.extend(_parse_cell(item) for item in items)
    return cells


class SimulateCommands:
    """Registers the simulate command"""

    def __init__(self):
        self.logger = app_logger

    def register_commands(self, group: click.Group) -> None:

        @group.command("simulate")
        @click.option("--table", type=click.IntRange(1, len(SIMULATION_TABLES)), default=None,
                      help="Run one of the built-in designs.")
        @click.option("--cells", "--cell", "cells", multiple=True,
                      help="Restrict to cells, e.g. N=50:T=200 or 50x200.")
        @click.option("--n", type=click.IntRange(min=2), default=None, help="Custom design: series count.")
        @click.option("--t", type=click.IntRange(min=2), default=None, help="Custom design: time points.")
        @click.option("--r", "num_factors", type=click.IntRange(min=1), default=None)
        @click.option("--sparsity", type=click.IntRange(min=1), default=None, help="Default ceil(sqrt(T)).")
        @click.option("--sparsity-rule", type=click.Choice(SPARSITY_RULES), default=None)
        @click.option("--loading-rule", type=click.Choice(LOADING_RULES), default=None)
        @click.option("--noise", "noise_kind", type=click.Choice(NOISE_KINDS), default="iid_gaussian",
                      show_default=True)
        @click.option("--task", "tasks", type=click.Choice(SIMULATION_TASKS), multiple=True,
                      help="Tasks to run (default: the table's task).")
        @click.option("--reps", type=click.IntRange(min=1), default=100, show_default=True)
        @click.option("--j", "j_partitions", type=click.IntRange(min=1), default=None)
        @click.option("--penalty", "penalty_kind", type=click.Choice(["pc_linear", "ic_log", "ic_log_scaled"]),
                      default="ic_log_scaled", show_default=True)
        @solver_options
        @click.option("--out", type=OUTPUT_DIR, default=None)
        @click.pass_context
        @handle_command_errors("simulate")
        def simulate(ctx: click.Context, **options: Any):
            """Run replications and write summary.csv, details.json and manifest.json."""
            self.run(options, threads=cli_state(ctx).get('threads'))

    def _designs(self, options: Dict[str, Any]) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
        table = options['table']
        if table is None:
            if options['n'] is None or options['t'] is None:
                raise ConfigError("Give --table or both --n and --t")
            design_table = {'r': 1, 'task': 'factor_error', 'metric': 'factor_angle_error',
                            'sparsity_rule': 'random_support', 'loading_rule': 'uniform_rows',
                            'n_values': [options['n']], 't_values': [options['t']]}
        else:
            design_table = dict(SIMULATION_TABLES[table])

        r = options['num_factors'] or design_table['r']
        cells = [(n, t) for n in design_table['n_values'] for t in design_table['t_values']]
        if options['cells']:
            cells = _parse_cells(options['cells'])

        designs = [
            {
                'n': n, 't': t, 'r': r,
                'sparsity': options['sparsity'],
                'sparsity_rule': options['sparsity_rule'] or design_table['sparsity_rule'],
                'loading_rule': options['loading_rule'] or design_table['loading_rule'],
                'noise_kind': options['noise_kind'],
            }
            for n, t in cells
        ]
        return designs, design_table

    def run(self, options: Dict[str, Any], threads: Optional[int] = None) -> Dict[str, Any]:
        simulation = ServiceManager.get_service('simulation')
        report = ServiceManager.get_service('report')
        settings = build_settings(options['epsilon'], options['max_iterations'],
                                  options['pseudo_inverse_tolerance'], options['seed'])
        manifest = report.start_manifest("simulate", {**options, 'threads': threads}, settings.seed)

        designs, design_table = self._designs(options)
        tasks = tuple(options['tasks']) or (design_table['task'],)
        metric = design_table['metric'] if design_table['task'] in tasks else None
        sim_options = SimulationOptions(
            tasks=tasks,
            j_partitions=options['j_partitions'] or design_table.get('j_partitions', 1),
            penalty_kind=options['penalty_kind'],
        )

        summaries = []
        for design in designs:
            config = make_config(seed=settings.seed, **design)
            summary = simulation.run_replications(config, options['reps'], settings, sim_options, threads=threads)
            summaries.append(summary)
            means = {name: round(value.mean, 4) for name, value in summary.metrics.items()}
            self.logger.info(f"Cell N={config.n} T={config.t}: {means}")

        if metric is None:
            metric = next(iter(summaries[0].metrics), None)
        out_dir = resolve_out_dir(options['out'])
        outputs = []
        if metric is not None:
            table = simulation.format_table(summaries, metric)
            outputs.append(report.write_csv(out_dir / "summary.csv", table, index=True).name)
        details = {'metric': metric, 'cells': [summary.model_dump() for summary in summaries]}
        outputs.append(report.write_json(out_dir / "details.json", details).name)
        report.finish_manifest(out_dir, manifest, outputs + ["manifest.json"])

        headline = {
            f"{summary.config.n}x{summary.config.t}": {name: value.mean for name, value in summary.metrics.items()}
            for summary in summaries
        }
        click.echo(json.dumps(to_jsonable(headline), sort_keys=True))
        return details
