"""
Options and helpers shared by the command classes
"""
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click

from config import Config
from constants import DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS, DEFAULT_PSEUDO_INVERSE_TOLERANCE
from services.sparse_eigen_service import SolverSettings
from utils.error_handler import ConfigError

INPUT_PATH = click.Path(exists=True, dir_okay=False, readable=True, path_type=Path)
OUTPUT_DIR = click.Path(file_okay=False, writable=True, path_type=Path)


def solver_options(func: Callable) -> Callable:
    """Attach --epsilon, --max-iter, --pinv-tol and --seed"""
    options = [
        click.option("--epsilon", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_EPSILON,
                     show_default=True, help="Sup-norm stopping tolerance."),
        click.option("--max-iter", "max_iterations", type=click.IntRange(min=1), default=DEFAULT_MAX_ITERATIONS,
                     show_default=True, help="Iteration cap per factor."),
        click.option("--pinv-tol", "pseudo_inverse_tolerance", type=click.FloatRange(0, 1, min_open=True, max_open=True),
                     default=DEFAULT_PSEUDO_INVERSE_TOLERANCE, show_default=True,
                     help="Relative cutoff for the pseudo inverse square root."),
        click.option("--seed", type=int, default=None, help="Master seed (default SAPCA_DEFAULT_SEED)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def grid_options(func: Callable) -> Callable:
    """Attach the cross-validation grid options"""
    options = [
        click.option("--grid-min", type=click.IntRange(min=1), default=None, help="Smallest candidate s."),
        click.option("--grid-max", type=click.IntRange(min=1), default=None, help="Largest candidate s."),
        click.option("--j", "j_partitions", type=click.IntRange(min=1), default=10, show_default=True,
                     help="Number of random cross-sectional partitions."),
        click.option("--penalty", "penalty_kind",
                     type=click.Choice(["pc_linear", "ic_log", "ic_log_scaled"]),
                     default="ic_log_scaled", show_default=True),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_settings(epsilon: float, max_iterations: int, pseudo_inverse_tolerance: float,
                   seed: Optional[int]) -> SolverSettings:
    return SolverSettings(
        epsilon=epsilon,
        max_iterations=max_iterations,
        pseudo_inverse_tolerance=pseudo_inverse_tolerance,
        seed=Config.DEFAULT_SEED if seed is None else seed,
    )


def resolve_grid(grid_min: Optional[int], grid_max: Optional[int], default: List[int], t: int) -> List[int]:
    """Explicit bounds override the default grid; both are clipped to [1, T]"""
    low = default[0] if grid_min is None else grid_min
    high = default[-1] if grid_max is None else grid_max
    low, high = max(1, low), min(t, high)
    if low > high:
        raise ConfigError(f"Empty sparsity grid [{low}, {high}] for T={t}")
    return list(range(low, high + 1))


def resolve_out_dir(out: Optional[Path]) -> Path:
    return Path(Config.OUTPUT_DIR) if out is None else out


def cli_state(ctx: click.Context) -> Dict[str, Any]:
    return ctx.find_root().obj or {}
