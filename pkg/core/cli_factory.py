"""
CLI Factory
Builds the root click group and wires in commands and services
"""
from typing import Optional

import click

from commands import register_all_commands
from config import Config
from constants import APP_DESCRIPTION, APP_NAME, APP_VERSION
from core.service_manager import ServiceManager
from utils.logger import app_logger, setup_logger


class CliFactory:
    """Factory for creating the command-line application"""

    @staticmethod
    def create_cli() -> click.Group:
        """Create and configure the root command group"""
        logger = setup_logger("CliFactory", Config.LOG_LEVEL)

        if not Config.validate_config():
            raise click.UsageError("Configuration validation failed; check SAPCA_* environment variables")

        @click.group(name=APP_NAME, help=APP_DESCRIPTION)
        @click.version_option(APP_VERSION, prog_name=APP_NAME)
        @click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")
        @click.option("--threads", type=click.IntRange(min=0), default=None,
                      help="Workers for replications and cross-validation; 0 uses all cores.")
        @click.pass_context
        def cli(ctx: click.Context, verbose: bool, threads: Optional[int]):
            ctx.ensure_object(dict)
            ctx.obj['threads'] = threads
            app_logger.set_level("DEBUG" if verbose else Config.LOG_LEVEL)
            logger.debug("Configuration", context=Config.get_config_summary())

        success, errors = register_all_commands(cli)
        if not success:
            logger.warning(f"Some commands failed to register: {errors}")

        ServiceManager.initialize_all()
        logger.debug(f"Services: {ServiceManager.health_check()}")
        return cli
