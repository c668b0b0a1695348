"""
Error Handlers
Maps library exceptions raised inside commands to exit codes
"""
import functools
from typing import Callable

import click

from constants import EXIT_INPUT_ERROR, EXIT_NUMERICAL_ERROR
from utils.error_handler import ErrorCategories, ErrorHandler, ErrorSeverity, SparseApcaError
from utils.logger import setup_logger

logger = setup_logger("ErrorHandlers")


def handle_command_errors(command_name: str) -> Callable:
    """Decorate a command so failures print one line to stderr and exit 2 or 3"""

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except SparseApcaError as error:
                response = ErrorHandler.handle_error(
                    error, severity=ErrorSeverity.HIGH, context={'command': command_name})
                click.echo(f"Error: {error.message}", err=True)
                raise click.exceptions.Exit(response['exit_code'])
            except (FileNotFoundError, PermissionError, IsADirectoryError) as error:
                ErrorHandler.handle_error(
                    error, category=ErrorCategories.FILE_PROCESSING, context={'command': command_name})
                click.echo(f"Error: {error}", err=True)
                raise click.exceptions.Exit(EXIT_INPUT_ERROR)
            except (click.exceptions.Exit, click.ClickException):
                raise
            except Exception as error:
                logger.critical(f"Unexpected failure in {command_name}", error)
                click.echo(f"Error: unexpected failure: {error}", err=True)
                raise click.exceptions.Exit(EXIT_NUMERICAL_ERROR)

        return wrapper

    return decorator
