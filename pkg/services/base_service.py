"""
Base Service Class
Provides common functionality for all services
"""
import time
from abc import ABC
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

from utils.logger import setup_logger


class BaseService(ABC):
    """Base class for all services with common functionality"""

    def __init__(self, service_name: str):
        self.service_name = service_name
        self.logger = setup_logger(service_name)

    def _log_operation(self, operation: str, details: str = "") -> None:
        """Log service operations consistently"""
        message = f"{self.service_name} - {operation}"
        if details:
            message += f": {details}"
        self.logger.info(message)

    def _handle_error(self, operation: str, error: Exception,
                      context: Optional[Dict[str, Any]] = None) -> str:
        """Log a service error with its operation context and return the message"""
        error_message = f"Error in {operation}: {str(error)}"
        error_context = {'operation': operation, 'service': self.__class__.__name__}
        if context:
            error_context.update(context)
        self.logger.error(error_message, error, error_context)
        return error_message

    @contextmanager
    def _timed(self, operation: str) -> Iterator[None]:
        """Log the wall time of a block at debug level"""
        started = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - started
            self.logger.debug(f"{self.service_name} - {operation} took {elapsed:.3f}s")
