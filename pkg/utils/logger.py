"""
Enhanced Logging System
Every logger lives under the ``sparse_apca`` namespace and writes to stderr,
so stdout stays free for the JSON the commands print.
"""
import logging
import os
import sys
import traceback
from typing import Any, Dict, Optional

ROOT_LOGGER_NAME = 'sparse_apca'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(module_context)s %(message)s'


class CustomFormatter(logging.Formatter):
    """Formatter with optional level colors and a [module] tag"""

    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m', # Magenta
        'RESET': '\033[0m'      # Reset
    }

    def __init__(self, fmt: str = LOG_FORMAT, use_color: bool = False):
        super().__init__(fmt)
        self.use_color = use_color

    def format(self, record: logging.LogRecord) -> str:
        record.module_context = f"[{record.module}]" if getattr(record, 'module', None) else ""
        if not self.use_color:
            return super().format(record)
        plain = record.levelname
        color = self.COLORS.get(plain, self.COLORS['RESET'])
        record.levelname = f"{color}{plain}{self.COLORS['RESET']}"
        try:
            return super().format(record)
        finally:
            record.levelname = plain


def _format_context(context: Dict[str, Any]) -> str:
    """key=value pairs in key order; floats shortened to 6 significant digits"""
    parts = []
    for key in sorted(context, key=str):
        value = context[key]
        if isinstance(value, float):
            value = f"{value:.6g}"
        parts.append(f"{key}={value}")
    return " ".join(parts)


def _configure_root(level: str) -> logging.Logger:
    root = logging.getLogger(ROOT_LOGGER_NAME)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(CustomFormatter(use_color=sys.stderr.isatty()))
        root.addHandler(handler)
        root.propagate = False
        root.setLevel(getattr(logging, level.upper(), logging.INFO))
    return root


class EnhancedLogger:
    """Logger wrapper that appends structured context and error details"""

    def __init__(self, name: str, level: Optional[str] = None):
        root = _configure_root(level or os.getenv('SAPCA_LOG_LEVEL', 'INFO'))
        if name == ROOT_LOGGER_NAME:
            self.logger = root
        else:
            # children inherit the root level so --verbose reaches every service
            self.logger = root.getChild(name)

    def set_level(self, level: str) -> None:
        logging.getLogger(ROOT_LOGGER_NAME).setLevel(getattr(logging, level.upper(), logging.INFO))

    def is_debug(self) -> bool:
        return self.logger.isEnabledFor(logging.DEBUG)

    def debug(self, message: str, context: Optional[Dict[str, Any]] = None):
        self._log(logging.DEBUG, message, context)

    def info(self, message: str, context: Optional[Dict[str, Any]] = None):
        self._log(logging.INFO, message, context)

    def warning(self, message: str, error: Optional[Exception] = None, context: Optional[Dict[str, Any]] = None):
        self._log(logging.WARNING, message, self._with_error(context, error))

    def error(self, message: str, error: Optional[Exception] = None, context: Optional[Dict[str, Any]] = None):
        self._log(logging.ERROR, message, self._with_error(context, error, with_traceback=self.is_debug()))

    def critical(self, message: str, error: Optional[Exception] = None, context: Optional[Dict[str, Any]] = None):
        self._log(logging.CRITICAL, message, self._with_error(context, error, with_traceback=True))

    @staticmethod
    def _with_error(context: Optional[Dict[str, Any]], error: Optional[Exception],
                    with_traceback: bool = False) -> Optional[Dict[str, Any]]:
        if error is None:
            return context
        merged = dict(context or {})
        merged['error_type'] = type(error).__name__
        merged['error_message'] = str(error)
        if with_traceback and error.__traceback__ is not None:
            merged['traceback'] = "".join(traceback.format_exception(error)).strip()
        return merged

    def _log(self, level: int, message: str, context: Optional[Dict[str, Any]] = None):
        if not self.logger.isEnabledFor(level):
            return
        if context:
            message = f"{message} | {_format_context(context)}"
        self.logger.log(level, message, extra={'context': context or {}}, stacklevel=3)


def setup_logger(name: str, level: Optional[str] = None) -> EnhancedLogger:
    """Logger named ``sparse_apca.<name>``; the level applies to the whole namespace on first setup"""
    return EnhancedLogger(name, level)


# Global application logger
app_logger = setup_logger(ROOT_LOGGER_NAME)
