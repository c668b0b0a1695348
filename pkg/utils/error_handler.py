"""
Centralized Error Handling System
"""
import warnings
from typing import Dict, Any, Optional

from constants import EXIT_INPUT_ERROR, EXIT_NUMERICAL_ERROR
from utils.logger import app_logger


class ErrorCategories:
    """Error category constants"""
    VALIDATION = "validation"
    CONFIGURATION = "configuration"
    FILE_PROCESSING = "file_processing"
    NUMERICAL = "numerical"
    UNKNOWN = "unknown"


class ErrorSeverity:
    """Error severity levels"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


# Command-line exit code per category
EXIT_CODES = {
    ErrorCategories.VALIDATION: EXIT_INPUT_ERROR,
    ErrorCategories.CONFIGURATION: EXIT_INPUT_ERROR,
    ErrorCategories.FILE_PROCESSING: EXIT_INPUT_ERROR,
    ErrorCategories.NUMERICAL: EXIT_NUMERICAL_ERROR,
    ErrorCategories.UNKNOWN: EXIT_NUMERICAL_ERROR,
}


class SparseApcaError(Exception):
    """Base exception carrying a machine-readable code and details"""

    category = ErrorCategories.UNKNOWN

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or type(self).__name__
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error_code': self.error_code,
            'message': self.message,
            'category': self.category,
            'details': self.details,
        }


class ParseError(SparseApcaError):
    """Malformed input file"""
    category = ErrorCategories.FILE_PROCESSING


class DimensionError(SparseApcaError):
    """Shape or size argument out of range"""
    category = ErrorCategories.VALIDATION


class PreconditionError(SparseApcaError):
    """Input violates a documented precondition"""
    category = ErrorCategories.VALIDATION


class InitializationError(SparseApcaError):
    """Solver started from an unusable vector"""
    category = ErrorCategories.VALIDATION


class ConfigError(SparseApcaError):
    """Invalid simulation or solver configuration"""
    category = ErrorCategories.CONFIGURATION


class NumericalError(SparseApcaError):
    """A numerical invariant was violated"""
    category = ErrorCategories.NUMERICAL


class DegenerateIterateError(NumericalError):
    """Iterate collapsed to the null space after all restarts"""


class SingularDesignError(NumericalError):
    """Factor gram matrix cannot be inverted reliably"""


class DegenerateSpectrumError(NumericalError):
    """Spectrum carries no information"""


class IdempotencyWarning(UserWarning):
    """An operation was applied to data it had already transformed"""


class ErrorHandler:
    """Centralized error handling with categorization"""

    @staticmethod
    def handle_error(error: Exception,
                     category: Optional[str] = None,
                     severity: str = ErrorSeverity.MEDIUM,
                     context: Optional[Dict[str, Any]] = None,
                     user_message: Optional[str] = None) -> Dict[str, Any]:
        """Handle errors with proper categorization and logging"""
        if category is None:
            category = getattr(error, 'category', ErrorCategories.UNKNOWN)

        error_context = {
            'category': category,
            'severity': severity,
            'error_type': type(error).__name__,
            'error_message': str(error)
        }
        if isinstance(error, SparseApcaError) and error.details:
            error_context['details'] = error.details
        if context:
            error_context.update(context)

        if severity == ErrorSeverity.CRITICAL:
            app_logger.critical(f"Critical error in {category}", error, error_context)
        elif severity == ErrorSeverity.HIGH:
            app_logger.error(f"High severity error in {category}", error, error_context)
        else:
            app_logger.warning(f"Error in {category}", error, error_context)

        return {
            'success': False,
            'error': str(error),
            'category': category,
            'severity': severity,
            'exit_code': EXIT_CODES.get(category, EXIT_NUMERICAL_ERROR),
            'user_message': user_message or ErrorHandler._get_default_user_message(category),
            'context': error_context
        }

    @staticmethod
    def _get_default_user_message(category: str) -> str:
        """Get default user message based on error category"""
        messages = {
            ErrorCategories.VALIDATION: "Invalid arguments or input data.",
            ErrorCategories.CONFIGURATION: "Invalid configuration.",
            ErrorCategories.FILE_PROCESSING: "Could not read the input file.",
            ErrorCategories.NUMERICAL: "Numerical failure during estimation.",
            ErrorCategories.UNKNOWN: "An unexpected error occurred."
        }
        return messages.get(category, messages[ErrorCategories.UNKNOWN])


def warn_idempotent(message: str) -> None:
    """Emit an IdempotencyWarning and log it"""
    app_logger.warning(message)
    warnings.warn(message, IdempotencyWarning, stacklevel=3)


def safe_execute(func, *args, error_handler=None, context=None, **kwargs):
    """Run func, returning (result, None) or (None, error dict) for library errors"""
    try:
        result = func(*args, **kwargs)
        return result, None
    except SparseApcaError as error:
        if error_handler:
            return None, error_handler(error, context)
        return None, ErrorHandler.handle_error(error, context=context)
