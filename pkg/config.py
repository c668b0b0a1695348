"""
Centralized Configuration Management
"""
import os
from typing import Any, Dict

from constants import DEFAULT_SEED
from utils.logger import app_logger


class ConfigValidator:
    """Configuration validation utilities"""

    @staticmethod
    def validate_integer_env_vars(integer_vars: Dict[str, str]) -> bool:
        """Validate that the listed environment variables, when set, are positive integers"""
        invalid_vars = []
        for var_name, description in integer_vars.items():
            raw = os.getenv(var_name)
            if raw is None:
                continue
            try:
                if int(raw) < 0:
                    invalid_vars.append(f"{var_name} ({description})")
            except ValueError:
                invalid_vars.append(f"{var_name} ({description})")

        if invalid_vars:
            app_logger.error(f"Invalid numeric environment variables: {', '.join(invalid_vars)}")
            return False
        return True


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, default))
    except ValueError:
        return default


class Config:
    """Application configuration with validation"""

    # Logging
    LOG_LEVEL = os.getenv('SAPCA_LOG_LEVEL', 'INFO')

    # Parallelism; 0 means all logical cores
    THREADS = _env_int('SAPCA_THREADS', 0)

    # Randomness
    DEFAULT_SEED = _env_int('SAPCA_DEFAULT_SEED', DEFAULT_SEED)

    # Output
    OUTPUT_DIR = os.getenv('SAPCA_OUTPUT_DIR', 'sapca_output')

    @classmethod
    def resolve_threads(cls, threads: int = None) -> int:
        """Translate a thread request into a joblib n_jobs value"""
        requested = cls.THREADS if threads is None else threads
        return -1 if requested <= 0 else requested

    @classmethod
    def validate_config(cls) -> bool:
        """Validate critical configuration"""
        integer_vars = {
            'SAPCA_THREADS': 'worker count for replication and cross-validation grids',
            'SAPCA_DEFAULT_SEED': 'recorded default seed',
        }
        if not ConfigValidator.validate_integer_env_vars(integer_vars):
            return False

        if cls.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            app_logger.warning(f"Unknown SAPCA_LOG_LEVEL {cls.LOG_LEVEL!r}, using INFO")
            cls.LOG_LEVEL = 'INFO'

        return True

    @classmethod
    def get_config_summary(cls) -> Dict[str, Any]:
        """Get configuration summary for logging"""
        return {
            'log_level': cls.LOG_LEVEL,
            'threads': cls.THREADS,
            'default_seed': cls.DEFAULT_SEED,
            'output_dir': cls.OUTPUT_DIR,
        }
