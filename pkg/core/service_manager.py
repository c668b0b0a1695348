"""
Service Manager
Handles initialization and lookup of the estimation services
"""
from utils.logger import setup_logger
from utils.error_handler import ErrorHandler, ErrorCategories, ErrorSeverity

logger = setup_logger("ServiceManager")


class ServiceManager:
    """Manages service initialization and health"""

    _initialized = False
    _services = {}

    @classmethod
    def initialize_all(cls):
        """Import the service singletons and register them by name"""
        if cls._initialized:
            return

        try:
            logger.debug("Initializing services...")

            from services import (
                factor_model_service,
                panel_service,
                report_service,
                simulation_service,
                sparse_eigen_service,
                sparsity_selection_service,
            )

            cls._services = {
                'panel': panel_service,
                'sparse_eigen': sparse_eigen_service,
                'factor_model': factor_model_service,
                'sparsity_selection': sparsity_selection_service,
                'simulation': simulation_service,
                'report': report_service,
            }

            cls._initialized = True
            logger.debug("All services initialized successfully")

        except Exception as e:
            error_response = ErrorHandler.handle_error(
                e,
                category=ErrorCategories.UNKNOWN,
                severity=ErrorSeverity.CRITICAL,
                context={'operation': 'service_initialization'}
            )
            logger.critical("Service initialization failed", e, error_response['context'])
            raise

    @classmethod
    def get_service(cls, service_name: str):
        """Get a specific service by name, initializing on first use"""
        if not cls._initialized:
            cls.initialize_all()
        service = cls._services.get(service_name)
        if service is None:
            raise KeyError(f"Unknown service {service_name!r}")
        return service

    @classmethod
    def health_check(cls) -> dict:
        """Report which services are registered"""
        return {name: 'healthy' if service else 'unhealthy' for name, service in cls._services.items()}
