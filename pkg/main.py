"""
Sparse APCA - command-line entry point
"""
from core.cli_factory import CliFactory
from utils.logger import app_logger


def create_cli():
    """Create the click application using the factory"""
    return CliFactory.create_cli()


def main():
    """Main entry point"""
    try:
        cli = create_cli()
    except Exception as e:
        app_logger.critical("CLI startup failed", e)
        raise
    cli(obj={})


if __name__ == '__main__':
    main()
