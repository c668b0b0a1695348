"""
Commands package initialization and command manager.
"""
from typing import Dict, List, Tuple

import click

from utils.logger import app_logger

from .estimate_commands import EstimateCommands
from .metrics_commands import MetricsCommands
from .select_commands import SelectCommands
from .simulate_commands import SimulateCommands


class CommandManager:
    """
    Registers every command class on the root click group and tracks
    which registrations succeeded.
    """

    def __init__(self):
        self.registered_commands: List[str] = []
        self.failed_commands: List[Tuple[str, str]] = []
        self.command_instances: Dict[str, object] = {}

    def register_all_commands(self, group: click.Group) -> Tuple[bool, List[str]]:
        """
        Register all command modules with the root group.

        Args:
            group: Root click group

        Returns:
            Success status and list of any errors
        """
        command_classes = [
            ('estimate', EstimateCommands),
            ('select', SelectCommands),
            ('simulate', SimulateCommands),
            ('metrics', MetricsCommands),
        ]

        for name, command_class in command_classes:
            try:
                instance = command_class()
                instance.register_commands(group)
                self.command_instances[name] = instance
                self.registered_commands.append(name)
                app_logger.debug(f"Registered {name} commands")
            except Exception as e:
                self.failed_commands.append((name, str(e)))
                app_logger.error(f"Failed to register {name} commands", e)

        errors = [f"{name}: {message}" for name, message in self.failed_commands]
        return not errors, errors


def register_all_commands(group: click.Group) -> Tuple[bool, List[str]]:
    """Convenience wrapper around CommandManager"""
    return CommandManager().register_all_commands(group)


__all__ = [
    'CommandManager', 'register_all_commands',
    'EstimateCommands', 'SelectCommands', 'SimulateCommands', 'MetricsCommands',
]
