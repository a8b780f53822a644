from abc import ABC, abstractmethod
from typing import TYPE_CHECKING

# Avoid circular imports by using TYPE_CHECKING
if TYPE_CHECKING:
    from ..experiment_controller import ExperimentController


class BaseManager(ABC):
    """
    Base class for the experiment managers.
    Each manager owns one concern (corpora, runs, sweeps, reports) so that the
    ExperimentController only wires them together.
    """

    def __init__(self, controller: 'ExperimentController'):
        """
        Args:
            controller: The owning ExperimentController
        """
        self.controller = controller

    @property
    def config(self):
        """Convenience property to access the experiment config"""
        return self.controller.config

    def log_event(self, message: str, event_type: str = "info") -> None:
        """Convenience method to log events through the controller"""
        self.controller.log_event(f"[{self.get_manager_name()}] {message}", event_type)

    @abstractmethod
    def get_manager_name(self) -> str:
        """
        Returns:
            str: The name of this manager for logging
        """
        pass

    def initialize(self) -> None:
        """Called once after every manager exists."""
        pass
