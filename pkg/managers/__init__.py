"""
Managers Package
Configuration for the solver harness
"""

from .config_manager import ConfigManager

__all__ = [
    'ConfigManager',
]
