import logging

from viws.config import ConfigManager, RunConfig, preset_run_config
from viws.errors import ViwsError

log = logging.getLogger(__name__)

__version__ = "0.3.0"
__all__ = [
    "ConfigManager",
    "RunConfig",
    "ViwsError",
    "preset_run_config",
]
