import copy
import json
import os
from typing import Any, Dict

from dotenv import load_dotenv

DEFAULT_SETTINGS: Dict[str, Any] = {
    "threads": 1,
    "output_dir": "results",
    "seed": 20200101,
    "error_floor": 1e-13,
    "rank_tolerance": 1e-12,
}


class ConfigManager:
    def __init__(self, config_path: str = 'config.json'):
        self.config_path = config_path
        # Environment overrides (SFE_OUTPUT_DIR, SFE_THREADS, LOG_LEVEL)
        load_dotenv(override=True)

        if os.path.exists(self.config_path):
            with open(self.config_path, 'r') as f:
                self.config = json.load(f)
        else:
            self.config = {"defaults": {}, "cases": {}}

        self.config.setdefault("defaults", {})
        self.config.setdefault("cases", {})

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ConfigManager':
        """Build a manager from an in-memory config (tests, metadata replay)"""
        manager = cls.__new__(cls)
        manager.config_path = None
        manager.config = copy.deepcopy(data)
        manager.config.setdefault("defaults", {})
        manager.config.setdefault("cases", {})
        return manager

    def get_defaults(self) -> Dict[str, Any]:
        """Global settings with built-in fallbacks"""
        settings = dict(DEFAULT_SETTINGS)
        settings.update(self.config["defaults"])
        return settings

    def get_case_config(self, case_id: str) -> Dict[str, Any]:
        """Case overrides from the config file; empty when the case is not listed"""
        entry = self.config["cases"].get(case_id, {})
        if not isinstance(entry, dict):
            raise ValueError(f"Case entry for {case_id} must be a table")
        return copy.deepcopy(entry)

    def get_output_dir(self) -> str:
        return os.getenv("SFE_OUTPUT_DIR", self.get_defaults()["output_dir"])

    def get_threads(self) -> int:
        value = os.getenv("SFE_THREADS")
        threads = int(value) if value else int(self.get_defaults()["threads"])
        if threads < 1:
            raise ValueError(f"Thread count must be positive: {threads}")
        return threads
