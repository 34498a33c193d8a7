"""
Tests for the JSON config layer and its environment overrides
"""
import json

import pytest

from managers.config_manager import DEFAULT_SETTINGS, ConfigManager


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("SFE_OUTPUT_DIR", raising=False)
    monkeypatch.delenv("SFE_THREADS", raising=False)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "defaults": {"threads": 3, "seed": 5},
        "cases": {"poisson_2d_eye": {"k_values": [1]}, "broken": [1, 2]},
    }))
    return str(path)


class TestConfigManager:

    def test_missing_file_uses_builtin_defaults(self, tmp_path):
        config = ConfigManager(str(tmp_path / "absent.json"))
        assert config.get_defaults() == DEFAULT_SETTINGS
        assert config.get_case_config('heat_2d') == {}

    def test_file_overrides_defaults(self, config_file):
        config = ConfigManager(config_file)
        assert config.get_threads() == 3
        assert config.get_defaults()['seed'] == 5
        assert config.get_defaults()['rank_tolerance'] == DEFAULT_SETTINGS['rank_tolerance']

    def test_case_entries(self, config_file):
        config = ConfigManager(config_file)
        assert config.get_case_config('poisson_2d_eye') == {'k_values': [1]}
        assert config.get_case_config('poisson_2d_disc') == {}

    def test_case_entry_must_be_table(self, config_file):
        with pytest.raises(ValueError):
            ConfigManager(config_file).get_case_config('broken')

    def test_case_config_is_a_copy(self, config_file):
        config = ConfigManager(config_file)
        config.get_case_config('poisson_2d_eye')['k_values'].append(2)
        assert config.get_case_config('poisson_2d_eye') == {'k_values': [1]}

    def test_environment_overrides(self, config_file, monkeypatch):
        monkeypatch.setenv("SFE_THREADS", "8")
        monkeypatch.setenv("SFE_OUTPUT_DIR", "/data/sfe")
        config = ConfigManager(config_file)
        assert config.get_threads() == 8
        assert config.get_output_dir() == "/data/sfe"

    def test_non_positive_threads_rejected(self, monkeypatch):
        monkeypatch.setenv("SFE_THREADS", "0")
        with pytest.raises(ValueError):
            ConfigManager.from_dict({}).get_threads()

    def test_from_dict_copies_its_input(self):
        data = {'defaults': {'seed': 1}, 'cases': {'heat_2d': {'T': 1.0}}}
        config = ConfigManager.from_dict(data)
        data['cases']['heat_2d']['T'] = 9.0
        data['defaults']['seed'] = 2
        assert config.get_case_config('heat_2d') == {'T': 1.0}
        assert config.get_defaults()['seed'] == 1
