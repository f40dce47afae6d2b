import json

import pytest

from config import DEFAULT_SETTINGS, load_settings, save_settings, settings_fingerprint
from modules.errors import ConfigError


def test_defaults_without_sources():
    settings = load_settings(environ={})
    assert settings == DEFAULT_SETTINGS
    assert settings['band'] == '10%' and settings['sample_every'] == 100


def test_environment_values_are_coerced():
    settings = load_settings(environ={'SPOOFGUARD_BAND': 'unbounded', 'SPOOFGUARD_SAMPLE_EVERY': '25',
                                      'SPOOFGUARD_RMI_THRESHOLD': '0.4', 'SPOOFGUARD_THREADS': 'auto',
                                      'UNRELATED': 'x'})
    assert settings['band'] == 'unbounded'
    assert settings['sample_every'] == 25
    assert settings['rmi_threshold'] == 0.4
    assert settings['threads'] is None


def test_precedence_file_then_environment_then_overrides(tmp_path):
    path = tmp_path / 'settings.json'
    path.write_text(json.dumps({'sample_every': 10, 'band': '5%', 'seed': 3}))
    settings = load_settings(path, overrides={'seed': 9, 'band': None},
                             environ={'SPOOFGUARD_BAND': '20%'})
    assert settings['sample_every'] == 10
    assert settings['band'] == '20%'
    assert settings['seed'] == 9


def test_saved_settings_load_back(tmp_path):
    settings = load_settings(overrides={'grid': 'full', 'threads': 4}, environ={})
    save_settings(settings, tmp_path / 'settings.json')
    assert load_settings(tmp_path / 'settings.json', environ={}) == settings


@pytest.mark.parametrize('overrides, message', [
    ({'grid': 'huge'}, 'grid'),
    ({'pipeline': 'magic'}, 'pipeline'),
    ({'sample_every': 0}, 'sample_every'),
    ({'rmi_threshold': 1.5}, 'rmi_threshold'),
    ({'cv_folds': 1}, 'cv_folds'),
    ({'window_min': 5, 'window_max': 5}, 'window_min'),
    ({'sample_every': 'often'}, 'Invalid value'),
    ({'colour': 'red'}, 'Unknown setting'),
])
def test_invalid_settings(overrides, message):
    with pytest.raises(ConfigError, match=message):
        load_settings(overrides=overrides, environ={})


def test_unreadable_settings_file(tmp_path):
    with pytest.raises(ConfigError, match='Cannot read'):
        load_settings(tmp_path / 'missing.json', environ={})
    (tmp_path / 'list.json').write_text('[1, 2]')
    with pytest.raises(ConfigError, match='JSON object'):
        load_settings(tmp_path / 'list.json', environ={})
    (tmp_path / 'unknown.json').write_text('{"colour": "red"}')
    with pytest.raises(ConfigError, match='Unknown setting'):
        load_settings(tmp_path / 'unknown.json', environ={})


def test_fingerprint_ignores_execution_settings():
    base = load_settings(environ={})
    same = load_settings(overrides={'threads': 8, 'log_level': 'DEBUG', 'log_file': 'run.log'}, environ={})
    assert settings_fingerprint(base) == settings_fingerprint(same)
    assert settings_fingerprint(base) != settings_fingerprint(load_settings(overrides={'seed': 1}, environ={}))
    assert settings_fingerprint(base) != settings_fingerprint(load_settings(overrides={'band': '5%'}, environ={}))
