# config.py

"""
config.py

Configuration settings module for the event verification toolkit. It allows for easy
adjustment of parameters without modifying the core code. Settings start from
DEFAULT_SETTINGS, can be loaded from a JSON file, overridden by SPOOFGUARD_* environment
variables, and finally by explicit overrides (command-line flags).

Functions:
- load_settings(config_path=None, overrides=None, environ=None): Builds the settings dictionary.
- save_settings(settings, path): Saves settings to a JSON file.
- settings_fingerprint(settings): Hash of every setting that influences results.
"""

import hashlib
import json
import os

from modules.errors import ConfigError
from modules.utils import canonical_json

ENV_PREFIX = "SPOOFGUARD_"

DEFAULT_SETTINGS = {
    'sample_every': 100,
    'rmi_threshold': 0.25,
    'rmi_bins': 8,
    'band': '10%',
    'cv_folds': 5,
    'grid': 'small',
    'pipeline': 'dtw',
    'seed': 0,
    'threads': None,
    'max_prototypes': None,
    'window_min': -30,
    'window_max': 30,
    'dev_pairs': 200,
    'rank_std_penalty': 0.5,
    'log_file': None,
    'log_level': 'INFO',
}

# Keys that change how a run executes but never what it produces
EXECUTION_ONLY_KEYS = ('threads', 'log_file', 'log_level')

_INT_OR_NONE_KEYS = ('threads', 'max_prototypes')
_CHOICES = {
    'grid': ('small', 'full'),
    'pipeline': ('dtw', 'statistical', 'e2e'),
}


def _coerce(key, value):
    """Casts a raw (string or JSON) value to the type of the key's default."""
    default = DEFAULT_SETTINGS[key]
    if value is None:
        return None
    try:
        if key in _INT_OR_NONE_KEYS:
            if isinstance(value, str) and value.strip().lower() in ('', 'none', 'auto'):
                return None
            return int(value)
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ('1', 'true', 'yes', 'on')
            return bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if default is None:
            return value
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for setting '{key}': {value!r} ({e})")


def _validate(settings):
    for key, choices in _CHOICES.items():
        if settings[key] not in choices:
            raise ConfigError(f"Setting '{key}' must be one of {', '.join(choices)}; got {settings[key]!r}")
    if settings['sample_every'] < 1:
        raise ConfigError("Setting 'sample_every' must be >= 1")
    if not 0.0 <= settings['rmi_threshold'] <= 1.0:
        raise ConfigError("Setting 'rmi_threshold' must lie in [0, 1]")
    if settings['cv_folds'] < 2:
        raise ConfigError("Setting 'cv_folds' must be >= 2")
    if not settings['window_min'] < settings['window_max']:
        raise ConfigError("Setting 'window_min' must be smaller than 'window_max'")
    if settings['rmi_bins'] < 2:
        raise ConfigError("Setting 'rmi_bins' must be >= 2")


def load_settings(config_path=None, overrides=None, environ=None):
    """
    Loads settings in order: defaults, JSON file, SPOOFGUARD_* environment, overrides.

    Parameters:
    - config_path (str or None): Optional JSON settings file.
    - overrides (dict or None): Explicit values (None entries are ignored).
    - environ (mapping or None): Environment to read; defaults to os.environ.

    Returns:
    - dict: Dictionary containing configuration settings.
    """
    settings = dict(DEFAULT_SETTINGS)
    environ = os.environ if environ is None else environ

    if config_path:
        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                file_settings = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read settings file {config_path}: {e}")
        if not isinstance(file_settings, dict):
            raise ConfigError(f"Settings file {config_path} must hold a JSON object")
        for key, value in file_settings.items():
            if key not in DEFAULT_SETTINGS:
                raise ConfigError(f"Unknown setting '{key}' in {config_path}")
            settings[key] = _coerce(key, value)

    for key in DEFAULT_SETTINGS:
        env_name = ENV_PREFIX + key.upper()
        if env_name in environ:
            settings[key] = _coerce(key, environ[env_name])

    for key, value in (overrides or {}).items():
        if key not in DEFAULT_SETTINGS:
            raise ConfigError(f"Unknown setting '{key}'")
        if value is not None:
            settings[key] = _coerce(key, value)

    _validate(settings)
    return settings


def save_settings(settings, path):
    """
    Saves the current settings to a JSON file.

    Parameters:
    - settings (dict): Dictionary containing configuration settings.
    - path (str): Destination file.

    Returns:
    - None
    """
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(canonical_json(settings, indent=2))
        f.write('\n')


def settings_fingerprint(settings):
    """
    Returns a hex digest of every result-relevant setting (seed included).

    Parameters:
    - settings (dict): Dictionary containing configuration settings.

    Returns:
    - str: SHA-256 hex digest.
    """
    relevant = {k: v for k, v in settings.items() if k not in EXECUTION_ONLY_KEYS}
    return hashlib.sha256(canonical_json(relevant).encode('utf-8')).hexdigest()
