# modules/logger.py

"""
logger.py

Logging module for the event verification toolkit. It sets up the root logger so that
stage messages, warnings about skipped data and errors go to the console (stderr) and,
optionally, to a log file. Reports and bundles never receive log output.

Functions:
- setup_logging(log_file_path=None, level="INFO"): Configures the logging settings.
"""

import logging
import os

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(log_file_path=None, level="INFO"):
    """
    Configures the logging settings for the program.

    Parameters:
    - log_file_path (str or None): Path to the log file. No file handler when None.
    - level (str or int): Logging level name or number.

    Returns:
    - None
    """
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)

    logger = logging.getLogger()
    logger.setLevel(level)

    # Check if handlers are already set to prevent duplication
    if logger.handlers:
        for handler in logger.handlers:
            handler.setLevel(level)
        return

    formatter = logging.Formatter(LOG_FORMAT)

    # Console goes to stderr so stdout stays clean for CSV output
    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file_path:
        log_dir = os.path.dirname(log_file_path)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(log_file_path)
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.debug("Logging initialized.")
