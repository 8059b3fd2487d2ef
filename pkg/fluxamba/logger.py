"""JSON logging for fluxamba.

Every module takes its logger from get_logger(__name__). Records go to stderr as
JSON lines so that command output on stdout stays parseable.
"""

import logging
import sys

from pythonjsonlogger.json import JsonFormatter

from fluxamba.config import LogLevel, settings

ROOT_LOGGER = "fluxamba"


def get_log_level(level: LogLevel | str) -> int:
    """Convert a level name to the logging module constant.

    Args:
        level: debug, info, warning, error or critical.

    Returns:
        Integer constant for the log level from the logging module.

    Raises:
        ValueError: If the level name is not valid.
    """
    return logging.getLevelNamesMapping()[LogLevel(level).upper()]


def get_console_handler() -> logging.StreamHandler:
    """Create a stderr handler with the JSON formatter from settings."""
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(JsonFormatter(settings.log_formatter))
    return console_handler


def get_logger(name: str) -> logging.Logger:
    """Create and configure a logger with the specified name.

    Args:
        name: Name for the logger, typically __name__ from the calling module.

    Returns:
        Configured logger instance with the settings level and one console handler.
    """
    logger = logging.getLogger(name)
    logger.setLevel(get_log_level(settings.log_level))
    if not logger.handlers:
        logger.addHandler(get_console_handler())
    # with this pattern, it's rarely necessary to propagate the error up to parent
    logger.propagate = False
    return logger


def set_log_level(level: LogLevel | str) -> None:
    """Change the level of every fluxamba logger created so far."""
    log_level = get_log_level(level)
    for name, logger in logging.Logger.manager.loggerDict.items():
        if isinstance(logger, logging.Logger) and (name == ROOT_LOGGER or name.startswith(f"{ROOT_LOGGER}.")):
            logger.setLevel(log_level)
