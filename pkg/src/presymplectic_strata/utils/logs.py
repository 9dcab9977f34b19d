import logging
from presymplectic_strata.core.config import LogSettings, LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

LEVEL_NAMES = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def get_log_level(log_level: str | None = "INFO") -> int:
    """Numeric logging level for a level name; unknown or missing names give INFO."""
    name = (log_level or "INFO").strip().upper()
    return getattr(logging, name if name in LEVEL_NAMES else "INFO")


def init_logging_config(config: LogSettings, console: bool | None = None) -> logging.Logger:
    """
    Attach handlers to the package logger and return it.

    Args:
        config (LogSettings): level, record format, encoding and log file.
        console (bool | None): echo records to stderr. ``None`` defers to ``config.console``.
    Returns:
        logging.Logger: the ``presymplectic_strata`` logger with a file handler and,
        optionally, a console handler. Handlers from earlier calls are closed first.
    """
    strata_logger = logging.getLogger(LOGGER_NAME)
    level = get_log_level(config.level)
    strata_logger.setLevel(level)
    formatter = logging.Formatter(fmt=config.format, datefmt=config.date_format)

    for handler in strata_logger.handlers[::-1]:
        strata_logger.removeHandler(handler)
        handler.close()

    handlers: list[logging.Handler] = []
    config.file.parent.mkdir(parents=True, exist_ok=True)
    handlers.append(logging.FileHandler(filename=config.file.as_posix(), encoding=config.encoding))
    if config.console if console is None else console:
        handlers.append(logging.StreamHandler())

    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        strata_logger.addHandler(handler)

    logger.debug(f"Logging to {config.file} at {logging.getLevelName(level)}")
    return strata_logger
