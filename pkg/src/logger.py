"""Logging for the simulator, the CLI and the API"""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
import config


def setup_logger(name: str) -> logging.Logger:
    """Logger with a stdout handler and a size-capped file under config.LOG_DIR"""
    logger = logging.getLogger(name)
    logger.setLevel(config.LOG_LEVEL)

    if logger.handlers:
        return logger
    logger.propagate = False

    formatter = logging.Formatter(config.LOG_FORMAT)
    console = logging.StreamHandler(sys.stdout)
    console.setLevel(config.LOG_LEVEL)
    console.setFormatter(formatter)
    logger.addHandler(console)

    log_dir = Path(config.LOG_DIR)
    log_dir.mkdir(parents=True, exist_ok=True)
    file_handler = RotatingFileHandler(
        log_dir / "netforge.log",
        maxBytes=config.LOG_MAX_BYTES,
        backupCount=config.LOG_BACKUP_COUNT,
        encoding="utf-8",
    )
    file_handler.setLevel(config.LOG_LEVEL)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    return logger
