import logging
import sys
from pathlib import Path
from typing import List, Optional

from .settings import settings

LOGGER_NAME = "field-recon"

DETAILED_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s"
CONSOLE_FORMAT = "%(levelname)s - %(message)s"


def _handlers(numeric_level: int, log_filename: Optional[str]) -> List[logging.Handler]:
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    handlers: List[logging.Handler] = [console]

    if log_filename:
        file_path = Path(log_filename)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(file_path, mode="a")
        file_handler.setFormatter(logging.Formatter(DETAILED_FORMAT))
        handlers.append(file_handler)

    for handler in handlers:
        handler.setLevel(numeric_level)
    return handlers


def setup_logging(
    level: Optional[str] = None,
    log_file: Optional[str] = None,
) -> logging.Logger:
    """Configure the package logger; numpy/scikit-image warnings go to the same handlers"""
    log_level = level or ("DEBUG" if settings.debug else settings.log_level)
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)
    handlers = _handlers(numeric_level, log_file or settings.log_file)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(numeric_level)
    logger.propagate = False
    logger.handlers.clear()
    for handler in handlers:
        logger.addHandler(handler)

    logging.captureWarnings(True)
    warnings_logger = logging.getLogger("py.warnings")
    warnings_logger.handlers.clear()
    warnings_logger.propagate = False
    for handler in handlers:
        warnings_logger.addHandler(handler)

    return logger


logger = setup_logging()
