# -*- coding: utf-8 -*-
"""Unsupervised differential equation solving with generative adversarial networks"""

# python stdlib
import logging
import logging.config
import os
import sys

__author__ = "Rickard Eriksson"
__email__ = "rickard@dynamist.se"
__version__ = "0.1.0"
__url__ = "https://github.com/dynamist/deqgan"

LOG_FORMATS = {
    "DEBUG": "%(levelname)s - %(processName)s %(name)s:%(lineno)s - %(message)s",
    "default": "%(levelname)s - %(message)s",
}


def resolve_log_level(log_level=None):
    """
    Explicit level first, then DEQGAN_LOG_LEVEL, then INFO.
    """
    return (log_level or os.environ.get("DEQGAN_LOG_LEVEL") or "INFO").upper()


def init_logging(log_level=None):
    """
    Send all deqgan logging to stdout at the resolved level.

    Numerical warnings from numpy and scipy are captured into the
    ``py.warnings`` logger so they share the same handler.
    """
    log_level = resolve_log_level(log_level)

    if not isinstance(logging.getLevelName(log_level), int):
        print(f"CRITICAL: Undefined log-level '{log_level}', use DEBUG, INFO, WARNING, ERROR or CRITICAL")
        sys.exit(1)

    logging.config.dictConfig({
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "simple": {"format": LOG_FORMATS.get(log_level, LOG_FORMATS["default"])},
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "level": log_level,
                "formatter": "simple",
                "stream": "ext://sys.stdout",
            },
        },
        "root": {"level": log_level, "handlers": ["console"]},
    })
    logging.captureWarnings(True)
