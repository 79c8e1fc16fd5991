"""logs.py - stderr logging in the "[INFO] message" style."""

import logging
import sys

import colorlog

ROOT = "redial_bench"
FORMAT = "%(log_color)s[%(levelname)s]%(reset)s %(message)s"
COLORS = {"DEBUG": "cyan", "INFO": "green", "WARNING": "yellow", "ERROR": "red", "CRITICAL": "bold_red"}


def get_logger(name: str) -> logging.Logger:
    if name.startswith(ROOT):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT}.{name}")


def setup_logging(verbosity: int = 0) -> logging.Logger:
    """verbosity: -1 quiet (WARNING), 0 INFO, 1+ DEBUG. Safe to call repeatedly."""
    level = logging.WARNING if verbosity < 0 else logging.DEBUG if verbosity > 0 else logging.INFO
    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(colorlog.ColoredFormatter(FORMAT, log_colors=COLORS))
    root = logging.getLogger(ROOT)
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False
    return root


def progress_enabled() -> bool:
    return logging.getLogger(ROOT).isEnabledFor(logging.INFO) and sys.stderr.isatty()
