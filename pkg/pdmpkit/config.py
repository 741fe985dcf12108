"""pdmp-kit configuration: loads process settings from the environment.

Only process-level settings live here (log level, default output
directory, worker threads). Run configuration (sampler, engine and
experiment keys) is read exclusively from the INI file given on the
command line, see `pdmpkit.models.run_config`.
"""

import logging
import os

from dotenv import load_dotenv

load_dotenv()

# Project root: one level up from the package directory (pdmpkit/config.py → project root)
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _resolve(path: str) -> str:
    """Resolve a path relative to the project root if not already absolute."""
    if os.path.isabs(path):
        return path
    return os.path.join(PROJECT_ROOT, path)


class Config:
    # Logging
    LOG_LEVEL: str = os.getenv("PDMP_LOG_LEVEL", "INFO").upper()
    LOG_FORMAT: str = "%(asctime)s [%(name)s] %(message)s"

    # Output
    OUTPUT_DIR: str = _resolve(os.getenv("PDMP_OUTPUT_DIR", "runs"))
    CSV_DIGITS: int = 17

    # Replica parallelism (overridden by --threads)
    THREADS: int = max(1, int(os.getenv("PDMP_THREADS", "1")))


config = Config()


def setup_logging(level: str | None = None) -> None:
    """Configure root logging for command-line entry points.

    Library modules only create loggers; handlers are installed here once.
    """
    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL), logging.INFO),
        format=config.LOG_FORMAT,
    )
