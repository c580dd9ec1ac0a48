"""
Environment configuration and logging setup.

Values come from the process environment, optionally seeded from a `.env`
file in the working directory. Run-specific settings (ICP parameters,
scenes, IMU models) live in JSON config files validated by app.models.
"""

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

DATA_DIR = os.getenv("DATA_DIR", "data")
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "output")
LOG_DIR = os.getenv("LOG_DIR", "logs")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

# Freiburg depth PNGs store millimetres * 5
TUM_DEPTH_SCALE = float(os.getenv("TUM_DEPTH_SCALE", "5000.0"))

# Partition count for reductions and worker count for sweeps
WORKERS = int(os.getenv("WORKERS", "1"))

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def setup_logging(log_name: Optional[str] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Configure root logging with a stream handler and, when log_name is
    given, a file handler under LOG_DIR.

    Safe to call more than once; handlers are replaced, not stacked.
    """
    handlers: list[logging.Handler] = [logging.StreamHandler()]

    if log_name:
        log_dir = Path(LOG_DIR)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / f"{log_name}.log"))

    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )

    return logging.getLogger("app")
