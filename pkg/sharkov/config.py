import logging
import os
from typing import Optional

from dotenv import load_dotenv

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Class-equality tolerance for map values and node positions.
TAU_EQ = 1e-12

DEFAULT_SEED = 0


def configure_logging(verbosity: int = 0) -> None:
    """Load .env and set up root logging once for an entry point."""
    load_dotenv()
    env_level = os.getenv("SHARKOV_LOG_LEVEL")
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    elif env_level:
        level = getattr(logging, env_level.upper(), logging.WARNING)
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def worker_count(override: Optional[int] = None) -> int:
    """Worker cap for per-index stages: explicit value, then SHARKOV_THREADS, then cpu count."""
    if override is not None and override > 0:
        return override
    raw = os.getenv("SHARKOV_THREADS")
    if raw:
        try:
            value = int(raw)
            if value > 0:
                return value
        except ValueError:
            logging.getLogger(__name__).warning(f"Ignoring non-integer SHARKOV_THREADS={raw!r}")
    return min(8, os.cpu_count() or 1)


def default_seed() -> int:
    raw = os.getenv("SHARKOV_SEED")
    if raw and raw.lstrip("-").isdigit():
        return int(raw)
    return DEFAULT_SEED
