"""Environment configuration for tensorsys.

Settings are read once at import time. A ``.env`` file at the project root is
loaded first when python-dotenv is available, so local overrides work the same
way in the CLI and in the test suite.

    TENSORSYS_ORACLE_MAX_FACTORS       factor bound for oracle_equivalent (default 6)
    TENSORSYS_ORACLE_MAX_BOUND_LABELS  bound-label bound for oracle_equivalent (default 8)
    TENSORSYS_LOG_LEVEL                CLI logging level (default WARNING)
    TENSORSYS_CANONICAL_LEAF_WARNING   log a warning when a canonical search explores
                                       more leaves than this (default 5000)
"""

import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

try:
    from dotenv import load_dotenv

    env_path = BASE_DIR / ".env"
    if env_path.exists():
        load_dotenv(dotenv_path=env_path)
except ImportError:
    pass  # python-dotenv not installed, skip


def _int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from e
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value


# Reserved namespace for generated labels. Not configurable: the parser
# rejects it, which is what keeps generated labels collision-free.
RESERVED_PREFIX = "\\_"

ORACLE_MAX_FACTORS = _int("TENSORSYS_ORACLE_MAX_FACTORS", 6)
ORACLE_MAX_BOUND_LABELS = _int("TENSORSYS_ORACLE_MAX_BOUND_LABELS", 8)
CANONICAL_LEAF_WARNING = _int("TENSORSYS_CANONICAL_LEAF_WARNING", 5000)

LOG_LEVEL = os.getenv("TENSORSYS_LOG_LEVEL", "WARNING").upper()
