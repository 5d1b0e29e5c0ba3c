from __future__ import annotations

"""
Central process configuration

Environment variables can be placed in a `.env` file at repository root or
exported normally. This module guarantees:

1. Directories `data/cases` and `runs` always resolve against the repo root.
2. The worker cap (`PPF_LAB_THREADS`) and log level are read exactly once.
3. Logging has at least a basic configuration when used as a library.

Run-level settings (case, sampling, training, evaluation) live in YAML files
validated by :mod:`ppf_lab.models.settings`; only process-wide knobs are here.
"""

import logging
import os
from pathlib import Path
from typing import Final, Optional, cast

try:
    from dotenv import load_dotenv, find_dotenv
except ModuleNotFoundError as exc:  # pragma: no cover
    raise RuntimeError(
        "python-dotenv is required but not installed, run "
        "'pip install python-dotenv'"
    ) from exc

# --------------------------------------------------------------------------- #
# Environment variables
# --------------------------------------------------------------------------- #
# load_dotenv() no-ops when file is missing, so log explicitly
_dotenv_path = find_dotenv(usecwd=True)
if _dotenv_path:
    load_dotenv(_dotenv_path)


def _env(
    key: str,
    default: Optional[str] = None,
    *,
    mandatory: bool = False,
) -> Optional[str]:
    """
    Retrieve environment variable `key`.

    If *mandatory* is True and the variable is missing **or empty**,
    an ``EnvironmentError`` is raised.
    """
    val = os.getenv(key, default)
    if mandatory and (val is None or val == ""):
        raise EnvironmentError(f"Environment variable '{key}' is required but not set")
    return val


def _env_int(key: str, default: int) -> int:
    raw = _env(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise EnvironmentError(f"Environment variable '{key}' must be an integer, got {raw!r}") from exc
    if value < 1:
        raise EnvironmentError(f"Environment variable '{key}' must be >= 1, got {value}")
    return value


# --------------------------------------------------------------------------- #
# Logging
# --------------------------------------------------------------------------- #
LOG_LEVEL: Final[str] = cast(str, _env("PPF_LAB_LOG_LEVEL", "INFO")).upper()

# Ensure the root logger has at least a basic configuration.
if not logging.getLogger().handlers:
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )

logger = logging.getLogger(__name__)
if _dotenv_path:
    logger.debug("Loaded environment from %s", _dotenv_path)
else:
    logger.debug(".env file not found – relying solely on process env vars")

# Workers ------------------------------------------------------------------- #
THREADS: Final[int] = _env_int("PPF_LAB_THREADS", os.cpu_count() or 1)

# Progress bars -------------------------------------------------------------- #
PROGRESS: Final[bool] = cast(str, _env("PPF_LAB_PROGRESS", "1")) not in {"0", "false", "no"}

# --------------------------------------------------------------------------- #
# Filesystem paths
# --------------------------------------------------------------------------- #
# Resolve repository root robustly even if folder depth is < 2.
_repo_root = Path(__file__).resolve()
for _ in range(4):  # walk up until we find the git repo / pyproject, or exhaust 4 levels
    if (_repo_root / ".git").exists() or (_repo_root / "pyproject.toml").exists():
        break
    _repo_root = _repo_root.parent

REPO_ROOT: Final[Path] = _repo_root
DATA_DIR: Final[Path] = REPO_ROOT / "data"
CASES_DIR: Final[Path] = DATA_DIR / "cases"
OUTPUT_DIR: Final[Path] = Path(cast(str, _env("PPF_LAB_OUTPUT_DIR", str(REPO_ROOT / "runs"))))

logger.debug("REPO_ROOT set to %s (threads=%d)", REPO_ROOT, THREADS)


def worker_count(requested: Optional[int] = None) -> int:
    """``THREADS`` unless an explicit (CLI) request overrides it; never below 1."""
    if requested is None:
        return THREADS
    return max(1, int(requested))


# --------------------------------------------------------------------------- #
# Public exports
# --------------------------------------------------------------------------- #
__all__ = [
    "LOG_LEVEL",
    "THREADS",
    "PROGRESS",
    "REPO_ROOT",
    "DATA_DIR",
    "CASES_DIR",
    "OUTPUT_DIR",
    "worker_count",
    "_env",
]
