"""Environment-driven defaults for verification campaigns.

Values come from the process environment, optionally seeded by a ``.env``
file in the working directory. Command-line flags override all of them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

DEFAULT_PRECISION_BITS = 256
DEFAULT_GUARD_BITS = 32
DEFAULT_TOLERANCE = 1e-35
DEFAULT_SEED = 0
DEFAULT_P_MAX = 0.6
# None: one worker per CPU for selftest, a single process for other commands
DEFAULT_WORKERS: Optional[int] = None


class ConfigError(Exception):
    """Raised when an environment override cannot be parsed."""


def _read(name: str, default, cast):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{name}={raw!r} is not a valid {cast.__name__}") from exc


@dataclass(frozen=True)
class Settings:
    precision_bits: int = DEFAULT_PRECISION_BITS
    guard_bits: int = DEFAULT_GUARD_BITS
    tolerance: float = DEFAULT_TOLERANCE
    seed: int = DEFAULT_SEED
    p_max: float = DEFAULT_P_MAX
    workers: Optional[int] = DEFAULT_WORKERS


def load_settings() -> Settings:
    """Read EDV_* overrides from the environment."""
    return Settings(
        precision_bits=_read("EDV_PRECISION_BITS", DEFAULT_PRECISION_BITS, int),
        guard_bits=_read("EDV_GUARD_BITS", DEFAULT_GUARD_BITS, int),
        tolerance=_read("EDV_TOLERANCE", DEFAULT_TOLERANCE, float),
        seed=_read("EDV_SEED", DEFAULT_SEED, int),
        p_max=_read("EDV_P_MAX", DEFAULT_P_MAX, float),
        workers=_read("EDV_WORKERS", DEFAULT_WORKERS, int),
    )
