"""Run configuration and the numeric gates shared across the package."""

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidParameterError

SEED_ENVVAR = "MASSPART_SEED"
SUITE_SEED = 0xC0FFEE

EXACT_GATE = 1e-3
APPROX_GATE = 1e-2
MIN_KS_SAMPLES = 50
MIN_MOMENT_SAMPLES = 100
Z_THRESHOLD = 5.0

SUM_TOLERANCE = 1e-9
NORMALIZE_TOLERANCE = 1e-12
RESIDUAL_TOLERANCE = 1e-9
OCCUPATION_RESIDUAL = 1e-4

DEFAULT_REPLICAS = 100_000
DEFAULT_POINTS = 2000
DEFAULT_CHUNK_SIZE = 1024
DEFAULT_WORKERS = os.cpu_count() or 1


def parse_seed(value):
    """Accept ints, decimal strings and ``0x`` hex strings."""
    if value is None:
        return SUITE_SEED
    try:
        seed = value if isinstance(value, int) else int(str(value).strip(), 0)
    except ValueError:
        raise InvalidParameterError(f"seed must be an integer or 0x-prefixed hex, got {value!r}") from None
    if not 0 <= seed < 2**64:
        raise InvalidParameterError(f"seed must fit in 64 unsigned bits, got {value!r}")
    return seed


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = SUITE_SEED
    replicas: int = DEFAULT_REPLICAS
    workers: int = DEFAULT_WORKERS
    significance: float | None = None
    output_format: str = "csv"
    output_path: Path | None = None
    points: int = DEFAULT_POINTS
    chunk_size: int = DEFAULT_CHUNK_SIZE

    def __post_init__(self):
        parse_seed(self.master_seed)
        if self.replicas < 1:
            raise InvalidParameterError("replicas must be >= 1")
        if self.workers < 1:
            raise InvalidParameterError("workers must be >= 1")
        if self.points < 2:
            raise InvalidParameterError("points must be >= 2")
        if self.chunk_size < 1:
            raise InvalidParameterError("chunk_size must be >= 1")
        if self.significance is not None and not 0.0 < self.significance < 1.0:
            raise InvalidParameterError("significance must lie in (0, 1)")
        if self.output_format not in ("csv", "json"):
            raise InvalidParameterError(f"unknown output format {self.output_format!r}")

    def gate(self, default):
        """The significance to use for a test whose built-in gate is ``default``."""
        return default if self.significance is None else self.significance
