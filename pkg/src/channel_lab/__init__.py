"""Deterministic simulator and combinatorics toolkit for contention resolution
on a restrained multiple-access channel."""

from .core import SimConfig, derive_stream, validate_config
from .engine import Engine, SimResult, run_simulation

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "SimConfig",
    "SimResult",
    "derive_stream",
    "run_simulation",
    "validate_config",
    "__version__",
]
