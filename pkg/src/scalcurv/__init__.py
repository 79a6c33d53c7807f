"""Numerical laboratory for prescribing scalar curvature on the round sphere S^n."""
from __future__ import annotations

from ._accel import NUMBA_ENABLED
from .sphere import DomainError, SchemaError

__version__ = "0.1.0"

__all__ = ["NUMBA_ENABLED", "DomainError", "SchemaError", "__version__"]
