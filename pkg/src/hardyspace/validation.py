"""Input validation helpers shared by the estimators, harness and CLI."""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import PreconditionError
from .grid import Field, GridSpec


def check_p(p) -> float:
    p = float(p)
    if not 0 < p <= 1:
        raise PreconditionError(f"p must lie in (0, 1], got {p}")
    return p


def check_p_list(ps: Iterable) -> tuple[float, ...]:
    out = tuple(check_p(p) for p in ps)
    if not out:
        raise PreconditionError("at least one p is required")
    return out


def check_positive(name: str, value, allow_inf: bool = False) -> float:
    v = float(value)
    if not v > 0 or (math.isinf(v) and not allow_inf) or math.isnan(v):
        raise PreconditionError(f"{name} must be positive, got {value!r}")
    return v


def check_samples(X, grid: GridSpec) -> np.ndarray:
    """2D array ``(n_samples, grid.size)`` of finite values; a single
    field or 1D array becomes one row."""
    if isinstance(X, Field):
        X = X.values[None, :]
    elif isinstance(X, (list, tuple)) and X and isinstance(X[0], Field):
        X = np.stack([f.values for f in X])
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=float, ensure_all_finite=True)
    if X.shape[1] != grid.size:
        raise PreconditionError(
            f"samples have {X.shape[1]} values, grid has {grid.size} points")
    return X


def parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(s) for s in str(text).replace(";", ",").split(",") if s.strip())
