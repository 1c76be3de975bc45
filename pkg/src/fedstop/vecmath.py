"""Flat float64 parameter-vector numerics.

A parameter vector is a 1-D ``np.ndarray`` of dtype float64. Every helper
returns a fresh array and never mutates its inputs.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DimensionError, NumericError

__all__ = ["as_vector", "sub", "l2_norm", "axpy", "mean", "check_finite"]


def as_vector(values) -> np.ndarray:
    """Copy ``values`` into a contiguous 1-D float64 array."""
    v = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    return v


def _same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def check_finite(a: np.ndarray, what: str = "vector") -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} contains non-finite entries")


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_length(a, b)
    return a - b


def l2_norm(a: np.ndarray) -> float:
    """Euclidean norm, summed sequentially in float64."""
    a = np.asarray(a, dtype=np.float64)
    check_finite(a)
    return math.sqrt(float(np.dot(a, a)))


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``alpha * x + y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _same_length(x, y)
    return alpha * x + y


def mean(vs: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise arithmetic mean, accumulated in list order.

    Uses the running update ``m += (v - m) / k`` so that the mean of
    identical vectors reproduces them bit-for-bit.
    """
    if len(vs) == 0:
        raise ArgumentError("mean of an empty list")
    m = np.array(vs[0], dtype=np.float64, copy=True).reshape(-1)
    for k, v in enumerate(vs[1:], start=2):
        v = np.asarray(v, dtype=np.float64)
        _same_length(m, v)
        m += (v - m) / k
    return m
