"""Argument checks shared by the estimators and the functional API."""
from __future__ import annotations

import numbers

import numpy as np

from .algebra import AlgebraSpec, Element, ElementStack


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_p(p) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    return p


def check_checkpoints(checkpoints, upper: int, name: str = "checkpoint") -> np.ndarray:
    cps = np.unique(np.asarray(list(checkpoints), dtype=np.int64))
    if cps.size == 0:
        raise ValueError("at least one checkpoint is required")
    if cps[0] < 1:
        raise ValueError(f"{name}s must be >= 1")
    if cps[-1] > upper:
        raise ValueError(f"{name} {int(cps[-1])} exceeds the available range {upper}")
    return cps


def check_element(x, spec: AlgebraSpec) -> Element:
    if isinstance(x, Element):
        if x.spec != spec:
            raise ValueError("element lives in a different algebra")
        return x
    v = np.asarray(x)
    if v.ndim == 1:
        return spec.unvec(v)
    return Element(spec, [v] if spec.n_blocks == 1 else list(x))


def check_element_array(X, spec: AlgebraSpec) -> np.ndarray:
    """Coerce ``X`` to an ``(n_samples, D)`` complex array of vectorized elements.

    Accepts an array of vectors, a single element, or a sequence of elements.
    """
    if isinstance(X, Element):
        X = [X]
    if isinstance(X, ElementStack):
        X = list(X)
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Element):
        return np.stack([check_element(x, spec).vec() for x in X])
    arr = np.asarray(X, dtype=complex)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != spec.D:
        raise ValueError(f"expected shape (n_samples, {spec.D}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("input contains non-finite values")
    return arr
