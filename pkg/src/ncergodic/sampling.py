"""Bernoulli sampling model ``P(X_n = 1) = n^-alpha`` and its hitting times.

Uniform variates come from a Philox stream keyed by the seed, so ``X_n`` is a
pure function of ``(seed, n)``: paths are reproducible bit for bit, a shorter
path is a prefix of a longer one, and any index range can be generated
without the ones before it.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_alpha, check_positive_int

__all__ = [
    "RandomPath",
    "sample_path",
    "bernoulli_bits",
    "weights",
    "weight_sequence",
    "hitting_times",
    "slln_trajectory",
    "geometric_grid",
]


def _uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    """Uniforms ``u_n`` for ``start <= n < stop`` (0-based positions)."""
    bg = np.random.Philox(key=int(seed))
    bg.advance(start // 4)  # Philox4x64 emits four words per counter step
    gen = np.random.Generator(bg)
    return gen.random(stop - start + start % 4)[start % 4:]


def bernoulli_bits(alpha: float, seed: int, start: int, stop: int) -> np.ndarray:
    """``X_n`` for ``start <= n <= stop`` (1-based, inclusive)."""
    alpha = check_alpha(alpha)
    n = np.arange(start, stop + 1, dtype=np.float64)
    u = _uniforms(seed, start - 1, stop)
    return (u < n ** -alpha).astype(np.uint8)


def weight_sequence(alpha: float, N: int) -> np.ndarray:
    """``W_1, ..., W_N`` accumulated left to right."""
    n = np.arange(1, N + 1, dtype=np.float64)
    return np.cumsum(n ** -alpha)


def weights(alpha: float, N: int, compensated: bool = False) -> float:
    """``W_N = sum_{n<=N} n^-alpha``."""
    alpha = float(alpha)
    N = check_positive_int(N, "N")
    terms = np.arange(1, N + 1, dtype=np.float64) ** -alpha
    if compensated:
        return math.fsum(terms)
    return float(weight_sequence(alpha, N)[-1])


@dataclass(frozen=True, eq=False)
class RandomPath:
    """One realization ``X_1, ..., X_{n_max}`` with its derived sequences.

    ``X[n-1]`` holds ``X_n``; likewise for ``S`` (counts), ``W`` (weights)
    and ``Y`` (centered values).
    """

    alpha: float
    seed: int | None
    X: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.uint8).copy()
        if X.ndim != 1 or X.size == 0:
            raise ValueError("a path needs at least one entry")
        if np.any(X > 1):
            raise ValueError("path entries must be 0 or 1")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        S = np.cumsum(X, dtype=np.int64)
        W = weight_sequence(self.alpha, X.size)
        for a in (S, W):
            a.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "hits", np.flatnonzero(X) + 1)

    @classmethod
    def from_bits(cls, bits, alpha: float = 0.5) -> "RandomPath":
        """A deterministic path, for tests and injected scenarios."""
        return cls(check_alpha(alpha), None, np.asarray(bits))

    @property
    def n_max(self) -> int:
        return int(self.X.size)

    @property
    def probabilities(self) -> np.ndarray:
        return np.arange(1, self.n_max + 1, dtype=np.float64) ** -self.alpha

    @property
    def Y(self) -> np.ndarray:
        """Centered values ``Y_n = X_n - n^-alpha``."""
        return self.X - self.probabilities

    def count(self, N: int) -> int:
        return int(self.S[N - 1])

    def weight(self, N: int) -> float:
        return float(self.W[N - 1])

    def prefix(self, N: int) -> "RandomPath":
        return RandomPath(self.alpha, self.seed, self.X[:N])

    # -- export -----------------------------------------------------------
    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "X_n", "W_n", "S_n"])
            for n in range(1, self.n_max + 1):
                w.writerow([n, int(self.X[n - 1]), repr(float(self.W[n - 1])), int(self.S[n - 1])])
        return path

    def write_hits_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps([int(h) for h in self.hits]))
        return path


def sample_path(alpha: float, n_max: int, seed: int) -> RandomPath:
    alpha = check_alpha(alpha)
    n_max = check_positive_int(n_max, "n_max")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return RandomPath(alpha, seed, bernoulli_bits(alpha, seed, 1, n_max))


def hitting_times(path: RandomPath) -> np.ndarray:
    """``n_k = min{N : X_1 + ... + X_N = k}`` for ``k = 1, ..., S_{n_max}``."""
    return path.hits.copy()


def geometric_grid(n_max: int, ratio: float = 2.0, start: int = 1) -> np.ndarray:
    """Deduplicated ``floor(start * ratio^k)`` up to ``n_max``, always including ``n_max``."""
    if ratio <= 1:
        raise ValueError("ratio must be > 1")
    pts, v = [], float(start)
    while v < n_max:
        pts.append(int(v))
        v *= ratio
    pts.append(int(n_max))
    return np.unique(np.asarray(pts, dtype=np.int64))


def slln_trajectory(path: RandomPath, ratio: float = 2.0) -> np.ndarray:
    """Rows ``(N, S_N / W_N)`` on a geometric grid of ``N``."""
    grid = geometric_grid(path.n_max, ratio)
    return np.column_stack([grid, path.S[grid - 1] / path.W[grid - 1]])
