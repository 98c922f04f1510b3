"""Averaging schemes along a Bernoulli path and their exact finite identities.

All schemes are partial sums ``sum_{n<=N} a_n T^n x`` with a scheme-specific
coefficient sequence ``a_n``:

============  ===============  ==================
scheme        coefficient      normalizer
============  ===============  ==================
random        ``X_n``          ``W_N``
fluctuation   ``Y_n``          ``W_N``
weighted      ``n^-alpha``     ``W_N``
cesaro        ``1``            ``N``
hitting       ``X_n``          ``S_N`` at ``N = n_m``
============  ===============  ==================

Every scheme is computed in one forward pass over the orbit of ``x``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ._validation import check_alpha, check_checkpoints, check_positive_int
from .algebra import Element, ElementStack, p_norm
from .operators import ergodic_projection, iterate_orbit
from .sampling import RandomPath, weight_sequence

__all__ = [
    "Trajectory",
    "LacunaryReport",
    "random_average",
    "hitting_average",
    "fluctuation_average",
    "cesaro_trajectory",
    "weighted_average",
    "abel_defect",
    "abel_expansion",
    "lambda_weights",
    "lambda_sum_ratio",
    "equivalence_defect",
    "decomposition_defect",
    "average_window",
    "lacunary_checkpoints",
    "lacunary_norms",
]

SCHEMES = ("random", "hitting", "weighted", "fluctuation", "cesaro")


@dataclass
class Trajectory:
    scheme: str
    indices: np.ndarray
    residuals: dict = field(default_factory=dict)
    snapshots: list | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("checkpoint indices must be strictly increasing")

    def residual(self, p: float, index: int | None = None) -> float | np.ndarray:
        r = self.residuals[float(p)]
        if index is None:
            return r
        return float(r[np.searchsorted(self.indices, index)])

    def rows(self) -> list[tuple]:
        out = []
        for p in sorted(self.residuals):
            for idx, r in zip(self.indices, self.residuals[p]):
                out.append((self.scheme, int(idx), p, float(r)))
        out.sort(key=lambda row: (row[1], row[2]))
        return out

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme", "index", "p", "residual"])
            for scheme, idx, p, r in self.rows():
                w.writerow([scheme, idx, repr(p), repr(r)])
        return path


# ---------------------------------------------------------------------------
# forward pass


def _scan(T, x: Element, coeff: np.ndarray, N: int, chunk: int = 2048) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(n0, C)`` with ``C[k] = sum_{n <= n0+k} coeff[n-1] T^n x``."""
    running = np.zeros(x.spec.D, complex)
    for n0, V in iterate_orbit(T, x, N, chunk):
        c = coeff[n0 - 1:n0 - 1 + V.shape[0]]
        C = np.cumsum(c[:, None] * V, axis=0) + running
        running = C[-1]
        yield n0, C


def _sums_at(T, x: Element, coeff: np.ndarray, checkpoints: np.ndarray) -> np.ndarray:
    out = np.empty((checkpoints.size, x.spec.D), complex)
    j = 0
    for n0, C in _scan(T, x, coeff, int(checkpoints[-1])):
        hi = n0 + C.shape[0]
        while j < checkpoints.size and checkpoints[j] < hi:
            out[j] = C[checkpoints[j] - n0]
            j += 1
    return out


def _norms(spec, vectors: np.ndarray, ps: Sequence[float]) -> dict:
    stack = ElementStack.from_vectors(spec, vectors)
    return {float(p): stack.p_norms(float(p)) for p in ps}


def _target_vec(T, x: Element, target) -> np.ndarray:
    if target is None:
        return ergodic_projection(T).apply(x).vec()
    if isinstance(target, Element):
        return target.vec()
    return np.asarray(target, dtype=complex)


def _trajectory(scheme, T, x, avgs, indices, target_vec, ps, snapshots) -> Trajectory:
    resid = avgs - target_vec[None, :]
    snaps = [x.spec.unvec(a) for a in avgs] if snapshots else None
    return Trajectory(scheme, indices, _norms(x.spec, resid, ps), snaps)


# ---------------------------------------------------------------------------
# schemes


def random_average(T, x: Element, path: RandomPath, checkpoints, p=(2.0,), target=None, snapshots=False) -> Trajectory:
    """``(1/W_N) sum_{n<=N} X_n T^n x`` at each checkpoint, with residuals against ``Q_T x``."""
    cps = check_checkpoints(checkpoints, path.n_max)
    sums = _sums_at(T, x, path.X.astype(float), cps)
    avgs = sums / path.W[cps - 1][:, None]
    return _trajectory("random", T, x, avgs, cps, _target_vec(T, x, target), p, snapshots)


def fluctuation_average(T, x: Element, path: RandomPath, checkpoints, p=(2.0,), snapshots=False) -> Trajectory:
    """``(1/W_N) sum_{n<=N} Y_n T^n x``; the residual is its norm (the limit is 0)."""
    cps = check_checkpoints(checkpoints, path.n_max)
    sums = _sums_at(T, x, path.Y, cps)
    avgs = sums / path.W[cps - 1][:, None]
    return _trajectory("fluctuation", T, x, avgs, cps, np.zeros(x.spec.D, complex), p, snapshots)


def cesaro_trajectory(T, x: Element, checkpoints, p=(2.0,), target=None, snapshots=False) -> Trajectory:
    cps = check_checkpoints(checkpoints, np.iinfo(np.int64).max)
    sums = _sums_at(T, x, np.ones(int(cps[-1])), cps)
    avgs = sums / cps[:, None]
    return _trajectory("cesaro", T, x, avgs, cps, _target_vec(T, x, target), p, snapshots)


def _power_cache(S: np.ndarray):
    @lru_cache(maxsize=4096)
    def power(g: int) -> np.ndarray:
        return np.linalg.matrix_power(S, g)
    return power


def hitting_average(T, x: Element, path: RandomPath, m_checkpoints, p=(2.0,), target=None, snapshots=False) -> Trajectory:
    """``(1/m) sum_{k<=m} T^{n_k} x`` along the hitting times of ``path``.

    Only the hits are visited; the running power is advanced by ``S^{n_k - n_{k-1}}``.
    """
    hits = path.hits
    cps = check_checkpoints(m_checkpoints, hits.size, "hit count")
    S = T.superop().matrix
    power = _power_cache(S)
    v, acc, prev = x.vec(), np.zeros(x.spec.D, complex), 0
    avgs = np.empty((cps.size, x.spec.D), complex)
    j = 0
    for k, n in enumerate(hits[: cps[-1]], start=1):
        v = power(int(n - prev)) @ v
        prev = n
        acc = acc + v
        if k == cps[j]:
            avgs[j] = acc / k
            j += 1
    return _trajectory("hitting", T, x, avgs, cps, _target_vec(T, x, target), p, snapshots)


def weighted_average(T, x: Element, N: int, alpha: float) -> Element:
    """``(1/W_N) sum_{n<=N} n^-alpha T^n x``."""
    N = check_positive_int(N, "N")
    alpha = check_alpha(alpha)
    coeff = np.arange(1, N + 1, dtype=np.float64) ** -alpha
    sums = _sums_at(T, x, coeff, np.array([N]))
    return x.spec.unvec(sums[0] / weight_sequence(alpha, N)[-1])


def lambda_weights(alpha: float, N: int) -> np.ndarray:
    """``lambda_m = m (m^-alpha - (m+1)^-alpha)`` for ``m = 1, ..., N-1``."""
    m = np.arange(1, N, dtype=np.float64)
    # m^-a - (m+1)^-a = -m^-a expm1(-a log1p(1/m)), free of cancellation
    return -m * m ** -alpha * np.expm1(-alpha * np.log1p(1.0 / m))


def lambda_sum_ratio(alpha: float, N: int) -> float:
    """``sum_{m<N} lambda_m / (alpha W_N)``, which tends to 1."""
    alpha = check_alpha(alpha)
    return float(math.fsum(lambda_weights(alpha, N)) / (alpha * weight_sequence(alpha, N)[-1]))


def abel_expansion(T, x: Element, N: int, alpha: float) -> Element:
    """Weighted average rebuilt from Cesaro partial sums by Abel summation.

    ``(N^-alpha / W_N) S_N + (1/W_N) sum_{m<N} lambda_m S_m / m`` with
    ``S_m = sum_{n<=m} T^n x``.
    """
    N = check_positive_int(N, "N", minimum=2)
    alpha = check_alpha(alpha)
    S = T.superop().matrix
    lam = lambda_weights(alpha, N)
    v = x.vec()
    partial = np.zeros_like(v)
    tail = np.zeros_like(v)
    for m in range(1, N + 1):
        v = S @ v
        partial = partial + v
        if m < N:
            tail = tail + (lam[m - 1] / m) * partial
    W = math.fsum(np.arange(1, N + 1, dtype=np.float64) ** -alpha)
    return x.spec.unvec((N ** -alpha * partial + tail) / W)


def abel_defect(T, x: Element, N: int, alpha: float) -> float:
    """2-norm gap between :func:`weighted_average` and :func:`abel_expansion`."""
    if N < 2:
        raise ValueError("abel_defect needs N >= 2")
    return p_norm(weighted_average(T, x, N, alpha) - abel_expansion(T, x, N, alpha), 2)


def equivalence_defect(T, x: Element, path: RandomPath, m: int) -> float:
    """Gap between the hitting average of length ``m`` and the count-normalized average at ``N = n_m``.

    The two sides are computed by separate passes: stepping along the hits,
    and a masked sum over the full orbit up to ``n_m``.
    """
    m = check_positive_int(m, "m")
    if m > path.hits.size:
        raise ValueError(f"path has only {path.hits.size} hits")
    lhs = hitting_average(T, x, path, [m], target=np.zeros(x.spec.D), snapshots=True).snapshots[0]
    N = int(path.hits[m - 1])
    rhs_sum = _sums_at(T, x, path.X.astype(float), np.array([N]))[0]
    rhs = x.spec.unvec(rhs_sum / path.S[N - 1])
    return p_norm(lhs - rhs, 2)


def decomposition_defect(T, x: Element, path: RandomPath, checkpoints) -> float:
    """Largest relative gap of ``random = fluctuation + weighted`` over the checkpoints."""
    cps = check_checkpoints(checkpoints, path.n_max)
    zero = np.zeros(x.spec.D)
    rnd = random_average(T, x, path, cps, target=zero, snapshots=True).snapshots
    flc = fluctuation_average(T, x, path, cps, snapshots=True).snapshots
    worst = 0.0
    for N, r, f in zip(cps, rnd, flc):
        w = weighted_average(T, x, int(N), path.alpha)
        scale = max(p_norm(r, 2), p_norm(x, 2), 1e-300)
        worst = max(worst, p_norm(r - (f + w), 2) / scale)
    return worst


def average_window(T, x: Element, path: RandomPath, start: int, stop: int, scheme: str = "random", target=None) -> ElementStack:
    """Residuals ``avg_N - target`` for every ``start <= N <= stop``.

    ``scheme`` is ``random`` (normalizer ``W_N``) or ``fluctuation``.
    """
    if not 1 <= start <= stop <= path.n_max:
        raise ValueError("window must satisfy 1 <= start <= stop <= n_max")
    if scheme == "random":
        coeff = path.X.astype(float)
        tvec = _target_vec(T, x, target)
    elif scheme == "fluctuation":
        coeff = path.Y
        tvec = np.zeros(x.spec.D, complex) if target is None else _target_vec(T, x, target)
    else:
        raise ValueError(f"unsupported window scheme {scheme!r}")
    rows = []
    for n0, C in _scan(T, x, coeff, stop):
        lo, hi = max(start, n0), min(stop, n0 + C.shape[0] - 1)
        if lo <= hi:
            sel = C[lo - n0:hi - n0 + 1] / path.W[lo - 1:hi][:, None]
            rows.append(sel - tvec[None, :])
    return ElementStack.from_vectors(x.spec, np.vstack(rows))


# ---------------------------------------------------------------------------
# lacunary subsequences


def lacunary_checkpoints(r: float, k_max: int) -> list[int]:
    """Deduplicated ``floor(r^k)`` for ``k = 1, ..., k_max``."""
    if not r > 1:
        raise ValueError("r must be > 1")
    out = []
    for k in range(1, k_max + 1):
        v = int(math.floor(r ** k + 1e-9))
        if v >= 1 and (not out or v > out[-1]):
            out.append(v)
    return out


@dataclass
class LacunaryReport:
    r: float
    alpha: float
    indices: np.ndarray
    norms: dict
    w_ratios: np.ndarray
    eta: float
    k0: int | None

    @property
    def ratio_bound(self) -> float:
        return (1.0 + self.eta) ** 3

    def tail_sums(self, p: float = 2.0) -> np.ndarray:
        """``sum_{j >= k} ||u_j||_p`` for each start position ``k``."""
        return np.cumsum(self.norms[float(p)][::-1])[::-1]


def lacunary_norms(T, path: RandomPath, x: Element, r: float, p=(2.0,)) -> LacunaryReport:
    """Norms of the fluctuation averages ``u_k`` at ``floor(r^k)`` and the ``W``-ratio diagnostics.

    ``eta = r^(1-alpha) - 1``; ``k0`` is the first position from which every
    ratio ``W_{floor(r^{k+1})} / W_{floor(r^k)}`` stays below ``(1+eta)^3``
    (reported, not asserted).
    """
    k_max = int(math.floor(math.log(path.n_max) / math.log(r))) + 1
    idx = [i for i in lacunary_checkpoints(r, k_max) if i <= path.n_max]
    idx = np.asarray(idx, dtype=np.int64)
    traj = fluctuation_average(T, x, path, idx, p=p)
    W = path.W[idx - 1]
    ratios = W[1:] / W[:-1]
    eta = r ** (1.0 - path.alpha) - 1.0
    bound = (1.0 + eta) ** 3
    k0 = None
    for k in range(ratios.size):
        if np.all(ratios[k:] <= bound):
            k0 = k
            break
    return LacunaryReport(r, path.alpha, idx, traj.residuals, ratios, eta, k0)
