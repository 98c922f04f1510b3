"""Concentration of the centered sampling sums.

The central object is the random trigonometric polynomial
``Gamma_N(xi) = (1/W_N) sum_{n<=N} Y_n xi^n`` on the unit circle.  Its sup
norm is bounded by twice its maximum over a grid of spacing ``1/(2N)``
(Bernstein's inequality plus the mean value theorem), which is what
:func:`gamma_sup` reports.  The module also runs the Monte Carlo tail
tallies, the decay-rate fits and the operator-norm checks that transfer
the circle bound to ``(1/W_N) sum Y_n T^n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import check_alpha, check_positive_int
from .algebra import AlgebraSpec
from .operators import _trace_dual, circle_grid_max, circle_grid_size
from .sampling import RandomPath, sample_path, weight_sequence, weights

__all__ = [
    "GammaResult",
    "TailTally",
    "DecayFit",
    "NormEstimationError",
    "gamma_sup",
    "gamma_sup_coeffs",
    "sigma_N",
    "lambda_N",
    "lambda_ratio",
    "gamma_tail_bound",
    "gamma_tail_terms",
    "gamma_tail_experiment",
    "chernoff_rate",
    "chernoff_bound",
    "chernoff_series",
    "chernoff_tail_experiment",
    "boundedness_profile",
    "loglog_fit",
    "decay_fit",
    "fluctuation_operator",
    "operator_norm",
    "operator_fluctuation_norm",
    "interpolation_defect",
]

MAX_ITER = 5000


class NormEstimationError(RuntimeError):
    """The iterative p->p norm estimate did not settle within the iteration cap."""


# ---------------------------------------------------------------------------
# circle supremum


@dataclass(frozen=True)
class GammaResult:
    """Grid maximum of ``|Gamma_N|`` and the certified bound ``2 * grid_max``."""

    N: int
    grid_size: int
    grid_max: float
    sup_bound: float
    W_N: float

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "grid_size": self.grid_size,
            "grid_max": self.grid_max,
            "sup_bound": self.sup_bound,
            "W_N": self.W_N,
        }


def gamma_sup_coeffs(coeffs, W: float = 1.0, grid_size: int | None = None) -> GammaResult:
    """Circle bound for ``(1/W) sum_{n=1}^N coeffs[n-1] xi^n``."""
    c = np.asarray(coeffs, dtype=complex).ravel()
    N = c.size
    if N == 0:
        raise ValueError("N must be >= 1")
    M = circle_grid_size(N) if grid_size is None else int(grid_size)
    gm = circle_grid_max(np.concatenate([[0.0], c]), M) / W
    return GammaResult(N, M, gm, 2.0 * gm, float(W))


def gamma_sup(path: RandomPath, N: int) -> GammaResult:
    N = check_positive_int(N, "N")
    if N > path.n_max:
        raise ValueError(f"N = {N} exceeds the path length {path.n_max}")
    return gamma_sup_coeffs(path.Y[:N], path.weight(N))


def sigma_N(alpha: float, N: int) -> float:
    """Standard deviation of ``sum_{n<=N} Y_n xi^n`` for ``|xi| = 1``."""
    N = check_positive_int(N, "N")
    q = np.arange(1, N + 1, dtype=np.float64) ** -float(alpha)
    return math.sqrt(math.fsum(q * (1.0 - q)))


def lambda_N(alpha: float, N: int) -> float:
    """``W_N^{3/4} / (2 sigma_N)``."""
    s = sigma_N(alpha, N)
    if s == 0.0:
        raise ValueError("sigma_N vanishes; lambda_N is undefined for N = 1")
    return weights(alpha, N, compensated=True) ** 0.75 / (2.0 * s)


def lambda_ratio(alpha: float, N: int) -> float:
    """``lambda_N^2 / (W_N^{1/2} / 4)``, which tends to one."""
    W = weights(alpha, N, compensated=True)
    return lambda_N(alpha, N) ** 2 / (math.sqrt(W) / 4.0)


# ---------------------------------------------------------------------------
# tail tallies


@dataclass(frozen=True)
class TailTally:
    """Monte Carlo frequency of a tail event next to its theoretical bound.

    ``rule`` names the event, ``threshold`` its level.  ``terms`` keeps the
    unclipped ingredients of ``bound`` and ``partial_sum`` the running sum of
    unclipped bounds over the grid up to this ``N``.
    """

    rule: str
    N: int
    threshold: float
    trials: int
    hits: int
    bound: float
    terms: tuple = ()
    partial_sum: float = float("nan")

    def __post_init__(self):
        if not 0 <= self.hits <= self.trials:
            raise ValueError("hits must lie in [0, trials]")
        if self.bound < 0:
            raise ValueError("bound must be non-negative")

    @property
    def frequency(self) -> float:
        return self.hits / self.trials

    @property
    def margin(self) -> float:
        """Three binomial standard deviations at the bound."""
        b = min(self.bound, 1.0)
        return 3.0 * math.sqrt(b * (1.0 - b) / self.trials)

    @property
    def consistent(self) -> bool:
        return self.frequency <= self.bound + self.margin

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "N": self.N,
            "threshold": self.threshold,
            "trials": self.trials,
            "hits": self.hits,
            "bound": self.bound,
            "frequency": self.frequency,
            "margin": self.margin,
            "consistent": self.consistent,
        }


def gamma_tail_terms(alpha: float, N: int) -> tuple[float, float, float]:
    """``(4 pi N, e^{-lambda_N^2/4}, e^{-W_N^{3/4}/4})``: net size and both Chernoff regimes."""
    lam = lambda_N(alpha, N)
    W = weights(alpha, N, compensated=True)
    return 4.0 * math.pi * N, math.exp(-lam * lam / 4.0), math.exp(-(W**0.75) / 4.0)


def _raw_gamma_bound(alpha: float, N: int) -> float:
    net, a, b = gamma_tail_terms(alpha, N)
    return net * 2.0 * max(a, b)


def gamma_tail_bound(alpha: float, N: int) -> float:
    """Union bound over the net for ``P(||Gamma_N||_inf >= W_N^{-1/4})``, clipped to 1."""
    return min(1.0, _raw_gamma_bound(alpha, N))


def gamma_tail_experiment(alpha: float, N_list: Sequence[int], trials: int = 1000, seed0: int = 0) -> list[TailTally]:
    """Frequency of ``{max_grid |Gamma_N| >= W_N^{-1/4}}`` over seeds ``seed0, ..., seed0+trials-1``.

    The event is evaluated on the grid maximum, the sharpest computable proxy
    for ``||Gamma_N||_inf``.
    """
    alpha = check_alpha(alpha)
    trials = check_positive_int(trials, "trials", minimum=100)
    Ns = sorted(check_positive_int(N, "N", minimum=2) for N in N_list)
    hits = np.zeros(len(Ns), dtype=np.int64)
    for s in range(trials):
        path = sample_path(alpha, Ns[-1], seed0 + s)
        for j, N in enumerate(Ns):
            if gamma_sup(path, N).grid_max >= path.weight(N) ** -0.25:
                hits[j] += 1
    out, running = [], 0.0
    for j, N in enumerate(Ns):
        raw = _raw_gamma_bound(alpha, N)
        running += raw
        out.append(
            TailTally(
                "gamma_sup >= W_N^-1/4",
                N,
                weights(alpha, N) ** -0.25,
                trials,
                int(hits[j]),
                min(1.0, raw),
                gamma_tail_terms(alpha, N),
                running,
            )
        )
    return out


def chernoff_rate(delta: float) -> float:
    """``a = e^delta / (1+delta)^{1+delta}``, which is below one for ``delta > 0``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return math.exp(delta - (1.0 + delta) * math.log1p(delta))


def chernoff_bound(alpha: float, N: int, delta: float) -> float:
    """Multiplicative Chernoff bound ``a^{W_N}`` for ``P(S_N >= (1+delta) W_N)``."""
    return chernoff_rate(delta) ** weights(alpha, N)


def chernoff_series(alpha: float, delta: float, N_max: int) -> np.ndarray:
    """Partial sums ``sum_{N <= K} a^{W_N}`` for ``K = 1, ..., N_max``."""
    alpha = check_alpha(alpha)
    N_max = check_positive_int(N_max, "N_max")
    log_a = math.log(chernoff_rate(delta))
    return np.cumsum(np.exp(log_a * weight_sequence(alpha, N_max)))


def chernoff_tail_experiment(
    alpha: float, N_list: Sequence[int], deltas: Sequence[float], trials: int = 1000, seed0: int = 0
) -> list[TailTally]:
    """Frequency of ``{S_N >= (1+delta) W_N}`` against ``a^{W_N}`` for every ``(delta, N)``."""
    alpha = check_alpha(alpha)
    trials = check_positive_int(trials, "trials", minimum=100)
    Ns = sorted(check_positive_int(N, "N") for N in N_list)
    counts = np.empty((trials, len(Ns)), dtype=np.int64)
    for s in range(trials):
        path = sample_path(alpha, Ns[-1], seed0 + s)
        counts[s] = path.S[np.asarray(Ns) - 1]
    W = weight_sequence(alpha, Ns[-1])[np.asarray(Ns) - 1]
    out = []
    for delta in deltas:
        a = chernoff_rate(delta)
        running = 0.0
        for j, N in enumerate(Ns):
            b = a ** W[j]
            running += b
            level = (1.0 + delta) * W[j]
            hits = int(np.sum(counts[:, j] >= level))
            out.append(TailTally(f"S_N >= (1+{delta:g}) W_N", N, float(level), trials, hits, min(1.0, b), (a, float(W[j])), running))
    return out


def boundedness_profile(alpha: float, deltas: Sequence[float], seeds: Sequence[int], n_max: int) -> dict:
    """Per ``delta``, the smallest ``N_1`` after which ``S_N / W_N <= 1 + delta`` on every seed.

    Returns ``{delta: {"N1": int, "per_seed": ndarray}}`` where
    ``per_seed[k]`` is one past the last exceedance on seed ``k`` (1 if there
    is none), so ``N1 = max(per_seed)``.  An ``N1`` above ``n_max`` means
    some seed still exceeds the level at the end of the horizon.
    """
    alpha = check_alpha(alpha)
    n_max = check_positive_int(n_max, "n_max")
    W = weight_sequence(alpha, n_max)
    deltas = [float(d) for d in deltas]
    last = np.zeros((len(deltas), len(seeds)), dtype=np.int64)
    for k, s in enumerate(seeds):
        ratio = sample_path(alpha, n_max, s).S / W
        for j, delta in enumerate(deltas):
            over = np.flatnonzero(ratio > 1.0 + delta)
            last[j, k] = over[-1] + 1 if over.size else 0
    out = {}
    for j, delta in enumerate(deltas):
        per_seed = last[j] + 1
        out[delta] = {"N1": int(per_seed.max()) if per_seed.size else 1, "per_seed": per_seed}
    return out


# ---------------------------------------------------------------------------
# decay rate


def loglog_fit(N_grid, values) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` of ``log values`` against ``log N``."""
    N = np.asarray(N_grid, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if N.size < 3:
        raise ValueError("a decay fit needs at least 3 grid points")
    if np.any(v <= 0):
        raise ValueError("values must be positive for a log-log fit")
    slope, intercept = np.polyfit(np.log(N), np.log(v), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    N_grid: np.ndarray
    seeds: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    @property
    def eps(self) -> float:
        """Target rate ``(1 - alpha) / 4``."""
        return (1.0 - self.alpha) / 4.0

    @property
    def median_slope(self) -> float:
        return float(np.median(self.slopes))

    @property
    def C_hat(self) -> np.ndarray:
        return np.exp(self.intercepts)

    @property
    def passed(self) -> bool:
        return self.median_slope <= -self.eps

    def rows(self) -> list[tuple]:
        return [(int(s), float(a), float(b)) for s, a, b in zip(self.seeds, self.slopes, self.intercepts)]


def decay_fit(alpha: float, seeds: Sequence[int], N_grid: Sequence[int]) -> DecayFit:
    """Per seed, the slope of ``log max_grid |Gamma_N|`` against ``log N``."""
    alpha = check_alpha(alpha)
    grid = np.unique(np.asarray(N_grid, dtype=np.int64))
    if grid.size < 3:
        raise ValueError("a decay fit needs at least 3 grid points")
    if grid[0] < 1:
        raise ValueError("grid points must be >= 1")
    slopes, intercepts = [], []
    for s in seeds:
        path = sample_path(alpha, int(grid[-1]), s)
        vals = [gamma_sup(path, int(N)).grid_max for N in grid]
        a, b = loglog_fit(grid, vals)
        slopes.append(a)
        intercepts.append(b)
    return DecayFit(alpha, grid, np.asarray(list(seeds)), np.asarray(slopes), np.asarray(intercepts))


# ---------------------------------------------------------------------------
# operator fluctuations


def fluctuation_operator(T, path: RandomPath, N: int) -> np.ndarray:
    """Superoperator matrix of ``(1/W_N) sum_{n<=N} Y_n T^n`` by Horner's rule."""
    N = check_positive_int(N, "N")
    if N > path.n_max:
        raise ValueError(f"N = {N} exceeds the path length {path.n_max}")
    S = T.superop().matrix
    Y = path.Y[:N]
    I = np.eye(S.shape[0])
    A = np.zeros_like(S)
    for y in Y[::-1]:
        A = S @ (A + y * I)
    return A / path.weight(N)


def _blocks(spec: AlgebraSpec, v: np.ndarray) -> list[np.ndarray]:
    return spec.unvec(v).blocks


def _schatten(spec: AlgebraSpec, svals: list[np.ndarray], p: float) -> float:
    return float(sum(w * np.sum(s**p) for w, s in zip(spec.weights, svals)) ** (1.0 / p))


def _dual_element(spec: AlgebraSpec, v: np.ndarray, p: float) -> tuple[float, np.ndarray]:
    """``(||y||_p, vec z)`` with ``||z||_q = 1`` and ``tau(z y) = ||y||_p``, ``1/p + 1/q = 1``."""
    parts = [np.linalg.svd(b) for b in _blocks(spec, v)]
    norm = _schatten(spec, [s for _, s, _ in parts], p)
    if norm == 0.0:
        return 0.0, np.zeros_like(v)
    if p == 1.0:
        zs = [Vh.conj().T @ U.conj().T for U, s, Vh in parts]
    else:
        zs = [(Vh.conj().T * (s / norm) ** (p - 1.0)) @ U.conj().T for U, s, Vh in parts]
    return norm, np.concatenate([z.ravel() for z in zs])


def _top_rank_one(spec: AlgebraSpec, g: np.ndarray) -> tuple[float, np.ndarray]:
    """``(||g||_inf, vec x)`` with ``x`` rank one, ``||x||_1 = 1`` and ``tau(g x) = ||g||_inf``."""
    best, arg = -1.0, None
    for i, b in enumerate(_blocks(spec, g)):
        U, s, Vh = np.linalg.svd(b)
        if s[0] > best:
            best, arg = s[0], (i, U[:, 0], Vh[0])
    i, u, vh = arg
    xs = [np.zeros((d, d), complex) for d in spec.dims]
    xs[i] = np.outer(vh.conj(), u.conj()) / spec.weights[i]
    return float(best), np.concatenate([x.ravel() for x in xs])


def _ascent_1(spec, A, At, x0, tol):
    value, x = 0.0, x0
    for _ in range(MAX_ITER):
        new, z = _dual_element(spec, A @ x, 1.0)
        _, x = _top_rank_one(spec, At @ z)
        if new <= value * (1.0 + tol):
            return max(value, new), True
        value = new
    return value, False


def _boyd_p(spec, A, At, x0, p, tol):
    q = p / (p - 1.0)
    value, x = 0.0, x0
    for _ in range(MAX_ITER):
        new, z = _dual_element(spec, A @ x, p)
        if new == 0.0:
            return 0.0, True
        _, x = _dual_element(spec, At @ z, q)
        if abs(new - value) <= tol * new:
            return max(value, new), True
        value = new
    return value, False


def _random_unit(spec: AlgebraSpec, rng: np.random.Generator, p: float) -> np.ndarray:
    x = spec.random_element(rng, "general").vec()
    n, _ = _dual_element(spec, x, p)
    return x / n


def operator_norm(spec: AlgebraSpec, A: np.ndarray, p: float, starts: int = 8, seed: int = 0, tol: float = 1e-9) -> float:
    """``||A||_{p->p}`` on ``L^p(tau)`` for a superoperator matrix ``A``.

    Exact for ``p = 2``.  For ``p = 1`` an alternating ascent over rank-one
    elements (the extreme points of the unit ball), for other ``p`` the
    nonlinear power method; both return the best of ``starts`` random starts
    and are lower-bound witnesses, since every value is attained by a unit
    vector.  Raises :class:`NormEstimationError` when no start settles to a
    relative step below ``tol`` within ``MAX_ITER`` steps.
    """
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    A = np.asarray(A, dtype=complex)
    if p == 2.0:
        g = np.sqrt(spec.vector_weights())
        return float(np.linalg.norm((g[:, None] * A) / g[None, :], 2))
    if not np.any(A):
        return 0.0

    At = _trace_dual(spec, A)
    rng = np.random.default_rng(seed)
    if math.isinf(p):
        return operator_norm(spec, At, 1.0, starts, seed, tol)
    best, settled = 0.0, False
    for _ in range(starts):
        if p == 1.0:
            _, x0 = _top_rank_one(spec, spec.random_element(rng, "general").vec())
            value, ok = _ascent_1(spec, A, At, x0, tol)
        else:
            value, ok = _boyd_p(spec, A, At, _random_unit(spec, rng, p), p, tol)
        # an unsettled start still reached an attained value, so it may raise the maximum
        best, settled = max(best, value), settled or ok
    if not settled:
        raise NormEstimationError(f"{p}->{p} norm iteration did not settle from any of {starts} starts")
    return best


def operator_fluctuation_norm(T, path: RandomPath, N: int, p: float = 2.0, **kwargs) -> float:
    """``||(1/W_N) sum_{n<=N} Y_n T^n||_{p->p}``, see :func:`operator_norm`."""
    return operator_norm(T.spec, fluctuation_operator(T, path, N), p, **kwargs)


def interpolation_defect(T, path: RandomPath, N: int, p: float, **kwargs) -> float:
    """``||A||_p - ||A||_1^{2(1/p-1/2)} ||A||_2^{2(1-1/p)}`` for the fluctuation operator ``A``.

    The exponents come from complex interpolation between ``L^1`` and ``L^2``;
    at ``p = 2`` the first factor has exponent zero and the defect vanishes
    identically.
    """
    p = float(p)
    if not 1.0 < p <= 2.0:
        raise ValueError("p must lie in (1, 2]")
    A = fluctuation_operator(T, path, N)
    spec = T.spec
    n2 = operator_norm(spec, A, 2.0)
    if p == 2.0:
        return 0.0
    n1 = operator_norm(spec, A, 1.0, **kwargs)
    np_ = operator_norm(spec, A, p, **kwargs)
    return np_ - n1 ** (2.0 * (1.0 / p - 0.5)) * n2 ** (2.0 * (1.0 - 1.0 / p))
