"""Domination certificates and bilateral almost uniform (b.a.u.) certificates.

A finite window ``u_{n0}, ..., u_{N1}`` of self-adjoint elements is certified
by a positive ``c`` with ``-c <= u_n <= c`` (or ``-d <= u_n <= c``); the
number ``||c + 2d||_p`` then bounds the ``L^p(l^inf)`` norm of the window.
Exact minimization over ``c`` is a semidefinite program; we only build
valid upper bounds, by one of three strategies:

``abs-sum``
    ``c = sum_n |u_n|``.
``scalar``
    ``c = max_n ||u_n||_inf * 1``.
``greedy``
    start from half the scalar bound and repeatedly add the negative part of
    the most violated constraint ``c -+ u_n``.

Every certificate is checked in the operator order before it is returned.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import (
    DEFAULT_TOL,
    AlgebraSpec,
    Element,
    ElementStack,
    Tolerance,
    p_norm,
    spectral_projection_below,
    trace,
)

__all__ = [
    "DominationCertificate",
    "BauCertificate",
    "Factorization",
    "STRATEGIES",
    "dominate_selfadjoint",
    "check_domination",
    "linf_norm_bound",
    "c0_tail_profile",
    "bau_certificate",
    "combine_factorizations",
    "factorize_dominated",
]

log = logging.getLogger(__name__)

STRATEGIES = ("abs-sum", "scalar", "greedy")
GREEDY_ROUNDS = 50
GREEDY_SHRINK = 0.5
CHEBYSHEV_SAFETY = 0.99


@dataclass(frozen=True, eq=False)
class DominationCertificate:
    window: tuple[int, int]
    c: Element
    d: Element
    bound: float
    p: float
    strategy: str

    @property
    def symmetric(self) -> bool:
        """``d = 0`` flags the two-sided certificate ``-c <= u_n <= c``."""
        return all(not np.any(b) for b in self.d.blocks)

    def verify(self, us, tol: Tolerance = DEFAULT_TOL) -> bool:
        return check_domination(us, self.c, None if self.symmetric else self.d, tol)

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "bound": self.bound,
            "p": self.p,
            "strategy": self.strategy,
            "c": self.c.to_list(),
            "d": self.d.to_list(),
        }


@dataclass(frozen=True, eq=False)
class BauCertificate:
    eps: float
    lam: float
    e: Element
    trace_defect: float
    window: tuple[int, int]
    sup_bound: float
    strategy: str = ""
    lambda_chebyshev: float = float("nan")
    p: float = 2.0

    def projection_rank_per_block(self) -> list[int]:
        return [int(round(np.trace(b).real)) for b in self.e.blocks]

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "lambda": self.lam,
            "trace_defect": self.trace_defect,
            "window": list(self.window),
            "sup_bound": self.sup_bound,
            "projection_rank_per_block": self.projection_rank_per_block(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _stack(us, spec: AlgebraSpec | None = None) -> ElementStack:
    return ElementStack.coerce(us, spec)


def _check_selfadjoint(stack: ElementStack, tol: Tolerance) -> None:
    if len(stack) == 0:
        return
    scale = max(1.0, float(stack.sa_inf_norms().max()))
    if stack.sa_defects().max() > tol.eq_tol * scale:
        raise ValueError("domination needs a sequence of self-adjoint elements")


def _batched_abs(stack: ElementStack) -> list[np.ndarray]:
    out = []
    for b in stack.blocks:
        h = (b + np.conj(np.swapaxes(b, 1, 2))) / 2
        vals, vecs = np.linalg.eigh(h)
        out.append(np.einsum("nij,nj,nkj->nik", vecs, np.abs(vals), vecs.conj()))
    return out


def _negative_part(x: Element) -> Element:
    blocks = []
    for b in x.blocks:
        vals, vecs = np.linalg.eigh((b + b.conj().T) / 2)
        blocks.append((vecs * np.maximum(-vals, 0.0)) @ vecs.conj().T)
    return Element(x.spec, blocks, validate=False)


def check_domination(us, c: Element, d: Element | None = None, tol: Tolerance = DEFAULT_TOL) -> bool:
    """``-d <= u_n <= c`` for every member (``d = c`` when omitted)."""
    stack = _stack(us, c.spec)
    if len(stack) == 0:
        return True
    d = c if d is None else d
    slack = tol.psd_tol * max(1.0, p_norm(c, np.inf), p_norm(d, np.inf))
    upper = _unsettled(stack, c).shifted(c, -1.0).min_eigenvalues()
    lower = _unsettled(stack, d).shifted(d, +1.0).min_eigenvalues()
    return bool(upper.min(initial=np.inf) >= -slack and lower.min(initial=np.inf) >= -slack)


def _floor(c: Element) -> float:
    return min(float(np.linalg.eigvalsh((b + b.conj().T) / 2)[0]) for b in c.blocks)


def _unsettled(stack: ElementStack, c: Element) -> ElementStack:
    """Members not already settled by ``||u_n||_inf <= lambda_min(c)``.

    Such members satisfy ``-c <= u_n <= c`` outright, so only the rest
    need a spectral check.
    """
    return stack.take(stack.sa_inf_norms() > _floor(c))


def _abs_sum(stack: ElementStack) -> Element:
    return Element(stack.spec, [a.sum(axis=0) for a in _batched_abs(stack)], validate=False)


def _scalar(stack: ElementStack) -> Element:
    s = float(stack.sa_inf_norms().max()) if len(stack) else 0.0
    return stack.spec.scalar(s)


def _greedy(stack: ElementStack, tol: Tolerance) -> Element | None:
    c = GREEDY_SHRINK * _scalar(stack)
    norms = stack.sa_inf_norms()
    alive = np.arange(len(stack))
    full = stack
    for _ in range(GREEDY_ROUNDS):
        # c only grows, so members settled once stay settled
        alive = alive[norms[alive] > _floor(c)]
        if alive.size == 0:
            return c
        stack = full.take(alive)
        slack = tol.psd_tol * max(1.0, p_norm(c, np.inf))
        upper = stack.shifted(c, -1.0).min_eigenvalues()
        lower = stack.shifted(c, +1.0).min_eigenvalues()
        iu, il = int(np.argmin(upper)), int(np.argmin(lower))
        if min(upper[iu], lower[il]) >= -slack:
            return c
        if upper[iu] <= lower[il]:
            c = c + _negative_part(c - stack[iu])
        else:
            c = c + _negative_part(c + stack[il])
    return None


def dominate_selfadjoint(
    us,
    p: float = 2.0,
    strategy: str = "abs-sum",
    tol: Tolerance = DEFAULT_TOL,
    start: int = 1,
    spec: AlgebraSpec | None = None,
) -> DominationCertificate:
    """Positive ``c`` with ``-c <= u_n <= c`` for every ``u_n`` in the window.

    ``start`` labels the first member, so the window is
    ``(start, start + len(us) - 1)``.
    """
    stack = _stack(us, spec)
    _check_selfadjoint(stack, tol)
    window = (start, start + len(stack) - 1)
    if len(stack) == 0:
        c = stack.spec.zeros()
        return DominationCertificate(window, c, c, 0.0, p, strategy)
    if strategy == "abs-sum":
        c = _abs_sum(stack)
    elif strategy == "scalar":
        c = _scalar(stack)
    elif strategy == "greedy":
        c = _greedy(stack, tol)
        if c is None:
            log.info("greedy domination did not converge in %d rounds; using abs-sum", GREEDY_ROUNDS)
            c = _abs_sum(stack)
            strategy = "abs-sum"
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if not check_domination(stack, c, None, tol):
        raise RuntimeError(f"{strategy} certificate failed verification")
    return DominationCertificate(window, c, stack.spec.zeros(), p_norm(c, p), p, strategy)


def linf_norm_bound(us, p: float = 2.0, strategy: str = "best", tol: Tolerance = DEFAULT_TOL, spec=None) -> float:
    """Upper bound on the ``L^p(l^inf)`` norm of a self-adjoint sequence.

    ``strategy="best"`` returns the smallest bound over all strategies.
    """
    strategies = STRATEGIES if strategy == "best" else (strategy,)
    stack = _stack(us, spec)
    return min(dominate_selfadjoint(stack, p, s, tol).bound for s in strategies)


def c0_tail_profile(
    us,
    p: float = 2.0,
    strategy: str = "abs-sum",
    starts: Sequence[int] | None = None,
    ratio: float = 2.0,
    start: int = 1,
    tol: Tolerance = DEFAULT_TOL,
    spec=None,
) -> np.ndarray:
    """Rows ``(n0, bound)``: domination bounds of the suffixes ``(u_n)_{n >= n0}``.

    A certificate for a suffix also certifies every later suffix, so the bound
    column is made non-increasing by a running minimum.
    """
    stack = _stack(us, spec)
    last = start + len(stack) - 1
    if starts is None:
        starts, v = [], float(start)
        while v <= last:
            starts.append(int(v))
            v = max(v * ratio, v + 1)
    rows, best = [], np.inf
    for n0 in starts:
        sub = stack[n0 - start:]
        bound = 0.0 if len(sub) == 0 else dominate_selfadjoint(sub, p, strategy, tol, start=n0).bound
        best = min(best, bound)
        rows.append((n0, best))
    return np.asarray(rows, dtype=float)


def _exact_threshold(c: Element, eps: float, tol: Tolerance) -> float:
    """Smallest ``lam`` in ``{0} + spec(c)`` whose weighted eigenvalue mass above ``lam`` is ``< eps``.

    "Above" matches :func:`spectral_projection_below`: eigenvalues within
    ``psd_tol`` of ``lam`` stay below.
    """
    vals, wts = [], []
    for b, w in zip(c.blocks, c.spec.weights):
        ev = np.linalg.eigvalsh((b + b.conj().T) / 2)
        vals.append(np.maximum(ev, 0.0))
        wts.append(np.full(ev.size, w))
    vals, wts = np.concatenate(vals), np.concatenate(wts)
    for lam in np.concatenate([[0.0], np.sort(vals)]):
        if wts[vals > lam + tol.psd_tol].sum() < eps:
            return float(lam)
    return float(vals.max())


def bau_certificate(
    us,
    u_limit: Element | None = None,
    eps: float = 0.05,
    p: float = 2.0,
    strategies: Sequence[str] = STRATEGIES,
    start: int = 1,
    tol: Tolerance = DEFAULT_TOL,
    spec=None,
) -> BauCertificate:
    """Projection ``e`` with ``tau(1-e) < eps`` and ``max_n ||e (u_n - u) e||_inf`` small.

    For each strategy a dominating ``c`` of the residuals is built; the
    Chebyshev threshold ``(||c||_p^p / (0.99 eps))^(1/p)`` is refined by an
    exact search over the spectrum of ``c``, and ``e`` is the spectral
    projection of ``c`` below the threshold.  The certificate with the
    smallest threshold wins.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    stack = _stack(us, spec)
    if len(stack) == 0:
        raise ValueError("window is empty")
    if u_limit is not None:
        stack = stack.shifted(u_limit, -1.0)
        stack = ElementStack(stack.spec, [-b for b in stack.blocks])
    best = None
    for strategy in strategies:
        cert = dominate_selfadjoint(stack, p, strategy, tol, start=start)
        c = cert.c
        norm_c = p_norm(c, p)
        lam_cheb = (norm_c ** p / (CHEBYSHEV_SAFETY * eps)) ** (1.0 / p) if norm_c > 0 else 0.0
        lam = min(_exact_threshold(c, eps, tol), lam_cheb)
        e = spectral_projection_below(c, lam, tol)
        defect = float((trace(stack.spec.identity() - e)).real)
        full = all(np.array_equal(b, np.eye(b.shape[0])) for b in e.blocks)
        sup_bound = float((stack if full else stack.sandwich(e)).sa_inf_norms().max())
        if defect >= eps:
            raise RuntimeError("spectral projection misses the trace budget")
        if sup_bound > lam + tol.psd_tol * max(1.0, lam):
            raise RuntimeError("sandwiched residuals exceed the threshold")
        cand = BauCertificate(eps, lam, e, defect, cert.window, sup_bound, cert.strategy, lam_cheb, p)
        if best is None or (cand.lam, cand.sup_bound) < (best.lam, best.sup_bound):
            best = cand
    return best


# ---------------------------------------------------------------------------
# factorizations u_n = a v_n b


@dataclass(frozen=True, eq=False)
class Factorization:
    a: Element
    b: Element
    vs: ElementStack

    def reconstruct(self) -> ElementStack:
        return ElementStack(
            self.a.spec,
            [ab[None] @ vb @ bb[None] for ab, vb, bb in zip(self.a.blocks, self.vs.blocks, self.b.blocks)],
        )

    def middle_norm(self) -> float:
        return float(self.vs.inf_norms().max()) if len(self.vs) else 0.0

    def defect(self, us) -> float:
        us = _stack(us, self.a.spec)
        diff = [r - u for r, u in zip(self.reconstruct().blocks, us.blocks)]
        return float(max(np.abs(d).max() for d in diff)) if len(us) else 0.0

    def norm_bound(self, p: float) -> float:
        """``||a||_{2p} sup_n ||v_n||_inf ||b||_{2p}``."""
        return p_norm(self.a, 2 * p) * self.middle_norm() * p_norm(self.b, 2 * p)


def _psd_sqrt_and_pinv(blocks: Sequence[np.ndarray], rcond: float = 1e-12):
    roots, pinvs = [], []
    for m in blocks:
        vals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
        vals = np.maximum(vals, 0.0)
        r = np.sqrt(vals)
        cut = rcond * max(r.max(initial=0.0), 1e-300)
        rinv = np.where(r > cut, 1.0 / np.where(r > cut, r, 1.0), 0.0)
        roots.append((vecs * r) @ vecs.conj().T)
        pinvs.append((vecs * rinv) @ vecs.conj().T)
    return roots, pinvs


def combine_factorizations(f: Factorization, g: Factorization, tol: Tolerance = DEFAULT_TOL) -> Factorization:
    """Factorize ``u_n + u'_n`` through ``(aa* + a'a'*)^(1/2)`` and ``(b*b + b'*b')^(1/2)``."""
    spec = f.a.spec
    if g.a.spec != spec or len(f.vs) != len(g.vs):
        raise ValueError("factorizations must share the algebra and the length")
    A, Ainv = _psd_sqrt_and_pinv(
        [a @ a.conj().T + a2 @ a2.conj().T for a, a2 in zip(f.a.blocks, g.a.blocks)]
    )
    B, Binv = _psd_sqrt_and_pinv(
        [b.conj().T @ b + b2.conj().T @ b2 for b, b2 in zip(f.b.blocks, g.b.blocks)]
    )
    total = [u + u2 for u, u2 in zip(f.reconstruct().blocks, g.reconstruct().blocks)]
    ws = ElementStack(spec, [ai[None] @ t @ bi[None] for ai, t, bi in zip(Ainv, total, Binv)])
    out = Factorization(Element(spec, A, validate=False), Element(spec, B, validate=False), ws)
    scale = max(1.0, max(np.abs(t).max() for t in total) if len(ws) else 1.0)
    if out.middle_norm() > 1.0 + tol.eq_tol:
        raise ValueError(f"middle terms have norm {out.middle_norm():.3e} > 1; kernel mismatch")
    if out.defect(ElementStack(spec, total)) > tol.eq_tol * scale:
        raise ValueError("combined factorization does not reproduce the sum")
    return out


def factorize_dominated(us, c: Element, d: Element | None = None, tol: Tolerance = DEFAULT_TOL) -> Factorization:
    """Factorization of a dominated window.

    With ``d`` omitted the window satisfies ``-c <= u_n <= c`` and
    ``u_n = c^(1/2) v_n c^(1/2)`` with ``||v_n|| <= 1``.  Otherwise
    ``-d <= u_n <= c``: then ``u_n + d = (c+d)^(1/2) v_n (c+d)^(1/2)``, and
    adding ``d^(1/2) (-1) d^(1/2)`` through :func:`combine_factorizations`
    gives ``u_n = (c+2d)^(1/2) w_n (c+2d)^(1/2)``.  Either way
    :meth:`Factorization.norm_bound` reproduces the certificate bound.
    """
    spec = c.spec
    stack = _stack(us, spec)
    if not check_domination(stack, c, d, tol):
        raise ValueError("sequence is not dominated")
    if d is None:
        root, rinv = _psd_sqrt_and_pinv(c.blocks)
        vs = ElementStack(spec, [ri[None] @ s @ ri[None] for ri, s in zip(rinv, stack.blocks)])
        rt = Element(spec, root, validate=False)
        return Factorization(rt, rt, vs)
    root, rinv = _psd_sqrt_and_pinv([cb + db for cb, db in zip(c.blocks, d.blocks)])
    shifted = stack.shifted(d, +1.0)
    vs = ElementStack(spec, [ri[None] @ s @ ri[None] for ri, s in zip(rinv, shifted.blocks)])
    rt = Element(spec, root, validate=False)
    first = Factorization(rt, rt, vs)
    droot, _ = _psd_sqrt_and_pinv(d.blocks)
    dr = Element(spec, droot, validate=False)
    minus_one = ElementStack(spec, [np.repeat(-np.eye(k, dtype=complex)[None], len(stack), 0) for k in spec.dims])
    return combine_factorizations(first, Factorization(dr, dr, minus_one), tol)
