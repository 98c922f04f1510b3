"""Finite-dimensional tracial algebras.

An algebra is a finite direct sum of full matrix blocks ``M_{d_1} + ... + M_{d_k}``
with the trace ``tau(x) = sum_i w_i tr(x_i)`` for strictly positive weights
``w_i``.  One block with weight 1 is a factor with the usual trace, weight
``1/d`` gives the normalized trace, and ``k`` blocks of size 1 give the
commutative algebra ``l^inf_k`` with a weighted counting measure.

Elements are stored densely, one complex matrix per block.  Sequences of
elements (trajectories, windows of residuals) are stored as
:class:`ElementStack`, which keeps one ``(n, d_i, d_i)`` array per block so
the spectral routines can be batched.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "AlgebraSpec",
    "Element",
    "ElementStack",
    "trace",
    "p_norm",
    "holder_defect",
    "abs_parts",
    "spectral_projection_below",
    "order_leq",
    "hermitian_function",
    "min_eigenvalue",
]


@dataclass(frozen=True)
class Tolerance:
    """Equality and positivity tolerances used by every check in the package."""

    eq_tol: float = 1e-10
    psd_tol: float = 1e-9

    def __post_init__(self):
        if not (self.eq_tol > 0 and self.psd_tol > 0):
            raise ValueError("tolerances must be strictly positive")


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class AlgebraSpec:
    dims: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        weights = tuple(float(w) for w in self.weights)
        if not dims:
            raise ValueError("an algebra needs at least one block")
        if len(dims) != len(weights):
            raise ValueError("dims and weights must have the same length")
        if any(d < 1 for d in dims):
            raise ValueError(f"block dimensions must be >= 1, got {dims}")
        if any(not (np.isfinite(w) and w > 0) for w in weights):
            raise ValueError(f"block weights must be finite and > 0, got {weights}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "weights", weights)

    # -- constructors -----------------------------------------------------
    @classmethod
    def factor(cls, d: int, normalized: bool = False) -> "AlgebraSpec":
        return cls((d,), (1.0 / d if normalized else 1.0,))

    @classmethod
    def commutative(cls, n: int, weights: Sequence[float] | None = None) -> "AlgebraSpec":
        if weights is None:
            weights = [1.0] * n
        return cls((1,) * n, tuple(weights))

    @classmethod
    def from_blocks(cls, blocks: Iterable) -> "AlgebraSpec":
        dims, weights = [], []
        for b in blocks:
            if isinstance(b, dict):
                dims.append(b["dim"])
                weights.append(b.get("weight", 1.0))
            else:
                d, w = b
                dims.append(d)
                weights.append(w)
        return cls(tuple(dims), tuple(weights))

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"blocks": [{"dim": d, "weight": w} for d, w in zip(self.dims, self.weights)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "AlgebraSpec":
        return cls.from_blocks(data["blocks"])

    @classmethod
    def from_json(cls, text: str) -> "AlgebraSpec":
        return cls.from_dict(json.loads(text))

    # -- geometry ---------------------------------------------------------
    @property
    def n_blocks(self) -> int:
        return len(self.dims)

    @property
    def D(self) -> int:
        """Real-free dimension of the algebra, ``sum d_i**2``."""
        return sum(d * d for d in self.dims)

    @property
    def tau_one(self) -> float:
        return float(sum(w * d for d, w in zip(self.dims, self.weights)))

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for d in self.dims:
            out.append(acc)
            acc += d * d
        out.append(acc)
        return tuple(out)

    def vector_weights(self) -> np.ndarray:
        """Weight of each coordinate of :meth:`Element.vec`; ``tau(y* x) = sum w conj(y) x``."""
        return np.concatenate([np.full(d * d, w) for d, w in zip(self.dims, self.weights)])

    def transpose_permutation(self) -> np.ndarray:
        """Index map sending vec(x) to vec(x^T) blockwise."""
        perm = []
        for d, off in zip(self.dims, self.offsets):
            idx = np.arange(d * d).reshape(d, d).T.ravel()
            perm.append(off + idx)
        return np.concatenate(perm)

    # -- element factories ------------------------------------------------
    def zeros(self) -> "Element":
        return Element(self, [np.zeros((d, d), complex) for d in self.dims], validate=False)

    def identity(self) -> "Element":
        return Element(self, [np.eye(d, dtype=complex) for d in self.dims], validate=False)

    def scalar(self, c: complex) -> "Element":
        return Element(self, [c * np.eye(d, dtype=complex) for d in self.dims], validate=False)

    def unvec(self, v: np.ndarray) -> "Element":
        v = np.asarray(v, dtype=complex)
        if v.shape != (self.D,):
            raise ValueError(f"expected vector of length {self.D}, got shape {v.shape}")
        offs = self.offsets
        return Element(
            self,
            [v[offs[i]:offs[i + 1]].reshape(d, d) for i, d in enumerate(self.dims)],
            validate=False,
        )

    def basis(self) -> list["Element"]:
        """Matrix units of every block, in :meth:`Element.vec` order."""
        eye = np.eye(self.D, dtype=complex)
        return [self.unvec(eye[j]) for j in range(self.D)]

    def random_element(self, rng: np.random.Generator, kind: str = "general") -> "Element":
        """Gaussian random element; ``kind`` is general, hermitian, positive or unitary."""
        blocks = []
        for d in self.dims:
            g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            if kind == "general":
                b = g
            elif kind == "hermitian":
                b = (g + g.conj().T) / 2
            elif kind == "positive":
                b = g @ g.conj().T
            elif kind == "unitary":
                q, r = np.linalg.qr(g)
                b = q * (np.diag(r) / np.abs(np.diag(r)))
            else:
                raise ValueError(f"unknown element kind {kind!r}")
            blocks.append(b)
        return Element(self, blocks, validate=False)


class Element:
    """One complex matrix per block of an :class:`AlgebraSpec`.

    Elements are immutable: the block arrays are stored read-only and every
    operation returns a new element.
    """

    __slots__ = ("spec", "blocks", "_cache")

    def __init__(self, spec: AlgebraSpec, blocks: Sequence, *, validate: bool = True):
        blocks = [np.array(b, dtype=complex) for b in blocks]
        if validate:
            if len(blocks) != spec.n_blocks:
                raise ValueError(f"expected {spec.n_blocks} blocks, got {len(blocks)}")
            for b, d in zip(blocks, spec.dims):
                if b.shape != (d, d):
                    raise ValueError(f"block shape {b.shape} does not match dim {d}")
                if not np.all(np.isfinite(b)):
                    raise ValueError("element entries must be finite")
        for b in blocks:
            b.setflags(write=False)
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "blocks", tuple(blocks))

    def __setattr__(self, name, value):
        raise AttributeError("Element is immutable")

    def __repr__(self):
        return f"Element(dims={self.spec.dims}, blocks={[b.tolist() for b in self.blocks]})"

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Element"):
        if not isinstance(other, Element):
            return NotImplemented
        if other.spec != self.spec:
            raise ValueError("elements live in different algebras")
        return None

    def _zip(self, other, op) -> "Element":
        bad = self._check(other)
        if bad is NotImplemented:
            return NotImplemented
        return Element(self.spec, [op(a, b) for a, b in zip(self.blocks, other.blocks)], validate=False)

    def __add__(self, other):
        return self._zip(other, np.add)

    def __sub__(self, other):
        return self._zip(other, np.subtract)

    def __matmul__(self, other):
        return self._zip(other, np.matmul)

    def __neg__(self):
        return Element(self.spec, [-b for b in self.blocks], validate=False)

    def __mul__(self, c):
        if isinstance(c, Element):
            return NotImplemented
        return Element(self.spec, [c * b for b in self.blocks], validate=False)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Element(self.spec, [b / c for b in self.blocks], validate=False)

    @property
    def H(self) -> "Element":
        return Element(self.spec, [b.conj().T for b in self.blocks], validate=False)

    def adjoint(self) -> "Element":
        return self.H

    def real_part(self) -> "Element":
        return Element(self.spec, [(b + b.conj().T) / 2 for b in self.blocks], validate=False)

    def vec(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks])

    # -- predicates -------------------------------------------------------
    def max_abs(self) -> float:
        return max(float(np.abs(b).max()) for b in self.blocks)

    def allclose(self, other: "Element", tol: float = DEFAULT_TOL.eq_tol) -> bool:
        return p_norm(self - other, np.inf) <= tol

    def is_selfadjoint(self, tol: float = DEFAULT_TOL.eq_tol) -> bool:
        return p_norm(self - self.H, np.inf) <= tol

    def is_positive(self, tol: float = DEFAULT_TOL.psd_tol) -> bool:
        return self.is_selfadjoint(max(tol, DEFAULT_TOL.eq_tol)) and min_eigenvalue(self) >= -tol

    def is_projection(self, tol: float = DEFAULT_TOL.eq_tol) -> bool:
        return self.is_selfadjoint(tol) and p_norm(self @ self - self, np.inf) <= tol

    # -- serialization ----------------------------------------------------
    def to_list(self) -> list:
        """Nested ``[re, im]`` pairs, one matrix per block."""
        return [[[[float(z.real), float(z.imag)] for z in row] for row in b] for b in self.blocks]

    @classmethod
    def from_list(cls, spec: AlgebraSpec, data: list) -> "Element":
        blocks = []
        for b in data:
            arr = np.asarray(b, dtype=float)
            blocks.append(arr[..., 0] + 1j * arr[..., 1])
        return cls(spec, blocks)

    def to_json(self) -> str:
        return json.dumps({"spec": self.spec.to_dict(), "blocks": self.to_list()})

    @classmethod
    def from_json(cls, text: str) -> "Element":
        data = json.loads(text)
        return cls.from_list(AlgebraSpec.from_dict(data["spec"]), data["blocks"])


class ElementStack:
    """A finite sequence of elements of one algebra, stored blockwise.

    ``stack.blocks[i]`` has shape ``(n, d_i, d_i)``.
    """

    __slots__ = ("spec", "blocks", "_cache")

    def __init__(self, spec: AlgebraSpec, blocks: Sequence[np.ndarray]):
        blocks = [np.asarray(b, dtype=complex) for b in blocks]
        n = {b.shape[0] for b in blocks}
        if len(blocks) != spec.n_blocks or len(n) != 1:
            raise ValueError("inconsistent stack blocks")
        for b, d in zip(blocks, spec.dims):
            if b.shape[1:] != (d, d):
                raise ValueError(f"block shape {b.shape[1:]} does not match dim {d}")
        blocks = [b.view() for b in blocks]
        for b in blocks:
            b.setflags(write=False)  # spectra are cached, so members must not change
        self.spec = spec
        self.blocks = tuple(blocks)
        self._cache = {}

    @classmethod
    def from_elements(cls, elements: Sequence[Element], spec: AlgebraSpec | None = None) -> "ElementStack":
        elements = list(elements)
        if spec is None:
            if not elements:
                raise ValueError("cannot infer algebra of an empty sequence")
            spec = elements[0].spec
        for e in elements:
            if e.spec != spec:
                raise ValueError("elements live in different algebras")
        if not elements:
            return cls(spec, [np.zeros((0, d, d), complex) for d in spec.dims])
        return cls(spec, [np.stack([e.blocks[i] for e in elements]) for i in range(spec.n_blocks)])

    @classmethod
    def from_vectors(cls, spec: AlgebraSpec, V: np.ndarray) -> "ElementStack":
        V = np.asarray(V, dtype=complex)
        if V.ndim != 2 or V.shape[1] != spec.D:
            raise ValueError(f"expected array of shape (n, {spec.D}), got {V.shape}")
        offs = spec.offsets
        return cls(
            spec,
            [V[:, offs[i]:offs[i + 1]].reshape(-1, d, d) for i, d in enumerate(spec.dims)],
        )

    @classmethod
    def coerce(cls, us, spec: AlgebraSpec | None = None) -> "ElementStack":
        if isinstance(us, ElementStack):
            return us
        if isinstance(us, np.ndarray):
            if spec is None:
                raise ValueError("a spec is needed to interpret vectorized elements")
            return cls.from_vectors(spec, us)
        return cls.from_elements(us, spec)

    def __len__(self) -> int:
        return self.blocks[0].shape[0]

    def __getitem__(self, k):
        if isinstance(k, slice):
            return ElementStack(self.spec, [b[k] for b in self.blocks])
        return Element(self.spec, [b[k] for b in self.blocks], validate=False)

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def shifted(self, c: Element, sign: float = 1.0) -> "ElementStack":
        """The stack ``c + sign * u_n``."""
        return ElementStack(self.spec, [cb[None] + sign * b for cb, b in zip(c.blocks, self.blocks)])

    def sandwich(self, e: Element) -> "ElementStack":
        return ElementStack(self.spec, [eb[None] @ b @ eb[None] for eb, b in zip(e.blocks, self.blocks)])

    def take(self, index) -> "ElementStack":
        """Sub-stack selected by an integer or boolean index array."""
        return ElementStack(self.spec, [b[index] for b in self.blocks])

    def eigvalsh(self) -> list[np.ndarray]:
        """Ascending eigenvalues of each symmetrized member, per block (cached)."""
        if "eig" not in self._cache:
            self._cache["eig"] = [np.linalg.eigvalsh((b + np.conj(np.swapaxes(b, 1, 2))) / 2) for b in self.blocks]
        return self._cache["eig"]

    def min_eigenvalues(self) -> np.ndarray:
        """Smallest eigenvalue of each (symmetrized) member, over all blocks."""
        return np.min(np.stack([ev[:, 0] for ev in self.eigvalsh()]), axis=0)

    def sa_defects(self) -> np.ndarray:
        return np.max(
            np.stack([np.abs(b - np.conj(np.swapaxes(b, 1, 2))).max(axis=(1, 2)) for b in self.blocks]),
            axis=0,
        )

    def inf_norms(self) -> np.ndarray:
        if "inf" not in self._cache:
            if len(self) == 0:
                self._cache["inf"] = np.zeros(0)
            else:
                self._cache["inf"] = np.max(np.stack([np.linalg.norm(b, ord=2, axis=(1, 2)) for b in self.blocks]), axis=0)
        return self._cache["inf"]

    def sa_inf_norms(self) -> np.ndarray:
        """Operator norms of the symmetrized members, read off the cached spectra."""
        if len(self) == 0:
            return np.zeros(0)
        return np.max(np.stack([np.maximum(-ev[:, 0], ev[:, -1]) for ev in self.eigvalsh()]), axis=0)

    def p_norms(self, p: float) -> np.ndarray:
        if np.isinf(p):
            return self.inf_norms()
        acc = np.zeros(len(self))
        for b, w in zip(self.blocks, self.spec.weights):
            s = np.linalg.svd(b, compute_uv=False)
            acc += w * np.sum(s ** p, axis=1)
        return acc ** (1.0 / p)


# ---------------------------------------------------------------------------
# functions on elements


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    return p


def trace(x: Element) -> complex:
    return complex(sum(w * np.trace(b) for w, b in zip(x.spec.weights, x.blocks)))


def p_norm(x: Element, p: float = 2.0) -> float:
    """Weighted Schatten norm ``tau(|x|^p)^(1/p)``; ``p = inf`` is the operator norm."""
    p = _check_p(p)
    svals = [np.linalg.svd(b, compute_uv=False) for b in x.blocks]
    if np.isinf(p):
        return float(max(s.max() for s in svals))
    total = sum(w * np.sum(s ** p) for w, s in zip(x.spec.weights, svals))
    return float(total ** (1.0 / p))


def holder_defect(x: Element, y: Element, p: float, q: float, r: float | None = None) -> float:
    """``||xy||_r - ||x||_p ||y||_q``, which Holder's inequality makes <= 0."""
    p, q = _check_p(p), _check_p(q)
    r_expected = 1.0 / (1.0 / p + 1.0 / q) if (1.0 / p + 1.0 / q) > 0 else np.inf
    if r is None:
        r = r_expected
    r = float(r)
    inv_r = 0.0 if np.isinf(r) else 1.0 / r
    if not np.isclose(inv_r, 1.0 / p + 1.0 / q, rtol=0, atol=1e-12):
        raise ValueError(f"exponents must satisfy 1/r = 1/p + 1/q, got p={p}, q={q}, r={r}")
    if r < 1:
        raise ValueError("r must be >= 1")
    return p_norm(x @ y, r) - p_norm(x, p) * p_norm(y, q)


def _eigh_blocks(x: Element, tol: Tolerance = DEFAULT_TOL):
    if not x.is_selfadjoint(tol.eq_tol * max(1.0, x.max_abs())):
        raise ValueError("element is not self-adjoint")
    return [np.linalg.eigh((b + b.conj().T) / 2) for b in x.blocks]


def hermitian_function(x: Element, f: Callable[[np.ndarray], np.ndarray], tol: Tolerance = DEFAULT_TOL) -> Element:
    """Apply ``f`` to the spectrum of a self-adjoint element."""
    out = []
    for vals, vecs in _eigh_blocks(x, tol):
        out.append((vecs * f(vals)) @ vecs.conj().T)
    return Element(x.spec, out, validate=False)


def min_eigenvalue(x: Element) -> float:
    return float(min(np.linalg.eigvalsh((b + b.conj().T) / 2)[0] for b in x.blocks))


def abs_parts(x: Element, tol: Tolerance = DEFAULT_TOL) -> tuple[Element, Element, Element]:
    """Return ``(|x|, x_+, x_-)`` for self-adjoint ``x``."""
    plus, minus = [], []
    for vals, vecs in _eigh_blocks(x, tol):
        plus.append((vecs * np.maximum(vals, 0.0)) @ vecs.conj().T)
        minus.append((vecs * np.maximum(-vals, 0.0)) @ vecs.conj().T)
    xp = Element(x.spec, plus, validate=False)
    xm = Element(x.spec, minus, validate=False)
    return xp + xm, xp, xm


def spectral_projection_below(c: Element, lam: float, tol: Tolerance = DEFAULT_TOL) -> Element:
    """Spectral projection of positive ``c`` onto eigenvalues ``<= lam``.

    Eigenvalues within ``psd_tol`` above ``lam`` count as below, so the result
    is reproducible when ``lam`` is itself an eigenvalue.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if not c.is_positive(tol.psd_tol * max(1.0, c.max_abs())):
        raise ValueError("c must be positive")
    blocks = []
    for vals, vecs in _eigh_blocks(c, tol):
        keep = vals <= lam + tol.psd_tol
        if keep.all():
            blocks.append(np.eye(vals.size, dtype=complex))
            continue
        v = vecs[:, keep]
        blocks.append(v @ v.conj().T)
    return Element(c.spec, blocks, validate=False)


def order_leq(x: Element, y: Element, tol: Tolerance = DEFAULT_TOL) -> bool:
    """``x <= y`` in the operator order, up to ``psd_tol``."""
    if x.spec != y.spec:
        raise ValueError("elements live in different algebras")
    return min_eigenvalue(y - x) >= -tol.psd_tol
