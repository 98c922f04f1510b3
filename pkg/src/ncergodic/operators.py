"""Positive Dunford-Schwartz operators on a finite tracial algebra.

Operators are built from a small grammar whose members are unital, trace
preserving and positive by construction:

* :class:`UnitaryConjugation` ``x_i -> U_i x_i U_i^*``
* :class:`BlockPermutation` ``(Px)_i = x_{perm[i]}`` between blocks of equal
  dimension and weight
* :class:`DiagonalExpectation` (keep the diagonal of every block)
* :class:`SubalgebraExpectation` (pinching ``x -> sum_k P_k x P_k``)

A :class:`Layer` is a convex mixture of primitives and a :class:`DSOperator`
is a composition of layers, applied first to last.  For linear algebra the
operator is turned into a :class:`SuperOp`, its matrix acting on
:meth:`Element.vec`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .algebra import DEFAULT_TOL, AlgebraSpec, Element, Tolerance, p_norm

__all__ = [
    "UnitaryConjugation",
    "BlockPermutation",
    "DiagonalExpectation",
    "SubalgebraExpectation",
    "Layer",
    "DSOperator",
    "SuperOp",
    "SeparatingOp",
    "SeparatingReport",
    "ErgodicProjection",
    "apply",
    "superop",
    "ergodic_projection",
    "cesaro_average",
    "iterate_orbit",
    "transference_defect",
    "separating_check",
    "identity_operator",
    "conjugation_operator",
    "random_unitary",
    "random_unitary_mixture",
    "circle_grid_size",
    "circle_grid_max",
]


def _matrix_to_pairs(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _pairs_to_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


# ---------------------------------------------------------------------------
# primitives


@dataclass(frozen=True, eq=False)
class UnitaryConjugation:
    unitaries: tuple

    def __post_init__(self):
        object.__setattr__(self, "unitaries", tuple(np.array(u, dtype=complex) for u in self.unitaries))

    def validate(self, spec: AlgebraSpec, tol: Tolerance = DEFAULT_TOL) -> None:
        if len(self.unitaries) != spec.n_blocks:
            raise ValueError("one unitary per block is required")
        for u, d in zip(self.unitaries, spec.dims):
            if u.shape != (d, d):
                raise ValueError(f"unitary of shape {u.shape} does not fit a block of dim {d}")
            if np.abs(u.conj().T @ u - np.eye(d)).max() > tol.eq_tol:
                raise ValueError("matrix is not unitary to eq_tol")

    def apply(self, x: Element) -> Element:
        return Element(x.spec, [u @ b @ u.conj().T for u, b in zip(self.unitaries, x.blocks)], validate=False)

    def to_dict(self) -> dict:
        return {"unitary": [_matrix_to_pairs(u) for u in self.unitaries]}


@dataclass(frozen=True, eq=False)
class BlockPermutation:
    perm: tuple

    def __post_init__(self):
        object.__setattr__(self, "perm", tuple(int(i) for i in self.perm))

    def validate(self, spec: AlgebraSpec, tol: Tolerance = DEFAULT_TOL) -> None:
        if sorted(self.perm) != list(range(spec.n_blocks)):
            raise ValueError(f"{self.perm} is not a permutation of the blocks")
        for i, j in enumerate(self.perm):
            if spec.dims[i] != spec.dims[j] or spec.weights[i] != spec.weights[j]:
                raise ValueError(f"blocks {i} and {j} differ in dimension or weight")

    def apply(self, x: Element) -> Element:
        return Element(x.spec, [x.blocks[j] for j in self.perm], validate=False)

    def to_dict(self) -> dict:
        return {"permutation": list(self.perm)}


@dataclass(frozen=True, eq=False)
class DiagonalExpectation:
    def validate(self, spec: AlgebraSpec, tol: Tolerance = DEFAULT_TOL) -> None:
        return None

    def apply(self, x: Element) -> Element:
        return Element(x.spec, [np.diag(np.diag(b)) for b in x.blocks], validate=False)

    def to_dict(self) -> dict:
        return {"diagonal": {}}


@dataclass(frozen=True, eq=False)
class SubalgebraExpectation:
    """Blockwise pinching by orthogonal projections summing to the identity."""

    projections: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "projections",
            tuple(tuple(np.array(p, dtype=complex) for p in fam) for fam in self.projections),
        )

    def validate(self, spec: AlgebraSpec, tol: Tolerance = DEFAULT_TOL) -> None:
        if len(self.projections) != spec.n_blocks:
            raise ValueError("one projection family per block is required")
        for fam, d in zip(self.projections, spec.dims):
            total = np.zeros((d, d), complex)
            for p in fam:
                if p.shape != (d, d):
                    raise ValueError("projection does not fit its block")
                if np.abs(p - p.conj().T).max() > tol.eq_tol or np.abs(p @ p - p).max() > tol.eq_tol:
                    raise ValueError("pinching family contains a non-projection")
                total += p
            if np.abs(total - np.eye(d)).max() > tol.eq_tol:
                raise ValueError("pinching projections must sum to the identity")

    def apply(self, x: Element) -> Element:
        out = [sum(p @ b @ p for p in fam) for fam, b in zip(self.projections, x.blocks)]
        return Element(x.spec, out, validate=False)

    def to_dict(self) -> dict:
        return {"pinching": [[_matrix_to_pairs(p) for p in fam] for fam in self.projections]}


@dataclass(frozen=True, eq=False)
class _Identity:
    def validate(self, spec, tol=DEFAULT_TOL):
        return None

    def apply(self, x: Element) -> Element:
        return x

    def to_dict(self) -> dict:
        return {"identity": {}}


def _primitive_from_dict(data: dict):
    if len(data) != 1:
        raise ValueError(f"a primitive has exactly one key, got {sorted(data)}")
    (kind, body), = data.items()
    if kind == "unitary":
        return UnitaryConjugation(tuple(_pairs_to_matrix(u) for u in body))
    if kind == "permutation":
        return BlockPermutation(tuple(body))
    if kind == "diagonal":
        return DiagonalExpectation()
    if kind == "pinching":
        return SubalgebraExpectation(tuple(tuple(_pairs_to_matrix(p) for p in fam) for fam in body))
    if kind == "identity":
        return _Identity()
    raise ValueError(f"unknown primitive {kind!r}")


# ---------------------------------------------------------------------------
# layers and operators


@dataclass(frozen=True, eq=False)
class Layer:
    terms: tuple  # of (q, primitive)

    def __post_init__(self):
        terms = tuple((float(q), prim) for q, prim in self.terms)
        if not terms:
            raise ValueError("a mixture layer needs at least one term")
        qs = np.array([q for q, _ in terms])
        if np.any(qs < 0) or abs(qs.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be >= 0 and sum to 1, got {qs.tolist()}")
        object.__setattr__(self, "terms", terms)

    def apply(self, x: Element) -> Element:
        out = None
        for q, prim in self.terms:
            if q == 0.0:
                continue
            y = q * prim.apply(x)
            out = y if out is None else out + y
        return out

    def to_dict(self) -> dict:
        return {"mix": [{"q": q, "prim": prim.to_dict()} for q, prim in self.terms]}


class DSOperator:
    """Composition of mixture layers; ``layers[0]`` acts first."""

    def __init__(self, spec: AlgebraSpec, layers: Sequence[Layer], tol: Tolerance = DEFAULT_TOL):
        self.spec = spec
        self.layers = tuple(layers)
        self.tol = tol
        for layer in self.layers:
            for _, prim in layer.terms:
                prim.validate(spec, tol)
        self._superop = None

    def __repr__(self):
        return f"DSOperator(dims={self.spec.dims}, layers={len(self.layers)}, hash={self.hash()[:12]})"

    def apply(self, x: Element) -> Element:
        if x.spec != self.spec:
            raise ValueError("element lives in a different algebra")
        for layer in self.layers:
            x = layer.apply(x)
        return x

    __call__ = apply

    def superop(self) -> "SuperOp":
        if self._superop is None:
            cols = [self.apply(e).vec() for e in self.spec.basis()]
            self._superop = SuperOp(self.spec, np.column_stack(cols) if cols else np.zeros((0, 0)))
        return self._superop

    def then(self, other: "DSOperator") -> "DSOperator":
        """``other`` applied after ``self``."""
        if other.spec != self.spec:
            raise ValueError("operators act on different algebras")
        return DSOperator(self.spec, self.layers + other.layers, self.tol)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"compose": [layer.to_dict() for layer in self.layers]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, spec: AlgebraSpec, data: dict, tol: Tolerance = DEFAULT_TOL) -> "DSOperator":
        layers = []
        for layer in data["compose"]:
            layers.append(Layer(tuple((t["q"], _primitive_from_dict(t["prim"])) for t in layer["mix"])))
        return cls(spec, layers, tol)

    @classmethod
    def from_json(cls, spec: AlgebraSpec, text: str, tol: Tolerance = DEFAULT_TOL) -> "DSOperator":
        return cls.from_dict(spec, json.loads(text), tol)

    def hash(self) -> str:
        payload = json.dumps({"spec": self.spec.to_dict(), "op": self.to_dict()}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def identity_operator(spec: AlgebraSpec) -> DSOperator:
    return DSOperator(spec, [Layer(((1.0, _Identity()),))])


def conjugation_operator(spec: AlgebraSpec, unitaries: Sequence[np.ndarray]) -> DSOperator:
    return DSOperator(spec, [Layer(((1.0, UnitaryConjugation(tuple(unitaries))),))])


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR with phase correction."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_unitary_mixture(
    spec: AlgebraSpec,
    n_terms: int,
    rng: np.random.Generator,
    weights: Sequence[float] | None = None,
) -> DSOperator:
    """Convex mixture of ``n_terms`` conjugations by Haar unitaries."""
    if weights is None:
        weights = np.full(n_terms, 1.0 / n_terms)
    terms = tuple(
        (q, UnitaryConjugation(tuple(random_unitary(d, rng) for d in spec.dims))) for q in weights
    )
    return DSOperator(spec, [Layer(terms)])


def apply(T, x: Element) -> Element:
    return T.apply(x)


# ---------------------------------------------------------------------------
# matrix representation


@dataclass(frozen=True, eq=False)
class SuperOp:
    """Matrix of a linear map on the algebra, acting on :meth:`Element.vec`."""

    spec: AlgebraSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def apply(self, x: Element) -> Element:
        return self.spec.unvec(self.matrix @ x.vec())

    def hilbert_matrix(self) -> np.ndarray:
        """The same map in an orthonormal basis of ``L^2(tau)``."""
        g = np.sqrt(self.spec.vector_weights())
        return (g[:, None] * self.matrix) / g[None, :]

    def norm_2(self) -> float:
        return float(np.linalg.norm(self.hilbert_matrix(), 2))

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.matrix)))) if self.matrix.size else 0.0

    def trace_dual(self) -> np.ndarray:
        """Matrix of the map ``A^+`` with ``tau(A^+(z) x) = tau(z A(x))``."""
        return _trace_dual(self.spec, self.matrix)


def _trace_dual(spec: AlgebraSpec, A: np.ndarray) -> np.ndarray:
    # tau(z x) = vec(z)^T M vec(x) with M = Pi W; solve (A^+)^T M = M A.
    perm = spec.transpose_permutation()
    w = spec.vector_weights()
    M = np.zeros((spec.D, spec.D))
    M[np.arange(spec.D), perm] = w[perm]
    return np.linalg.solve(M.T, A.T @ M.T)


def superop(T) -> SuperOp:
    return T.superop()


def iterate_orbit(T, x: Element, N: int, chunk: int = 2048) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(n0, V)`` where the rows of ``V`` are ``vec(T^n x)`` for ``n = n0, n0+1, ...``.

    The orbit ``T^1 x, ..., T^N x`` is produced in chunks: the first chunk by
    repeated application, later chunks by one multiplication with ``S^chunk``.
    Memory is ``O(chunk * D)``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    S = T.superop().matrix if hasattr(T, "superop") else np.asarray(T)
    chunk = max(1, min(chunk, N))
    block = np.empty((chunk, S.shape[0]), complex)
    v = x.vec()
    for k in range(chunk):
        v = S @ v
        block[k] = v
    n0 = 1
    yield n0, block[: min(chunk, N)]
    n0 += chunk
    if n0 > N:
        return
    Pt = np.linalg.matrix_power(S, chunk).T
    while n0 <= N:
        block = block @ Pt
        take = min(chunk, N - n0 + 1)
        yield n0, block[:take]
        n0 += chunk


def cesaro_average(T, x: Element, N: int) -> Element:
    """``(1/N) sum_{n=1}^N T^n x`` with a single running power."""
    if N < 1:
        raise ValueError("N must be >= 1")
    S = T.superop().matrix
    v = x.vec()
    acc = np.zeros_like(v)
    for _ in range(N):
        v = S @ v
        acc += v
    return x.spec.unvec(acc / N)


# ---------------------------------------------------------------------------
# ergodic projection


@dataclass(frozen=True, eq=False)
class ErgodicProjection:
    """Projection onto ``ker(I - T)`` along ``ran(I - T)``."""

    spec: AlgebraSpec
    matrix: np.ndarray
    fixed_basis: np.ndarray
    range_basis: np.ndarray

    @property
    def superop(self) -> SuperOp:
        return SuperOp(self.spec, self.matrix)

    def apply(self, x: Element) -> Element:
        return self.spec.unvec(self.matrix @ x.vec())

    __call__ = apply

    @property
    def rank(self) -> int:
        return self.fixed_basis.shape[1]

    def idempotence_defect(self) -> float:
        return float(np.abs(self.matrix @ self.matrix - self.matrix).max())

    def commutation_defect(self, T) -> float:
        S = T.superop().matrix
        Q = self.matrix
        return float(max(np.abs(Q @ S - Q).max(), np.abs(S @ Q - Q).max()))

    def range_residual(self, T, x: Element) -> float:
        """Least-squares residual of ``(I - T) y = x - Qx``, relative to ``||x||_2``."""
        S = T.superop().matrix
        rhs = x.vec() - self.matrix @ x.vec()
        A = np.eye(S.shape[0]) - S
        y, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        scale = max(np.linalg.norm(x.vec()), 1e-300)
        return float(np.linalg.norm(A @ y - rhs) / scale)


def ergodic_projection(T, rtol: float = 1e-9) -> ErgodicProjection:
    """Mean ergodic projection of a power-bounded operator by subspace decomposition.

    The kernel and the range of ``I - S`` are read off one SVD.  Singular values
    below ``rtol * max(1, s_max)`` are treated as zero.
    """
    S = T.superop().matrix
    D = S.shape[0]
    A = np.eye(D) - S
    U, s, Vh = np.linalg.svd(A)
    cut = rtol * max(1.0, s[0] if s.size else 1.0)
    r = int(np.sum(s > cut))
    K = Vh[r:].conj().T
    R = U[:, :r]
    B = np.hstack([K, R])
    cond = np.linalg.cond(B) if B.size else 1.0
    if not np.isfinite(cond) or cond > 1e10:
        raise np.linalg.LinAlgError(
            "kernel and range of I - T do not span the space; T is not power-bounded"
        )
    Binv = np.linalg.inv(B)
    k = K.shape[1]
    Q = B[:, :k] @ Binv[:k, :]
    return ErgodicProjection(T.spec, Q, K, R)


# ---------------------------------------------------------------------------
# circle suprema and transference


def circle_grid_size(degree: int) -> int:
    """Grid size whose arc spacing is at most ``1/(2*degree)`` with margin.

    The smallest power of two that is at least ``max(16 * degree, ceil(4*pi*degree))``.
    """
    need = max(16 * degree, int(np.ceil(4 * np.pi * degree)), 16)
    return 1 << int(np.ceil(np.log2(need)))


def circle_grid_max(coeffs: np.ndarray, grid_size: int) -> float:
    """``max_j |sum_n c_n xi_j^n|`` over the ``grid_size``-th roots of unity.

    ``coeffs[n]`` multiplies ``xi^n``, starting at ``n = 0``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.size > grid_size:
        raise ValueError("grid is coarser than the polynomial degree")
    vals = np.fft.ifft(coeffs, n=grid_size) * grid_size
    return float(np.abs(vals).max())


def transference_defect(phi: Sequence[complex], V, grid_size: int | None = None) -> float:
    """``||phi(V)||_{2->2} - 2 max_grid |phi|`` for a unitary ``V``.

    ``phi[k]`` is the coefficient of ``z^k``.  ``V`` is a unitary matrix, or an
    operator whose superoperator is unitary on ``L^2(tau)``.  The grid is
    chosen by :func:`circle_grid_size` unless given.  A non-positive value
    means the norm of ``phi(V)`` is dominated by the circle supremum.
    """
    phi = np.asarray(phi, dtype=complex)
    if phi.size == 0:
        raise ValueError("phi must have at least one coefficient")
    if hasattr(V, "superop"):
        V = V.superop().hilbert_matrix()
    V = np.asarray(V, dtype=complex)
    d = V.shape[0]
    if np.abs(V.conj().T @ V - np.eye(d)).max() > 1e-10:
        raise ValueError("V must be unitary")
    degree = max(phi.size - 1, 1)
    M = circle_grid_size(degree) if grid_size is None else int(grid_size)
    # Horner evaluation of phi(V)
    out = np.zeros((d, d), complex)
    for c in phi[::-1]:
        out = out @ V + c * np.eye(d)
    return float(np.linalg.norm(out, 2) - 2.0 * circle_grid_max(phi, M))


# ---------------------------------------------------------------------------
# separating contractions


@dataclass(frozen=True, eq=False)
class SeparatingOp:
    """Convex mixture of ``BlockPermutation o UnitaryConjugation`` maps, times ``scale``."""

    spec: AlgebraSpec
    terms: tuple  # of (q, perm, unitaries)
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.scale <= 1.0:
            raise ValueError("scale must lie in (0, 1]")
        terms = []
        for q, perm, unitaries in self.terms:
            perm = BlockPermutation(tuple(perm) if perm is not None else tuple(range(self.spec.n_blocks)))
            conj = UnitaryConjugation(tuple(unitaries))
            perm.validate(self.spec)
            conj.validate(self.spec)
            terms.append((float(q), perm, conj))
        qs = np.array([t[0] for t in terms])
        if not terms or np.any(qs < 0) or abs(qs.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be >= 0 and sum to 1")
        object.__setattr__(self, "terms", tuple(terms))

    def summands(self) -> list[tuple[float, DSOperator]]:
        return [
            (q, DSOperator(self.spec, [Layer(((1.0, conj),)), Layer(((1.0, perm),))]))
            for q, perm, conj in self.terms
        ]

    def apply(self, x: Element) -> Element:
        out = self.spec.zeros()
        for q, op in self.summands():
            out = out + q * op.apply(x)
        return self.scale * out

    __call__ = apply

    def superop(self) -> SuperOp:
        M = sum(q * op.superop().matrix for q, op in self.summands())
        return SuperOp(self.spec, self.scale * M)


@dataclass
class SeparatingReport:
    trials: int
    per_summand: list = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        return max(self.per_summand, default=0.0)


def _random_disjoint_pair(spec: AlgebraSpec, rng: np.random.Generator) -> tuple[Element, Element]:
    """``x = P a R`` and ``y = Q b R'`` with ``PQ = 0`` and ``RR' = 0``.

    The projections are spectral projections of random Hermitian matrices.
    """
    xs, ys = [], []
    for d in spec.dims:
        def split():
            h = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            _, vecs = np.linalg.eigh(h + h.conj().T)
            k = rng.integers(0, d + 1)
            return vecs[:, :k] @ vecs[:, :k].conj().T, vecs[:, k:] @ vecs[:, k:].conj().T
        P, Q = split()
        R, R2 = split()
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        b = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        xs.append(P @ a @ R)
        ys.append(Q @ b @ R2)
    return Element(spec, xs, validate=False), Element(spec, ys, validate=False)


def disjointness_violation(x: Element, y: Element) -> float:
    return max(p_norm(x.H @ y, np.inf), p_norm(x @ y.H, np.inf))


def separating_check(T: SeparatingOp, trials: int = 50, rng: np.random.Generator | None = None) -> SeparatingReport:
    """Check that every summand of ``T`` maps random disjoint pairs to disjoint pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    report = SeparatingReport(trials=trials)
    for _, op in T.summands():
        worst = 0.0
        for _ in range(trials):
            x, y = _random_disjoint_pair(T.spec, rng)
            scale = max(1.0, p_norm(x, np.inf) * p_norm(y, np.inf))
            worst = max(worst, disjointness_violation(op.apply(x), op.apply(y)) / scale)
        report.per_summand.append(worst)
    return report
