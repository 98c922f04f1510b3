"""Seeded operator/element fixtures shared by the experiment runner and the tests."""
from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .algebra import AlgebraSpec, Element
from .operators import (
    BlockPermutation,
    DiagonalExpectation,
    DSOperator,
    Layer,
    SubalgebraExpectation,
    UnitaryConjugation,
    conjugation_operator,
    random_unitary,
    random_unitary_mixture,
)

__all__ = ["convergence_case", "unitary_mixture_suite", "operator_zoo", "default_spec"]


def default_spec(d: int = 4) -> AlgebraSpec:
    """One ``d x d`` block with the unnormalized trace."""
    return AlgebraSpec.factor(d)


def convergence_case(seed: int = 0, spec: AlgebraSpec | None = None, n_terms: int = 2) -> tuple[DSOperator, Element]:
    """Equal mixture of ``n_terms`` Haar unitary conjugations and a random Hermitian ``x``.

    Both are drawn from ``default_rng(seed)``.  The fixed space of such a
    mixture is generically the center, so ``Q_T x`` is the blockwise
    normalized trace of ``x``.
    """
    spec = default_spec() if spec is None else spec
    rng = np.random.default_rng(seed)
    T = random_unitary_mixture(spec, n_terms, rng)
    x = spec.random_element(rng, "hermitian")
    return T, x


def unitary_mixture_suite(
    dims: Sequence[int] = (2, 3, 4, 5, 6), n_terms: Sequence[int] = (2, 3), seeds: Sequence[int] = (0, 1, 2)
) -> Iterator[tuple[str, DSOperator, Element]]:
    """``(label, T, x)`` over single-block algebras of the given sizes."""
    for d in dims:
        for k in n_terms:
            for s in seeds:
                T, x = convergence_case(1000 * d + 100 * k + s, default_spec(d), k)
                yield f"d={d},terms={k},seed={s}", T, x


def operator_zoo(seed: int = 0) -> Iterator[tuple[str, DSOperator]]:
    """One operator per grammar feature, on single- and multi-block algebras."""
    rng = np.random.default_rng(seed)
    two = AlgebraSpec((3, 3), (0.5, 0.5))
    mixed = AlgebraSpec((2, 3, 2), (1.0, 0.25, 1.0))
    yield "conjugation", conjugation_operator(default_spec(4), [random_unitary(4, rng)])
    yield "mixture", random_unitary_mixture(default_spec(3), 3, rng)
    yield "diagonal", DSOperator(mixed, [Layer(((1.0, DiagonalExpectation()),))])
    halves = (np.diag([1.0, 1.0, 0.0, 0.0]), np.diag([0.0, 0.0, 1.0, 1.0]))
    yield "pinching", DSOperator(default_spec(4), [Layer(((1.0, SubalgebraExpectation((halves,))),))])
    yield "swap", DSOperator(two, [Layer(((1.0, BlockPermutation((1, 0))),))])
    perm_conj = [
        Layer(((1.0, UnitaryConjugation(tuple(random_unitary(d, rng) for d in mixed.dims))),)),
        Layer(((0.5, BlockPermutation((2, 1, 0))), (0.5, DiagonalExpectation()))),
    ]
    yield "composite", DSOperator(mixed, perm_conj)
    yield "mixed-conjugation", random_unitary_mixture(two, 2, rng, weights=(0.3, 0.7))
