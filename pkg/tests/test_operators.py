import numpy as np
import pytest

from ncergodic.algebra import AlgebraSpec, Element, min_eigenvalue, p_norm, trace
from ncergodic.operators import (
    BlockPermutation,
    DiagonalExpectation,
    DSOperator,
    Layer,
    SeparatingOp,
    UnitaryConjugation,
    cesaro_average,
    circle_grid_max,
    circle_grid_size,
    conjugation_operator,
    disjointness_violation,
    ergodic_projection,
    identity_operator,
    random_unitary,
    random_unitary_mixture,
    separating_check,
    transference_defect,
)
from ncergodic.suites import operator_zoo

PHASE = np.diag([1.0, 1j])
ZOO = list(operator_zoo(0))


def el(spec, *blocks):
    return Element(spec, [np.asarray(b, dtype=complex) for b in blocks])


def diagonal_op(spec):
    return DSOperator(spec, [Layer(((1.0, DiagonalExpectation()),))])


# -- apply ---------------------------------------------------------------


def test_identity_layer(mixed_spec, rng):
    x = mixed_spec.random_element(rng)
    assert identity_operator(mixed_spec).apply(x).allclose(x, 0.0)


def test_diagonal_expectation_pinches(m2):
    out = diagonal_op(m2).apply(el(m2, [[1, 2], [3, 4]]))
    assert out.allclose(el(m2, np.diag([1, 4])), 0.0)


def test_half_flip_mixture_kills_offdiagonal(m2):
    flip = UnitaryConjugation((np.diag([1.0, -1.0]),))
    T = DSOperator(m2, [Layer(((0.5, identity_operator(m2).layers[0].terms[0][1]), (0.5, flip)))])
    assert p_norm(T.apply(el(m2, [[0, 1], [1, 0]])), np.inf) < 1e-15


def test_block_permutation_moves_blocks():
    spec = AlgebraSpec((1, 1), (1.0, 1.0))
    T = DSOperator(spec, [Layer(((1.0, BlockPermutation((1, 0))),))])
    assert T.apply(el(spec, [[2]], [[5]])).allclose(el(spec, [[5]], [[2]]), 0.0)


def test_operator_rejects_invalid_primitives(m2):
    with pytest.raises(ValueError):
        conjugation_operator(m2, [np.array([[1, 1], [0, 1]])])
    with pytest.raises(ValueError):
        DSOperator(AlgebraSpec((1, 2), (1.0, 1.0)), [Layer(((1.0, BlockPermutation((1, 0))),))])
    with pytest.raises(ValueError):
        Layer(((0.5, DiagonalExpectation()),))


def test_apply_rejects_foreign_element(m2):
    with pytest.raises(ValueError):
        identity_operator(m2).apply(AlgebraSpec.factor(3).identity())


def test_json_round_trip_preserves_action(rng):
    for _, T in ZOO:
        S = DSOperator.from_json(T.spec, T.to_json()).superop().matrix
        assert np.allclose(S, T.superop().matrix, atol=1e-14)
        assert DSOperator.from_json(T.spec, T.to_json()).hash() == T.hash()


# -- superoperator -------------------------------------------------------


def test_superop_of_identity(mixed_spec):
    assert np.array_equal(identity_operator(mixed_spec).superop().matrix, np.eye(mixed_spec.D))


def test_diagonal_superop_is_rank_two_idempotent(m2):
    S = diagonal_op(m2).superop().matrix
    assert np.linalg.matrix_rank(S) == 2
    assert np.allclose(S @ S, S)


@pytest.mark.parametrize("name,T", ZOO)
def test_superop_matches_apply(name, T, rng):
    S = T.superop()
    for _ in range(20):
        x = T.spec.random_element(rng)
        assert (S.apply(x) - T.apply(x)).max_abs() <= 1e-10


# -- Dunford-Schwartz hypotheses -------------------------------------------


@pytest.mark.parametrize("name,T", ZOO)
def test_contractive_unital_trace_preserving(name, T, rng):
    spec = T.spec
    assert T.apply(spec.identity()).allclose(spec.identity(), 1e-10)
    for _ in range(100):
        x = spec.random_element(rng)
        y = T.apply(x)
        for p in (1.0, 1.5, 2.0, 3.0, np.inf):
            assert p_norm(y, p) <= p_norm(x, p) + 1e-10
        assert abs(trace(y) - trace(x)) <= 1e-10 * max(1.0, p_norm(x, 1))


@pytest.mark.parametrize("name,T", ZOO)
def test_positivity_preserving(name, T, rng):
    for _ in range(20):
        x = T.spec.random_element(rng, "positive")
        assert min_eigenvalue(T.apply(x)) >= -1e-9


# -- ergodic projection ----------------------------------------------------


def test_projection_of_identity_is_identity(mixed_spec):
    Q = ergodic_projection(identity_operator(mixed_spec))
    assert np.allclose(Q.matrix, np.eye(mixed_spec.D))


def test_projection_of_idempotent_is_itself(mixed_spec):
    T = diagonal_op(mixed_spec)
    assert np.allclose(ergodic_projection(T).matrix, T.superop().matrix, atol=1e-12)


def test_projection_of_phase_conjugation_is_pinching(m2, rng):
    T = conjugation_operator(m2, [PHASE])
    Q = ergodic_projection(T)
    assert np.allclose(Q.matrix, diagonal_op(m2).superop().matrix, atol=1e-12)
    x = m2.random_element(rng)
    assert (cesaro_average(T, x, 100_000) - Q.apply(x)).max_abs() <= 1e-3


@pytest.mark.parametrize("name,T", ZOO)
def test_projection_invariants(name, T, rng):
    Q = ergodic_projection(T)
    assert Q.idempotence_defect() <= 1e-10
    assert Q.commutation_defect(T) <= 1e-10
    for _ in range(10):
        x = T.spec.random_element(rng)
        qx = Q.apply(x)
        assert p_norm(T.apply(qx) - qx, 2) <= 1e-9 * p_norm(x, 2)
        assert Q.range_residual(T, x) <= 1e-8


def test_unitary_mixture_fixes_only_the_center(rng):
    spec = AlgebraSpec.factor(4)
    T = random_unitary_mixture(spec, 2, rng)
    x = spec.random_element(rng)
    expected = spec.scalar(trace(x) / spec.tau_one)
    assert ergodic_projection(T).apply(x).allclose(expected, 1e-10)


# -- Cesaro averages -------------------------------------------------------


def test_cesaro_first_term(mixed_spec, rng):
    T = ZOO[5][1]
    x = T.spec.random_element(rng)
    assert cesaro_average(T, x, 1).allclose(T.apply(x), 1e-14)


def test_cesaro_of_identity(mixed_spec, rng):
    x = mixed_spec.random_element(rng)
    for N in (1, 7, 100):
        assert cesaro_average(identity_operator(mixed_spec), x, N).allclose(x, 1e-12)


def test_cesaro_phase_closed_form(m2):
    # the off-diagonal entries pick up i^n and -i^n, which sum to zero over n = 1..4
    T = conjugation_operator(m2, [PHASE])
    x = el(m2, np.ones((2, 2)))
    assert cesaro_average(T, x, 4).allclose(el(m2, np.eye(2)), 1e-14)


# -- circle suprema and transference ---------------------------------------


def test_grid_size_resolves_the_degree():
    for degree in (1, 5, 100, 4096):
        M = circle_grid_size(degree)
        assert M >= 4 * np.pi * degree and M & (M - 1) == 0


def test_grid_max_of_monomial():
    assert circle_grid_max([0, 0, 3.0], 16) == pytest.approx(3.0)


def test_transference_monomials(rng):
    V = random_unitary(4, rng)
    assert transference_defect([0, 1], V) <= -1 + 1e-12
    assert transference_defect([0, 0, 1], np.diag([1.0, -1.0])) <= 0


def test_transference_random_polynomials(rng):
    dense = np.exp(2j * np.pi * np.arange(100_000) / 100_000)
    for _ in range(100):
        phi = rng.standard_normal(51) + 1j * rng.standard_normal(51)
        V = random_unitary(6, rng)
        assert transference_defect(phi, V) <= 0
        # the von Neumann inequality against a dense circle sample
        eig = np.linalg.eigvals(V)
        norm = np.abs(np.polyval(phi[::-1], eig)).max()
        assert norm <= np.abs(np.polyval(phi[::-1], dense)).max() + 1e-9


def test_transference_accepts_unitary_operators(rng):
    T = conjugation_operator(AlgebraSpec.factor(3), [random_unitary(3, rng)])
    assert transference_defect(rng.standard_normal(20), T) <= 0


def test_transference_rejects_non_unitary():
    with pytest.raises(ValueError):
        transference_defect([1, 1], np.array([[1, 1], [0, 1]]))


# -- separating maps -------------------------------------------------------


def test_conjugation_keeps_disjoint_diagonals(m2, rng):
    U = random_unitary(2, rng)
    T = conjugation_operator(m2, [U])
    x, y = el(m2, np.diag([1, 0])), el(m2, np.diag([0, 1]))
    assert disjointness_violation(T.apply(x), T.apply(y)) <= 1e-15


def test_block_permutation_preserves_disjointness():
    spec = AlgebraSpec((1, 1), (1.0, 1.0))
    T = SeparatingOp(spec, ((1.0, (1, 0), (np.eye(1), np.eye(1))),))
    assert separating_check(T, trials=20).max_violation == 0.0


def test_separating_check_random_pairs(rng):
    spec = AlgebraSpec((3, 2, 3), (0.5, 1.0, 0.5))
    terms = [
        (0.5, (2, 1, 0), tuple(random_unitary(d, rng) for d in spec.dims)),
        (0.5, None, tuple(random_unitary(d, rng) for d in spec.dims)),
    ]
    T = SeparatingOp(spec, terms, scale=0.9)
    assert separating_check(T, trials=50, rng=rng).max_violation <= 1e-10
    x = spec.random_element(rng)
    assert p_norm(T.apply(x), np.inf) <= p_norm(x, np.inf) + 1e-10
    assert np.allclose(T.superop().apply(x).vec(), T.apply(x).vec())


def test_separating_op_validation(m2):
    with pytest.raises(ValueError):
        SeparatingOp(m2, ((1.0, None, (np.eye(2),)),), scale=1.5)
    with pytest.raises(ValueError):
        SeparatingOp(m2, ((0.4, None, (np.eye(2),)),))
