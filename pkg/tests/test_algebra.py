import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncergodic.algebra import (
    AlgebraSpec,
    Element,
    ElementStack,
    abs_parts,
    holder_defect,
    order_leq,
    p_norm,
    spectral_projection_below,
    trace,
)


def el(spec, *blocks):
    return Element(spec, [np.asarray(b, dtype=complex) for b in blocks])


# -- trace ---------------------------------------------------------------


def test_trace_identity_2x2(m2):
    assert trace(m2.identity()) == 2


def test_trace_diagonal(m2):
    assert trace(el(m2, np.diag([3, 4]))) == 7


def test_trace_weighted_blocks():
    spec = AlgebraSpec((1, 1), (2.0, 3.0))
    assert trace(el(spec, [[5]], [[1]])) == 13


def test_trace_is_linear_and_tracial(mixed_spec, rng):
    x, y = mixed_spec.random_element(rng), mixed_spec.random_element(rng)
    assert abs(trace(x + 2 * y) - trace(x) - 2 * trace(y)) < 1e-12
    assert abs(trace(x @ y) - trace(y @ x)) < 1e-10


# -- p_norm --------------------------------------------------------------


@pytest.mark.parametrize("p", [1, 1.5, 2, 3, np.inf])
def test_p_norm_of_zero(mixed_spec, p):
    assert p_norm(mixed_spec.zeros(), p) == 0.0


def test_p_norm_diag_p2(m2):
    assert p_norm(el(m2, np.diag([3, 4])), 2) == pytest.approx(5.0, abs=1e-14)


def test_p_norm_normalized_trace_p1():
    spec = AlgebraSpec.factor(2, normalized=True)
    assert p_norm(el(spec, np.diag([3, 4])), 1) == pytest.approx(3.5, abs=1e-14)


def test_p_norm_matches_singular_value_oracle(mixed_spec, rng):
    x = mixed_spec.random_element(rng)
    for p in (1.0, 1.7, 4.0):
        oracle = sum(w * np.sum(np.linalg.svd(b, compute_uv=False) ** p) for w, b in zip(mixed_spec.weights, x.blocks))
        assert p_norm(x, p) == pytest.approx(oracle ** (1 / p), rel=1e-12)
    assert p_norm(x, np.inf) == pytest.approx(max(np.linalg.norm(b, 2) for b in x.blocks), rel=1e-12)


def test_p_norm_rejects_p_below_one(m2):
    with pytest.raises(ValueError):
        p_norm(m2.identity(), 0.5)


def test_two_norm_is_trace_inner_product(mixed_spec, rng):
    for _ in range(20):
        x = mixed_spec.random_element(rng)
        assert p_norm(x, 2) ** 2 == pytest.approx(trace(x.H @ x).real, rel=1e-12)


def test_trace_duality(mixed_spec, rng):
    for p in (1.2, 2.0, 3.0):
        q = p / (p - 1)
        for _ in range(20):
            x, y = mixed_spec.random_element(rng), mixed_spec.random_element(rng)
            assert abs(trace(x @ y)) <= p_norm(x, p) * p_norm(y, q) * (1 + 1e-12)


# -- holder_defect -------------------------------------------------------


def test_holder_identity(m2):
    assert holder_defect(m2.identity(), m2.identity(), 2, 2, 1) <= 0


def test_holder_disjoint(m2):
    x, y = el(m2, np.diag([1, 0])), el(m2, np.diag([0, 1]))
    for p, q in [(2, 2), (4, 4), (3, 6), (np.inf, 2), (np.inf, 1)]:
        assert holder_defect(x, y, p, q) <= 0


def test_holder_random_pairs(rng):
    spec = AlgebraSpec.factor(3)
    worst = max(
        holder_defect(spec.random_element(rng), spec.random_element(rng), p, q)
        for p, q in [(2, 2), (3, 1.5), (4, 4), (1, np.inf)]
        for _ in range(25)
    )
    assert worst <= 1e-10


def test_holder_rejects_inconsistent_exponents(m2):
    with pytest.raises(ValueError):
        holder_defect(m2.identity(), m2.identity(), 2, 2, 2)


# -- abs_parts -----------------------------------------------------------


def test_abs_parts_diag(m2):
    a, xp, xm = abs_parts(el(m2, np.diag([1, -1])))
    assert a.allclose(m2.identity())
    assert xp.allclose(el(m2, np.diag([1, 0])))
    assert xm.allclose(el(m2, np.diag([0, 1])))


def test_abs_parts_positive(rng):
    spec = AlgebraSpec.factor(3)
    x = spec.random_element(rng, "positive")
    _, xp, xm = abs_parts(x)
    assert xp.allclose(x, 1e-12 * x.max_abs())
    assert p_norm(xm, np.inf) < 1e-12 * x.max_abs()


def test_abs_parts_reconstruct(rng):
    spec = AlgebraSpec.factor(4)
    x = spec.random_element(rng, "hermitian")
    a, xp, xm = abs_parts(x)
    assert p_norm(x - (xp - xm), np.inf) <= 1e-12
    assert p_norm(xp @ xm, np.inf) <= 1e-12
    assert order_leq(-a, x) and order_leq(x, a)


def test_abs_parts_rejects_non_selfadjoint(m2):
    with pytest.raises(ValueError):
        abs_parts(el(m2, [[0, 1], [0, 0]]))


# -- spectral_projection_below -------------------------------------------


def test_projection_below_diag(m2):
    c = el(m2, np.diag([0.1, 5]))
    e = spectral_projection_below(c, 1.0)
    assert e.allclose(el(m2, np.diag([1, 0])))
    assert trace(m2.identity() - e).real == pytest.approx(1.0)
    assert p_norm(e @ c @ e, np.inf) == pytest.approx(0.1)


def test_projection_below_large_lambda_is_identity(rng):
    spec = AlgebraSpec.factor(3)
    c = spec.random_element(rng, "positive")
    e = spectral_projection_below(c, p_norm(c, np.inf))
    assert e.allclose(spec.identity())
    assert trace(spec.identity() - e).real == 0.0


def test_projection_below_matches_eigen_count(rng):
    spec = AlgebraSpec.factor(5)
    for _ in range(20):
        c = spec.random_element(rng, "positive")
        vals = np.linalg.eigvalsh(c.blocks[0])
        lam = float(np.median(vals))
        e = spectral_projection_below(c, lam)
        assert trace(spec.identity() - e).real == pytest.approx(np.sum(vals > lam), abs=1e-10)


def test_projection_below_is_commuting_projection(mixed_spec, rng):
    c = mixed_spec.random_element(rng, "positive")
    e = spectral_projection_below(c, 1.0)
    assert e.is_projection()
    assert p_norm(e @ c - c @ e, np.inf) <= 1e-10 * p_norm(c, np.inf)


def test_chebyshev_control(mixed_spec, rng):
    for _ in range(20):
        c = mixed_spec.random_element(rng, "positive")
        for p in (1.0, 2.0):
            lam = float(rng.uniform(0.5, 5.0))
            e = spectral_projection_below(c, lam)
            defect = trace(mixed_spec.identity() - e).real
            assert defect <= p_norm(c, p) ** p / lam ** p + 1e-10


def test_projection_below_rejects_non_positive(m2):
    with pytest.raises(ValueError):
        spectral_projection_below(el(m2, np.diag([1, -1])), 1.0)
    with pytest.raises(ValueError):
        spectral_projection_below(m2.identity(), -1.0)


# -- order_leq -----------------------------------------------------------


def test_order_leq_examples(m2):
    assert order_leq(m2.zeros(), m2.identity())
    assert not order_leq(el(m2, np.diag([2, 0])), m2.identity())


def test_order_leq_abs_sandwich(rng):
    spec = AlgebraSpec.factor(4)
    for _ in range(10):
        u = spec.random_element(rng, "hermitian")
        a, _, _ = abs_parts(u)
        assert order_leq(-a, u) and order_leq(u, a)


# -- structure -----------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        AlgebraSpec((2,), (0.0,))
    with pytest.raises(ValueError):
        AlgebraSpec((2, 2), (1.0,))
    with pytest.raises(ValueError):
        AlgebraSpec((), ())


def test_element_rejects_bad_shapes_and_nan(m2):
    with pytest.raises(ValueError):
        Element(m2, [np.eye(3)])
    with pytest.raises(ValueError):
        Element(m2, [np.full((2, 2), np.nan)])


def test_element_is_immutable(m2):
    x = m2.identity()
    with pytest.raises(AttributeError):
        x.spec = None
    with pytest.raises(ValueError):
        x.blocks[0][0, 0] = 3


def test_json_round_trip(mixed_spec, rng):
    x = mixed_spec.random_element(rng)
    assert AlgebraSpec.from_json(mixed_spec.to_json()) == mixed_spec
    y = Element.from_json(x.to_json())
    assert y.spec == mixed_spec and y.allclose(x, 0.0)


def test_vec_round_trip(mixed_spec, rng):
    x = mixed_spec.random_element(rng)
    assert mixed_spec.unvec(x.vec()).allclose(x, 0.0)


def test_stack_norms_match_elementwise(mixed_spec, rng):
    xs = [mixed_spec.random_element(rng, "hermitian") for _ in range(6)]
    stack = ElementStack.from_elements(xs)
    for p in (1.0, 2.0, 3.0, np.inf):
        assert np.allclose(stack.p_norms(p), [p_norm(x, p) for x in xs], rtol=1e-12)
    assert np.allclose(stack.inf_norms(), stack.sa_inf_norms(), rtol=1e-12)
    assert np.allclose(stack.min_eigenvalues(), [min(np.linalg.eigvalsh(b)[0] for b in x.blocks) for x in xs])


def test_stack_take_keeps_members(mixed_spec, rng):
    xs = [mixed_spec.random_element(rng) for _ in range(5)]
    sub = ElementStack.from_elements(xs).take(np.array([1, 3]))
    assert len(sub) == 2 and sub[1].allclose(xs[3], 0.0)


# -- properties ------------------------------------------------------------

dims = st.lists(st.integers(1, 3), min_size=1, max_size=3)


@settings(max_examples=40, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.0, 1.5, 2.0, 3.0, np.inf]))
def test_norm_axioms(dims, seed, p):
    rng = np.random.default_rng(seed)
    spec = AlgebraSpec(tuple(dims), tuple(rng.uniform(0.2, 2.0, len(dims))))
    x, y = spec.random_element(rng), spec.random_element(rng)
    assert p_norm(x + y, p) <= p_norm(x, p) + p_norm(y, p) + 1e-10
    assert p_norm(x.H, p) == pytest.approx(p_norm(x, p), rel=1e-10)
    assert p_norm(2.5j * x, p) == pytest.approx(2.5 * p_norm(x, p), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**32 - 1))
def test_abs_parts_properties(dims, seed):
    rng = np.random.default_rng(seed)
    spec = AlgebraSpec(tuple(dims), (1.0,) * len(dims))
    x = spec.random_element(rng, "hermitian")
    a, xp, xm = abs_parts(x)
    assert xp.is_positive() and xm.is_positive()
    assert (xp - xm).allclose(x, 1e-10) and (xp + xm).allclose(a, 1e-10)
