import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from toposlab.contexts import (Context, ProductContext, SpanMembershipError, context_characters,
                               context_intersection, context_leq, coproduct_injection,
                               product_context, product_leq, random_context, random_span_element)
from toposlab.linalg import haar_unitary

E3 = np.eye(3)


def span_matrix(c):
    return np.array([p.ravel() for p in c.projectors]).T


def span_intersection_dim(c, d):
    """dim(span C cap span D) = dim C + dim D - dim(span C + span D)."""
    a, b = span_matrix(c), span_matrix(d)
    joint = np.linalg.matrix_rank(np.hstack([a, b]), tol=1e-8)
    return a.shape[1] + b.shape[1] - joint


def in_span_lstsq(c, a):
    m = span_matrix(c)
    x, *_ = np.linalg.lstsq(m, a.ravel(), rcond=None)
    return np.linalg.norm(m @ x - a.ravel()) < 1e-8


def shared_block_pair(rng, d=4, k=2):
    """Two maximal contexts that both refine the same split into k and d-k dimensions."""
    w = haar_unitary(d, rng)
    blocks = []
    for _ in range(2):
        u = np.zeros((d, d), dtype=complex)
        u[:k, :k] = haar_unitary(k, rng)
        u[k:, k:] = haar_unitary(d - k, rng)
        blocks.append(Context.from_basis(w @ u))
    split = Context.from_basis(w, [list(range(k)), list(range(k, d))])
    return blocks[0], blocks[1], split


def test_validation_rejects_bad_projectors():
    with pytest.raises(ValueError):
        Context(2, (np.diag([1.0, 0.0]),))  # incomplete
    with pytest.raises(ValueError):
        Context(2, (np.diag([1.0, 0.0]), np.diag([1.0, 1.0])))  # overlapping
    with pytest.raises(ValueError):
        Context(2, (np.array([[1, 1], [0, 0]]), np.diag([0.0, 1.0])))  # not Hermitian
    with pytest.raises(ValueError):
        Context(2, (np.zeros((2, 2)), np.eye(2)))  # zero projector


def test_leq_examples():
    rng = np.random.default_rng(0)
    standard = Context.standard(3)
    assert context_leq(Context.trivial(3), random_context(3, rng))
    coarse = Context.from_basis(E3, [[0], [1, 2]])
    assert context_leq(coarse, standard)
    assert not context_leq(standard, coarse)
    a, b = random_context(3, rng), random_context(3, rng)
    assert not context_leq(a, b)
    # agrees with a least-squares span oracle
    assert context_leq(a, b) == all(in_span_lstsq(b, p) for p in a.projectors)


def test_intersection_examples():
    rng = np.random.default_rng(1)
    c = random_context(3, rng)
    assert context_intersection(c, c).same_as(c)
    d = random_context(3, rng)
    meet = context_intersection(c, d)
    assert len(meet) == 1 and meet.same_as(Context.trivial(3))
    assert span_intersection_dim(c, d) == 1
    coarse = Context.from_basis(E3, [[0], [1, 2]])
    assert context_intersection(coarse, Context.standard(3)).same_as(coarse)


def test_intersection_matches_span_oracle_on_shared_blocks():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b, split = shared_block_pair(rng)
        meet = context_intersection(a, b)
        assert meet.same_as(split)
        assert len(meet) == span_intersection_dim(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_intersection_is_greatest_lower_bound(seed):
    rng = np.random.default_rng(seed)
    a, b, split = shared_block_pair(rng)
    meet = context_intersection(a, b)
    assert context_leq(meet, a) and context_leq(meet, b)
    for e in (split, Context.trivial(4)):
        assert context_leq(e, meet)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_leq_is_a_partial_order(seed):
    rng = np.random.default_rng(seed)
    u = haar_unitary(4, rng)
    fine = Context.from_basis(u)
    mid = Context.from_basis(u, [[0, 1], [2], [3]])
    top = Context.from_basis(u, [[0, 1], [2, 3]])
    for c in (fine, mid, top):
        assert context_leq(c, c)
    assert context_leq(top, mid) and context_leq(mid, fine) and context_leq(top, fine)
    assert not context_leq(fine, top)
    # antisymmetry on canonical forms: reordering projectors gives the same key
    shuffled = Context(4, tuple(reversed(mid.projectors)))
    assert context_leq(mid, shuffled) and context_leq(shuffled, mid)
    assert shuffled.key() == mid.key()


def test_canonical_form_orders_by_rank():
    c = Context.from_basis(E3, [[2], [0, 1]]).canonical()
    assert c.ranks == (2, 1)


def test_product_context_examples():
    out = product_context([Context.trivial(2), Context.trivial(3)])
    assert len(out) == 1 and np.allclose(out.projectors[0], np.eye(6))
    rng = np.random.default_rng(3)
    a, b = random_context(3, rng), random_context(3, rng)
    joint = product_context([a, b])
    assert len(joint) == 9 and joint.ranks == (1,) * 9
    assert np.allclose(sum(joint.projectors), np.eye(9))
    assert product_context([a]) is a


def test_product_order_matches_span_inclusion():
    rng = np.random.default_rng(4)
    u, v = haar_unitary(3, rng), haar_unitary(2, rng)
    small = ProductContext((Context.from_basis(u, [[0], [1, 2]]), Context.trivial(2)))
    large = ProductContext((Context.from_basis(u), Context.from_basis(v)))
    other = ProductContext((random_context(3, rng), Context.from_basis(v)))
    for p, q in ((small, large), (large, small), (small, other), (other, large)):
        assert product_leq(p, q) == context_leq(p.joint(), q.joint())


def test_coproduct_injection():
    rng = np.random.default_rng(5)
    cs = [random_context(2, rng), random_context(3, rng)]
    assert np.allclose(coproduct_injection(0, np.eye(2), cs).mat, np.eye(6))
    a, b = random_span_element(cs[0], rng), random_span_element(cs[1], rng)
    x, y = coproduct_injection(0, a, cs).mat, coproduct_injection(1, b, cs).mat
    assert np.allclose(x @ y, y @ x)
    assert np.allclose(x @ y, np.kron(a, b))
    with pytest.raises(SpanMembershipError):
        coproduct_injection(1, np.diag([1.0, 2.0, 3.0]) + 0.5 * np.ones((3, 3)), cs)


def test_characters():
    rng = np.random.default_rng(6)
    c = random_context(3, rng, n_blocks=2)
    chars = context_characters(c)
    for i, chi in enumerate(chars):
        for j, p in enumerate(c.projectors):
            assert abs(chi(p) - (i == j)) < 1e-12
        assert abs(chi(np.eye(3)) - 1) < 1e-12
        a, b = random_span_element(c, rng), random_span_element(c, rng)
        assert abs(chi(a @ b) - chi(a) * chi(b)) < 1e-12


def test_span_membership():
    rng = np.random.default_rng(7)
    c = random_context(3, rng)
    a = random_span_element(c, rng)
    assert c.contains(a)
    assert np.allclose(sum(x * p for x, p in zip(c.coefficients(a), c.projectors)), a)
    assert not c.contains(a + 0.1 * np.diag([1.0, 0.0, 0.0]))
