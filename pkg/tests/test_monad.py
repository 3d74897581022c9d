import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from toposlab.monad import (DIST, Dist, FiniteDist, FiniteSet, Kernel, MarkovChainSpec, Monad,
                            apply, build_markov_chain, check_marginal_locality, check_monad_laws,
                            check_product_stability, check_state_preservation,
                            check_strength_diagrams, classical_extension, closed_form_joint,
                            ext_map, fubini_product, kleisli_compose, markov_chain, random_chain_spec,
                            random_dist, random_kernel, spatial_compose)


def fs(label, n):
    return FiniteSet(label, n)


def joint_oracle(spec):
    """p(x1..xn) = p1(x1) prod f_i(x_{i-1})(x_i) by explicit loops."""
    sizes = [s.size for s in spec.sets]
    out = np.zeros(sizes)
    for xs in itertools.product(*(range(n) for n in sizes)):
        p = spec.initial.weights[xs[0]]
        for k, (a, b) in zip(spec.kernels, zip(xs, xs[1:])):
            p *= k.matrix[a, b]
        out[xs] = p
    return out.ravel()


class IdentityMonad(Monad):
    """T X = X, the simplest commutative monad with T1 = 1."""

    def unit(self, x):
        return x

    def map(self, h, t):
        return h(t)

    def join(self, tt):
        return tt

    def fubini(self, t1, t2):
        return (t1, t2)

    def distance(self, t1, t2):
        return 0.0 if t1 == t2 else 1.0


def test_finite_dist_validation():
    with pytest.raises(ValueError):
        FiniteDist(fs("X", 2), [0.7, 0.7])
    with pytest.raises(ValueError):
        FiniteDist(fs("X", 2), [1.5, -0.5])
    with pytest.raises(ValueError):
        Kernel(fs("X", 2), fs("Y", 2), [[1, 0], [0.5, 0.4]])


def test_kleisli_compose_examples():
    rng = np.random.default_rng(0)
    x, y = fs("X", 4), fs("Y", 4)
    g = random_kernel(x, y, rng)
    assert np.array_equal(kleisli_compose(g, Kernel.identity(x)).matrix, g.matrix)
    flip = Kernel.deterministic(fs("B", 2), fs("B", 2), lambda i: 1 - i)
    assert np.array_equal(kleisli_compose(flip, flip).matrix, np.eye(2))
    f = random_kernel(x, y, rng)
    h = random_kernel(y, fs("Z", 4), rng)
    oracle = np.array([[sum(f.matrix[i, j] * h.matrix[j, k] for j in range(4)) for k in range(4)]
                       for i in range(4)])
    assert np.max(np.abs(kleisli_compose(h, f).matrix - oracle)) <= 1e-14


def test_kleisli_laws_random_kernels():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b, c, d = (fs(s, int(rng.integers(1, 5))) for s in "ABCD")
        f, g, h = random_kernel(a, b, rng), random_kernel(b, c, rng), random_kernel(c, d, rng)
        left = kleisli_compose(h, kleisli_compose(g, f)).matrix
        right = kleisli_compose(kleisli_compose(h, g), f).matrix
        assert np.max(np.abs(left - right)) <= 1e-14
        assert np.max(np.abs(kleisli_compose(Kernel.identity(b), f).matrix - f.matrix)) == 0
        # generic Kleisli composition agrees with the matrix product
        gf = DIST.kleisli(g.as_morphism(), f.as_morphism())
        matrix = kleisli_compose(g, f).matrix
        for i in range(a.size):
            row = np.array([gf(i).get(k, 0.0) for k in range(c.size)])
            assert np.max(np.abs(row - matrix[i])) <= 1e-14


def test_fubini_product_examples():
    x, y = fs("X", 2), fs("Y", 3)
    p = fubini_product(FiniteDist.point(x, 1), FiniteDist.point(y, 2))
    assert p.weights[5] == 1 and p.weights.sum() == 1
    u = fubini_product(FiniteDist.uniform(x), FiniteDist.uniform(y))
    assert np.allclose(u.weights, 1 / 6)
    rng = np.random.default_rng(2)
    a, b = random_dist(x, rng), random_dist(y, rng)
    q = fubini_product(a, b)
    assert np.allclose(q.marginal([0]).weights, a.weights, atol=1e-15)
    assert np.allclose(q.marginal([1]).weights, b.weights, atol=1e-15)


def test_spatial_compose_examples():
    rng = np.random.default_rng(3)
    x, y, z = fs("X", 2), fs("Y", 3), fs("Z", 4)
    ident = spatial_compose(Kernel.identity(x), Kernel.identity(y))
    assert np.array_equal(ident.matrix, np.eye(6))
    f = random_kernel(x, z, rng)
    fg = spatial_compose(f, Kernel.identity(y))
    p, q = random_dist(x, rng), random_dist(y, rng)
    out = apply(fg, fubini_product(p, q))
    expected = fubini_product(apply(f, p), q)
    assert np.allclose(out.weights, expected.weights, atol=1e-15)
    g = random_kernel(y, z, rng)
    assert np.allclose(spatial_compose(f, g).matrix.sum(axis=1), 1)


def test_ext_map_examples():
    rng = np.random.default_rng(4)
    x, y, z = fs("X", 2), fs("Y", 3), fs("Z", 2)
    const = Kernel.constant(y, FiniteDist.point(z, 1))
    e = ext_map(const, x)
    for i in range(6):
        assert e.matrix[i, 2 * i + 1] == 1
    f = random_kernel(y, z, rng)
    p = random_dist(FiniteSet.product(x, y), rng)
    out = apply(ext_map(f, x), p)
    assert np.allclose(out.marginal([0, 1]).weights, p.weights, atol=1e-15)
    support = ext_map(f, x).matrix.reshape(6, 6, 2).sum(axis=2)
    assert np.array_equal(support > 0, np.eye(6, dtype=bool))


def test_chain_examples():
    p = random_dist(fs("X1", 3), np.random.default_rng(5))
    single = build_markov_chain(MarkovChainSpec(p))
    assert np.array_equal(single.weights, p.weights)
    b1, b2 = fs("X1", 2), fs("X2", 2)
    flip = Kernel.deterministic(b1, b2, lambda i: 1 - i)
    out = build_markov_chain(MarkovChainSpec(FiniteDist.point(b1, 0), (flip,)))
    assert np.array_equal(out.weights, [0, 1, 0, 0])


def test_chain_matches_loop_oracle():
    rng = np.random.default_rng(6)
    for _ in range(20):
        spec = random_chain_spec(5, rng)
        built = build_markov_chain(spec)
        assert np.max(np.abs(built.weights - joint_oracle(spec))) <= 1e-12
        assert np.max(np.abs(built.weights - closed_form_joint(spec).weights)) <= 1e-12


def test_chain_prefix_consistency():
    rng = np.random.default_rng(7)
    spec = random_chain_spec(5, rng)
    full = build_markov_chain(spec)
    for k in range(1, 5):
        short = build_markov_chain(spec.truncated(k))
        assert np.allclose(full.marginal(list(range(k))).weights, short.weights, atol=1e-15)


def test_chain_rejects_mismatched_kernels():
    with pytest.raises(ValueError):
        MarkovChainSpec(FiniteDist.uniform(fs("X1", 2)),
                        (Kernel.identity(fs("X2", 3)),))


def test_generic_chain_on_identity_monad():
    fns = [lambda x: x + 1, lambda x: 2 * x]
    assert markov_chain(IdentityMonad(), 3, fns) == (3, 4, 8)


def test_lemma_examples():
    rng = np.random.default_rng(8)
    x, y, z = fs("X", 3), fs("Y", 2), fs("Z", 3)
    px, py = random_dist(x, rng), random_dist(y, rng)
    assert check_product_stability(px, py, Kernel.identity(x), Kernel.identity(y)) == 0
    det = Kernel.deterministic(y, z, lambda i: i + 1)
    assert check_product_stability(px, py, Kernel.deterministic(x, z, lambda i: 2 - i), det) == 0
    p = fubini_product(px, py)
    p = FiniteDist(FiniteSet("XY", 6), p.weights)
    assert check_marginal_locality(p, random_kernel(y, z, rng)) <= 1e-15
    assert check_marginal_locality(p, Kernel.constant(y, random_dist(z, rng))) <= 1e-15
    assert check_state_preservation(p, det) == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lemma_suites_random(seed):
    rng = np.random.default_rng(seed)
    a, b, c, d = (fs(s, int(rng.integers(1, 5))) for s in "ABCD")
    f, g = random_kernel(a, b, rng), random_kernel(c, d, rng)
    assert check_product_stability(random_dist(a, rng), random_dist(c, rng), f, g) <= 1e-12
    p = random_dist(FiniteSet("XY", c.size * a.size), rng, sparse=True)
    assert check_marginal_locality(p, f) <= 1e-12
    assert check_state_preservation(p, f) <= 1e-12


def test_repeated_extension_preserves_joint():
    rng = np.random.default_rng(9)
    p = random_dist(fs("X1", 3), rng)
    cur = p
    for n in range(2, 6):
        nxt = fs(f"X{n}", int(rng.integers(1, 4)))
        k = random_kernel(FiniteSet("last", cur.over.shape[-1]), nxt, rng)
        ext = ext_map(k, FiniteSet("prefix", cur.over.size // k.src.size))
        new = FiniteDist(FiniteSet.product(cur.over, nxt), cur.weights @ ext.matrix)
        assert np.allclose(new.marginal(list(range(n - 1))).weights, cur.weights, atol=1e-15)
        cur = new


def test_strength_diagrams():
    assert check_strength_diagrams(sizes=(1,)).max_deviation == 0
    rep = check_strength_diagrams(sizes=(1, 2, 3))
    assert rep.max_deviation <= 1e-14 and not rep.violations()
    assert len(rep.deviations) == 6


def test_strength_diagrams_fault_injection():
    rep = check_strength_diagrams(sizes=(1, 2), extra_samples=[Dist({0: 0.9})])
    v = rep.violations()
    assert "T pi_X . dst = pi_TX" in v and abs(v["T pi_X . dst = pi_TX"] - 0.1) < 1e-12


def test_monad_laws():
    rep = check_monad_laws()
    assert rep.max_deviation <= 1e-14 and len(rep.deviations) == 4


def test_lemma_runtime_budget():
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    for _ in range(200):
        a, b = fs("A", 3), fs("B", 4)
        check_state_preservation(random_dist(FiniteSet("XY", 12), rng), random_kernel(a, b, rng))
    assert time.perf_counter() - t0 < 5


def test_classical_extension_examples():
    rng = np.random.default_rng(11)
    x, y, z = fs("X", 2), fs("Y", 3), fs("Z", 2)
    px, pz = random_dist(x, rng), random_dist(z, rng)
    u = FiniteDist.uniform(y)
    pxy = fubini_product(px, u)
    pyz = fubini_product(u, pz)
    ext = classical_extension(pxy, pyz)
    assert ext.status == "EXTENDIBLE"
    triple = np.einsum("i,j,k->ijk", px.weights, u.weights, pz.weights).ravel()
    assert np.allclose(ext.joint.weights, triple, atol=1e-15)


def test_classical_extension_copy_chain():
    n = 3
    copy = FiniteDist(FiniteSet("XY", n * n, (n, n)), np.eye(n).ravel() / n)
    ext = classical_extension(copy, copy)
    w = ext.joint.weights.reshape(n, n, n)
    expected = np.zeros((n, n, n))
    for i in range(n):
        expected[i, i, i] = 1 / n
    assert np.allclose(w, expected)
    assert np.allclose(ext.joint.marginal([0, 1]).weights, copy.weights)
    assert np.allclose(ext.joint.marginal([1, 2]).weights, copy.weights)


def test_classical_extension_incompatible():
    a = FiniteDist(FiniteSet("XY", 4, (2, 2)), [0.5, 0, 0.5, 0])
    b = FiniteDist(FiniteSet("YZ", 4, (2, 2)), [0.25, 0.25, 0.25, 0.25])
    ext = classical_extension(a, b)
    assert ext.status == "INCOMPATIBLE" and abs(ext.l1_gap - 1.0) < 1e-15


def test_classical_extension_zero_row_convention_is_irrelevant():
    rng = np.random.default_rng(12)
    for _ in range(20):
        wy = rng.dirichlet(np.ones(3))
        wy[int(rng.integers(3))] = 0
        wy /= wy.sum()
        cond_x = rng.dirichlet(np.ones(2), size=3)
        cond_z = rng.dirichlet(np.ones(4), size=3)
        pxy = FiniteDist(FiniteSet("XY", 6, (2, 3)), (cond_x.T * wy).ravel())
        pyz = FiniteDist(FiniteSet("YZ", 12, (3, 4)), (wy[:, None] * cond_z).ravel())
        a = classical_extension(pxy, pyz)
        b = classical_extension(pxy, pyz, zero_row=np.array([1.0, 0, 0, 0]))
        assert np.array_equal(a.joint.weights, b.joint.weights)
        assert np.allclose(a.joint.marginal([1, 2]).weights, pyz.weights, atol=1e-15)
