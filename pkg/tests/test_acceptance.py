"""Acceptance criteria, one test each; conftest prints a PASS/FAIL line per criterion."""

import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import grid_min_product_overlap, qutrit_grid, random_product_basis
from toposlab.contexts import ProductContext, random_context, random_span_element
from toposlab.integrals import frame_function_from_state, reconstruct_state
from toposlab.linalg import (maximally_entangled, min_eigenvalue, partial_trace,
                             partial_transpose, random_density, random_pure, tensor)
from toposlab.monad import (FiniteSet, build_markov_chain, check_marginal_locality,
                            check_product_stability, check_state_preservation,
                            check_strength_diagrams, closed_form_joint, random_chain_spec,
                            random_dist, random_kernel)
from toposlab.monogamy import (Verdict, check_extendibility_obstruction, classical_contrast,
                               condition_on_povm, constant_kernel_chain,
                               find_nonproduct_restriction, monogamy_witness, recombine,
                               refute_correlating_extension)
from toposlab.popt import certify_popt, min_product_overlap


@pytest.mark.criterion("1 Markov chain equals closed-form joint (200 chains, n=5, <= 1e-12, < 5 s)")
def test_markov_factorization():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        spec = random_chain_spec(5, rng, max_size=4)
        dev = np.max(np.abs(build_markov_chain(spec).weights - closed_form_joint(spec).weights))
        worst = max(worst, dev)
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 5


@pytest.mark.criterion("2 kernel lemmas <= 1e-12 on 1000 instances, strength diagrams <= 1e-14, < 10 s")
def test_lemma_suites():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst = {"product": 0.0, "locality": 0.0, "preservation": 0.0}
    for _ in range(1000):
        a, b, c, e = (FiniteSet(s, int(rng.integers(1, 5))) for s in "ABCE")
        f, g = random_kernel(a, b, rng), random_kernel(c, e, rng)
        worst["product"] = max(worst["product"], check_product_stability(
            random_dist(a, rng), random_dist(c, rng), f, g))
        p = random_dist(FiniteSet("XY", c.size * a.size), rng, sparse=True)
        worst["locality"] = max(worst["locality"], check_marginal_locality(p, f))
        worst["preservation"] = max(worst["preservation"], check_state_preservation(p, f))
    strength = check_strength_diagrams(sizes=(1, 2, 3))
    elapsed = time.perf_counter() - start
    assert max(worst.values()) <= 1e-12, worst
    assert strength.max_deviation <= 1e-14, strength.deviations
    assert elapsed < 10


@pytest.mark.criterion("3 state -> frame function -> state round trip (100 states, <= 1e-8, < 30 s)")
def test_bijection_round_trip():
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    errors = []
    for i in range(100):
        w = (random_density((3, 3), rng) if i < 50
             else partial_transpose(random_pure((3, 3), rng), 1))
        st = certify_popt(w, seed=i)
        assert st.certified
        back = reconstruct_state(frame_function_from_state(st))
        errors.append(np.linalg.norm(back.mat - w.mat))
    elapsed = time.perf_counter() - start
    assert max(errors) <= 1e-8
    assert elapsed < 30


@pytest.mark.criterion("4 frame function sums to 1 on product bases (100 bases x 10 states, <= 1e-9)")
def test_frame_function_normalization():
    rng = np.random.default_rng(404)
    states = [random_density((3, 3), rng) if i % 2
              else partial_transpose(random_pure((3, 3), rng), 1) for i in range(10)]
    funcs = [frame_function_from_state(certify_popt(w, seed=i)) for i, w in enumerate(states)]
    bases = [random_product_basis((3, 3), rng) for _ in range(100)]
    worst = max(abs(f.basis_sum(us) - 1) for f in funcs for us in bases)
    assert worst <= 1e-9


@pytest.mark.criterion("5 PT of 3x3 maxent: POPT, overlap 0 +- 1e-6, grid <= 1e-4, eigenvalue -1/3 +- 1e-10")
def test_popt_quantum_gap():
    pt = partial_transpose(maximally_entangled(3), 1)
    st = certify_popt(pt, seed=0)
    assert st.certified
    value = min_product_overlap(pt, rng=0).value
    assert abs(value) <= 1e-6
    assert abs(value - grid_min_product_overlap(pt.mat, qutrit_grid())) <= 1e-4
    assert abs(min_eigenvalue(pt) + 1 / 3) <= 1e-10


@pytest.mark.criterion("6 positive elements of product qubit context spans have coefficients >= -1e-10")
def test_separable_context_coefficients():
    rng = np.random.default_rng(606)
    worst = np.inf
    for _ in range(100):
        pc = ProductContext((random_context(2, rng, 2), random_context(2, rng, 2)))
        joint = pc.joint()
        ps = np.array(joint.projectors)
        for k in range(100):
            if k % 2:
                # pinching a random state onto the span keeps it positive
                rho = random_density((2, 2), rng).mat
                a = np.einsum("kij,jl,klm->im", ps, rho, ps)
            else:
                a = random_span_element(joint, rng)
                a = a - np.linalg.eigvalsh(a)[0] * np.eye(4)
            assert np.linalg.eigvalsh(a)[0] >= -1e-12
            worst = min(worst, np.min(np.real(joint.coefficients(a))))
    assert worst >= -1e-10


@pytest.mark.criterion("7 conditioning sigma_XY (x) tau_Z: conditionals <= 1e-10, recombination <= 1e-12")
def test_povm_conditioning():
    rng = np.random.default_rng(707)
    for _ in range(100):
        sigma = random_pure((3, 3), rng)
        assert find_nonproduct_restriction(sigma) is not None
        omega = tensor([sigma, random_density((2,), rng)])
        g = [random_density((2,), rng).mat for _ in range(3)]
        vals, vecs = np.linalg.eigh(sum(g))
        s = vecs @ np.diag(vals ** -0.5) @ vecs.conj().T
        conds = condition_on_povm(omega, [s @ x @ s for x in g])
        for c in conds:
            assert np.linalg.norm(c.state.mat - sigma.mat) <= 1e-10
        assert np.linalg.norm(recombine(conds) - partial_trace(omega, [0, 1]).mat) <= 1e-12


@pytest.mark.criterion("8 monogamy witness: marginals <= 1e-12, NOT_EXTENDIBLE_CERTIFIED, classical EXTENDIBLE")
def test_monogamy_witness():
    rng = np.random.default_rng(808)
    states = [maximally_entangled(3)]
    states += [random_density((3, 3), rng) for _ in range(10)]
    states += [partial_transpose(random_pure((3, 3), rng), 1) for _ in range(10)]
    for w in states:
        assert find_nonproduct_restriction(w) is not None
        rho, trace = monogamy_witness(w)
        gap = np.linalg.norm(partial_trace(rho, [0]).mat - partial_trace(w, [1]).mat)
        assert gap <= 1e-12
        verdict = check_extendibility_obstruction(w, rho, trace)
        assert verdict.status is Verdict.NOT_EXTENDIBLE_CERTIFIED
        contrast = classical_contrast(certify_popt(w), certify_popt(rho))
        assert contrast.status == "EXTENDIBLE"


@pytest.mark.criterion("9 constant-kernel chain on 4 qutrits has product cuts <= 1e-10; correlating extension refuted")
def test_triviality_demonstration():
    rng = np.random.default_rng(909)
    rep = constant_kernel_chain([random_density((3,), rng) for _ in range(4)])
    assert rep.state.dims == (3, 3, 3, 3)
    assert len(rep.cut_distances) >= 3 and max(rep.cut_distances) <= 1e-10
    phi = maximally_entangled(3)
    rho, _ = monogamy_witness(phi)
    obstruction = refute_correlating_extension(phi, rho)
    assert obstruction.certified
    assert [s["step"] for s in obstruction.steps] == ["a", "b", "c"]


def _toposlab(*args, cwd):
    return subprocess.run([sys.executable, "-m", "toposlab", *map(str, args)],
                          capture_output=True, cwd=cwd)


@pytest.mark.criterion("10 CLI commands re-run with the same seed give byte-identical output")
def test_cli_determinism(tmp_path):
    setup = [
        ("make", "--maxent", 3, "--out", "maxent.json"),
        ("make", "--pt-maxent", 3, "--out", "pt.json"),
        ("make", "--violator", 3, "--out", "violator.json"),
        ("make", "--random-density", "3,3", "--seed", 7, "--out", "rho.json"),
        ("make", "--table", "rho.json", "--out", "table.json"),
        ("make", "--markov", 5, "--seed", 7, "--out", "chain.json"),
    ]
    commands = [
        ("certify", "pt.json", "--seed", 7),
        ("certify", "violator.json", "--seed", 7),
        ("certify", "rho.json", "--seed", 7),
        ("reconstruct", "table.json"),
        ("markov", "chain.json", "--check-lemmas", "--lemma-instances", 1000, "--seed", 7),
        ("monogamy", "witness", "maxent.json", "--out", "witness.json"),
        ("monogamy", "obstruct", "maxent.json", "witness.json", "--seed", 7),
        ("monogamy", "obstruct", "rho.json", "--seed", 7),
        ("monogamy", "contrast", "maxent.json", "--seed", 7),
    ]
    runs = []
    for attempt in range(2):
        outputs = []
        for args in setup:
            res = _toposlab(*args, cwd=tmp_path)
            assert res.returncode == 0, res.stderr
            outputs.append((tmp_path / args[-1]).read_bytes())
        for args in commands:
            res = _toposlab(*args, cwd=tmp_path)
            assert res.stdout and res.returncode in (0, 2), res.stderr
            outputs.append(res.stdout)
        outputs.append((tmp_path / "witness.json").read_bytes())
        runs.append(outputs)
    assert runs[0] == runs[1]
