"""Extendibility of POPT states and the triviality of constant-kernel chains.

Bipartite operators are ``X (x) Y`` or ``Y (x) Z`` with the shared factor
``Y`` second or first respectively. Tripartite operators are ``X (x) Y (x) Z``;
the conditioning lemma treats the last factor as ``Z`` and everything before
it as ``XY``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contexts import Context, ProductContext
from .integrals import valuation_of
from .linalg import (DEFAULT_TOL, Operator, as_operator, eigh, embed, numerical_rank,
                     partial_trace, partial_transpose, projector, random_density, random_pure,
                     tensor)
from .monad import ClassicalExtension, FiniteDist, FiniteSet, classical_extension
from .popt import (Extremality, POPTState, certify_popt, is_extremal_popt_heuristic,
                   is_nonproduct_schmidt, is_product)

MARGINAL_TOL = 1e-10
PRODUCT_TOL = 1e-10


class HypothesisError(ValueError):
    """Raised when an input violates the hypothesis of the construction."""


class Verdict(str, enum.Enum):
    EXTENDIBLE_WITNESSED = "EXTENDIBLE_WITNESSED"
    NOT_EXTENDIBLE_CERTIFIED = "NOT_EXTENDIBLE_CERTIFIED"
    OVERLAP_MISMATCH = "OVERLAP_MISMATCH"
    UNDECIDED = "UNDECIDED"


@dataclass
class ExtendibilityVerdict:
    status: Verdict
    certificate: dict = field(default_factory=dict)
    extension: Operator | None = None


def _op(x) -> Operator:
    return x.op if isinstance(x, POPTState) else as_operator(x)


# --- conditioning on a POVM ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Conditional:
    probability: float
    state: Operator | None   # None when the outcome has zero probability

    @property
    def zero_probability(self) -> bool:
        return self.state is None


def condition_on_povm(omega, povm: Sequence[np.ndarray], tol: float = DEFAULT_TOL
                      ) -> list[Conditional]:
    """``w|_i = tr_Z[w (1 (x) O_i)] / p_i`` with ``p_i = tr[w (1 (x) O_i)]``."""
    w = _op(omega)
    if w.n_factors < 2:
        raise ValueError("need at least two factors")
    dz = w.dims[-1]
    povm = [np.asarray(o, dtype=complex) for o in povm]
    total = np.zeros((dz, dz), dtype=complex)
    for i, o in enumerate(povm):
        if o.shape != (dz, dz):
            raise ValueError(f"POVM element {i} has shape {o.shape}, expected {(dz, dz)}")
        if np.linalg.norm(o - o.conj().T) > tol or np.linalg.eigvalsh((o + o.conj().T) / 2)[0] < -tol:
            raise ValueError(f"POVM element {i} is not positive semidefinite")
        total += o
    if np.linalg.norm(total - np.eye(dz)) > tol * dz:
        raise ValueError("POVM elements do not sum to the identity")
    keep = list(range(w.n_factors - 1))
    out = []
    for o in povm:
        m = w.mat @ embed(Operator(o, (dz,)), [w.n_factors - 1], w.dims).mat
        p = float(np.trace(m).real)
        if p <= tol:
            out.append(Conditional(max(p, 0.0), None))
            continue
        out.append(Conditional(p, partial_trace(Operator(m, w.dims), keep).scaled(1 / p)))
    return out


def recombine(conditionals: Sequence[Conditional]) -> np.ndarray:
    return sum(c.probability * c.state.mat for c in conditionals if c.state is not None)


@dataclass
class ProductReport:
    marginal_class: Extremality
    distance: float
    is_product: bool
    violation: str | None = None


def extremal_marginal_forces_product(omega, tol: float = PRODUCT_TOL) -> ProductReport:
    """A tripartite state whose XY-marginal is a known extremal point splits off Z."""
    w = _op(omega)
    if w.n_factors != 3:
        raise ValueError("expected a tripartite operator X (x) Y (x) Z")
    marg = partial_trace(w, [0, 1])
    cls = is_extremal_popt_heuristic(marg)
    if cls is Extremality.UNDECIDED:
        raise HypothesisError("XY-marginal is not recognized as extremal")
    test = is_product(w, [0, 1], tol)
    msg = None if test.is_product else (
        f"state with extremal marginal is not product (distance {test.distance:.3g})")
    return ProductReport(cls, test.distance, test.is_product, msg)


# --- the non-extendibility witness -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Restriction:
    pair: tuple[int, int]
    projector: np.ndarray
    operator: Operator


def _marginal_eigenbasis(omega_xy: Operator):
    rho_y = partial_trace(omega_xy, [1])
    vals, vecs = eigh(rho_y)
    return np.clip(vals, 0.0, None), vecs


def _restrict(op: Operator, proj: np.ndarray, factor: int) -> Operator:
    big = embed(Operator(proj, (proj.shape[0],)), [factor], op.dims).mat
    return Operator(big @ op.mat @ big, op.dims)


def find_nonproduct_restriction(omega_xy, basis: np.ndarray | None = None) -> Restriction | None:
    """First pair (i, j) whose rank-2 restriction on Y stays nonproduct.

    Pairs are scanned lexicographically in the canonical eigenbasis of
    ``rho_Y = tr_X w`` (or in ``basis`` when given).
    """
    w = _op(omega_xy)
    if w.n_factors != 2:
        raise ValueError("expected a bipartite operator")
    if basis is None:
        _, basis = _marginal_eigenbasis(w)
    for i, j in itertools.combinations(range(w.dims[1]), 2):
        proj = projector(basis[:, i]) + projector(basis[:, j])
        r = _restrict(w, proj, 1)
        if is_nonproduct_schmidt(r, [0]):
            return Restriction((i, j), proj, r)
    return None


@dataclass(frozen=True, eq=False)
class WitnessTrace:
    pair: tuple[int, int]
    basis: np.ndarray          # columns: eigenvectors of rho_Y, canonical order
    eigenvalues: np.ndarray
    order: tuple[int, ...]     # relabelled order with the found pair first
    phi: np.ndarray            # unnormalized purification on Y (x) Z
    restriction: Restriction


def monogamy_witness(omega_xy) -> tuple[Operator, WitnessTrace]:
    """Quantum state on ``Y (x) Z`` (dim Z = 3) sharing ``rho_Y`` but not extendible.

    The found pair is relabelled to positions 1, 2: ``|phi> = sqrt(p_i)|psi_i>|0>
    + sqrt(p_j)|psi_j>|1>`` and every remaining eigenvector is attached to ``|2>``.
    """
    w = _op(omega_xy)
    if w.n_factors != 2:
        raise ValueError("expected a bipartite operator")
    if is_product(w, [0], PRODUCT_TOL).is_product:
        raise HypothesisError("input is a product state")
    p, basis = _marginal_eigenbasis(w)
    found = find_nonproduct_restriction(w, basis)
    if found is None:
        raise HypothesisError("no nonproduct rank-2 restriction found")
    i, j = found.pair
    dy = w.dims[1]
    order = (i, j) + tuple(k for k in range(dy) if k not in (i, j))
    z = np.eye(3)
    phi = (np.sqrt(p[i]) * np.kron(basis[:, i], z[0])
           + np.sqrt(p[j]) * np.kron(basis[:, j], z[1]))
    rho = projector(phi)
    for k in order[2:]:
        rho = rho + p[k] * np.kron(projector(basis[:, k]), projector(z[2]))
    trace = WitnessTrace(found.pair, basis, p, order, phi, found)
    return Operator(rho, (dy, 3)), trace


def _block_structure(omega_xy: Operator, rho_yz: Operator, proj: np.ndarray, pair):
    r_xy = _restrict(omega_xy, proj, 1)
    r_yz = _restrict(rho_yz, proj, 0)
    xy_nonproduct = is_nonproduct_schmidt(r_xy, [0])
    yz_pure = numerical_rank(r_yz) == 1
    yz_nonproduct = is_nonproduct_schmidt(r_yz, [0])
    return dict(pair=list(pair), restricted_xy_nonproduct=xy_nonproduct,
                restricted_yz_rank=numerical_rank(r_yz), restricted_yz_pure=yz_pure,
                restricted_yz_nonproduct=yz_nonproduct,
                restricted_xy_product_distance=is_product(r_xy, [0]).distance,
                restricted_yz_product_distance=is_product(r_yz, [0]).distance,
                applies=bool(xy_nonproduct and yz_pure and yz_nonproduct))


def _affine_extension_projector(dx: int, dy: int, dz: int):
    """Linear map W -> (tr_Z W, tr_X W) as a matrix, with its pseudo-inverse."""
    n = dx * dy * dz
    rows = []
    basis = np.eye(n * n).reshape(n * n, n, n)
    for b in basis:
        t = b.reshape(dx, dy, dz, dx, dy, dz)
        rows.append(np.concatenate([np.einsum("abcdec->abde", t).ravel(),
                                    np.einsum("abcaef->bcef", t).ravel()]))
    lmat = np.array(rows).T
    return lmat, np.linalg.pinv(lmat)


def _search_extension(w_xy: Operator, r_yz: Operator, iters: int, seed: int):
    dx, dy = w_xy.dims
    dz = r_yz.dims[1]
    w_x = partial_trace(w_xy, [0])
    r_y = partial_trace(r_yz, [0])
    r_z = partial_trace(r_yz, [1])
    # particular solution of both marginal constraints
    base = (tensor([w_xy, r_z]).mat + tensor([w_x, r_yz]).mat - tensor([w_x, r_y, r_z]).mat)
    target = np.concatenate([w_xy.mat.ravel(), r_yz.mat.ravel()])
    lmat, lpinv = _affine_extension_projector(dx, dy, dz)

    def to_affine(m):
        x = m.ravel()
        x = x - lpinv @ (lmat @ x - target)
        m = x.reshape(m.shape)
        return (m + m.conj().T) / 2

    dims = (dx, dy, dz)
    candidates = [Operator(to_affine(base), dims)]
    m = candidates[0].mat
    for _ in range(iters):
        vals, vecs = np.linalg.eigh(m)
        m = to_affine((vecs * np.clip(vals, 0, None)) @ vecs.conj().T)
    candidates.append(Operator(m, dims))
    for k, cand in enumerate(candidates):
        st = certify_popt(cand, seed=seed + k)
        if st.certified:
            return cand, st, k
    return None, None, None


def check_extendibility_obstruction(omega_xy, rho_yz, witness: WitnessTrace | None = None,
                                    tol: float = MARGINAL_TOL, search_iters: int = 200,
                                    seed: int = 0) -> ExtendibilityVerdict:
    """Decide extendibility of ``(w_XY, r_YZ)`` where a certificate can be found.

    Order of checks: overlap mismatch; an extremal nonproduct input paired with
    another nonproduct input; a rank-2 restriction on Y under which ``w_XY``
    stays nonproduct while ``r_YZ`` becomes a nonproduct pure block; finally a
    constructive search whose candidate must certify as POPT.
    """
    w, r = _op(omega_xy), _op(rho_yz)
    if w.n_factors != 2 or r.n_factors != 2:
        raise ValueError("both inputs must be bipartite")
    if w.dims[1] != r.dims[0]:
        raise ValueError(f"shared factor dimension mismatch: {w.dims[1]} vs {r.dims[0]}")
    gap = float(np.linalg.norm(partial_trace(w, [1]).mat - partial_trace(r, [0]).mat))
    if gap > tol:
        return ExtendibilityVerdict(Verdict.OVERLAP_MISMATCH, dict(overlap_distance=gap))

    w_prod = is_product(w, [0], PRODUCT_TOL)
    r_prod = is_product(r, [0], PRODUCT_TOL)
    w_cls, r_cls = is_extremal_popt_heuristic(w), is_extremal_popt_heuristic(r)
    cert = dict(overlap_distance=gap,
                xy_product_distance=w_prod.distance, yz_product_distance=r_prod.distance,
                xy_extremality=w_cls.value, yz_extremality=r_cls.value)
    if not w_prod.is_product and not r_prod.is_product:
        # every applicable obstruction is recorded; the first one is the verdict's rule
        cases = []
        if w_cls is not Extremality.UNDECIDED or r_cls is not Extremality.UNDECIDED:
            cases.append(dict(case=2, extremal_side="XY" if w_cls is not Extremality.UNDECIDED
                              else "YZ",
                              rule="an extremal nonproduct marginal forces a product "
                                   "extension, contradicting the other nonproduct marginal"))
        if witness is not None:
            candidates = [(witness.pair, witness.restriction.projector)]
        else:
            _, basis = _marginal_eigenbasis(w)
            candidates = [((i, j), projector(basis[:, i]) + projector(basis[:, j]))
                          for i, j in itertools.combinations(range(w.dims[1]), 2)]
        tried = []
        for pair, proj in candidates:
            block = _block_structure(w, r, proj, pair)
            tried.append(block)
            if block["applies"]:
                cases.append(dict(case=3, restriction=block,
                                  rule="a rank-2 restriction on Y leaves a nonproduct XY block "
                                       "and a pure nonproduct YZ block, which cannot share an "
                                       "extension"))
                break
        if cases:
            cert.update(cases[0])
            cert["applicable_cases"] = cases
            return ExtendibilityVerdict(Verdict.NOT_EXTENDIBLE_CERTIFIED, cert)
        cert["restrictions_tried"] = tried

    # constructive attempts
    if w_prod.is_product or r_prod.is_product:
        if w_prod.is_product:
            cand = tensor([partial_trace(w, [0]), r])
            how = "w_X (x) r_YZ"
        else:
            cand = tensor([w, partial_trace(r, [1])])
            how = "w_XY (x) r_Z"
        st = certify_popt(cand, seed=seed)
        if st.certified:
            cert["construction"] = how
            return ExtendibilityVerdict(Verdict.EXTENDIBLE_WITNESSED, cert, cand)
    cand, st, k = _search_extension(w, r, search_iters, seed)
    if cand is not None:
        cert["construction"] = "affine particular solution" if k == 0 else (
            f"alternating projections ({search_iters} iterations)")
        return ExtendibilityVerdict(Verdict.EXTENDIBLE_WITNESSED, cert, cand)
    cert["construction"] = "search exhausted"
    return ExtendibilityVerdict(Verdict.UNDECIDED, cert)


def classical_contrast(omega_xy: POPTState, rho_yz: POPTState) -> ClassicalExtension:
    """Classical extension of the diagonal valuations in the standard product context."""
    dx, dy = omega_xy.dims
    dz = rho_yz.dims[1]
    pc_xy = ProductContext((Context.standard(dx), Context.standard(dy)))
    pc_yz = ProductContext((Context.standard(dy), Context.standard(dz)))
    v_xy = valuation_of(omega_xy, pc_xy)
    v_yz = valuation_of(rho_yz, pc_yz)
    p_xy = FiniteDist(FiniteSet("XY", dx * dy, (dx, dy)), v_xy.weights.ravel())
    p_yz = FiniteDist(FiniteSet("YZ", dy * dz, (dy, dz)), v_yz.weights.ravel())
    return classical_extension(p_xy, p_yz, tol=1e-10)


# --- triviality of chains ------------------------------------------------------------------


@dataclass
class ChainReport:
    state: Operator
    cut_distances: list[float]      # cut k separates factors [0, k) from [k, n)
    all_cuts_product: bool
    steps: list[dict]


def constant_kernel_chain(states: Sequence, entangler=None, tol: float = PRODUCT_TOL) -> ChainReport:
    """Chain extended only by constant kernels ``f_v``, each appending a fixed state.

    With an ``entangler`` on the first two positions, that block is kept intact
    and only the cuts from position 2 onward are required to be product.
    """
    steps = []
    if entangler is not None:
        current = _op(entangler)
        start = 2
    elif states:
        current = _op(states[0])
        states = states[1:]
        start = 1
    else:
        return ChainReport(Operator(np.ones((1, 1)), ()), [], True, [])
    for v in states:
        v = _op(v)
        prev = current
        current = tensor([prev, v])
        steps.append(dict(position=current.n_factors - 1,
                          w=list(prev.dims), w_new=list(v.dims),
                          product_distance=is_product(current, range(prev.n_factors)).distance))
    n = current.n_factors
    cuts = [is_product(current, range(k)).distance for k in range(1, n)]
    required = [d for k, d in zip(range(1, n), cuts) if k >= start]
    return ChainReport(current, cuts, all(d <= tol for d in required), steps)


@dataclass
class ObstructionReport:
    verdict: ExtendibilityVerdict
    steps: list[dict]

    @property
    def certified(self) -> bool:
        return self.verdict.status is Verdict.NOT_EXTENDIBLE_CERTIFIED


def refute_correlating_extension(omega_xy, claimed_output, tol: float = MARGINAL_TOL
                                 ) -> ObstructionReport:
    """Show that no marginal-preserving kernel maps ``rho_Y`` to ``claimed_output``.

    (a) a pure correlated marginal forces any extension to split off the third
    party; (b) a kernel producing the nonproduct ``claimed_output`` from
    ``rho_Y``; (c) the same kernel applied to ``w_XY`` would give a tripartite
    state with marginals ``w_XY`` and ``claimed_output``, which (a) forbids.
    """
    w, c = _op(omega_xy), _op(claimed_output)
    if w.n_factors != 2 or c.n_factors != 2:
        raise HypothesisError("both inputs must be bipartite")
    cls = is_extremal_popt_heuristic(w)
    if cls is not Extremality.EXTREMAL_PURE:
        raise HypothesisError("omega_XY is not a pure state")
    wp = is_product(w, [0], PRODUCT_TOL)
    if wp.is_product:
        raise HypothesisError("omega_XY is a product state")
    cp = is_product(c, [0], PRODUCT_TOL)
    if cp.is_product:
        raise HypothesisError("claimed output is a product state; constant kernels produce it")
    if w.dims[1] != c.dims[0]:
        raise HypothesisError("shared factor dimension mismatch")
    gap = float(np.linalg.norm(partial_trace(w, [1]).mat - partial_trace(c, [0]).mat))
    if gap > tol:
        raise HypothesisError(f"claimed output has the wrong Y-marginal (distance {gap:.3g})")
    verdict = check_extendibility_obstruction(w, c, tol=tol)
    steps = [
        dict(step="a", claim="pure correlated XY forces a product third party",
             xy_extremality=cls.value, xy_product_distance=wp.distance),
        dict(step="b", claim="kernel creates correlation from rho_Y",
             yz_product_distance=cp.distance, marginal_gap=gap),
        dict(step="c", claim="extension of omega_XY by the same kernel has both marginals",
             verdict=verdict.status.value),
    ]
    return ObstructionReport(verdict, steps)


def random_nonproduct_popt(dims: Sequence[int], rng: np.random.Generator,
                           kind: str = "density") -> Operator:
    """Random nonproduct POPT operator: a density or the partial transpose of a pure state."""
    if kind == "density":
        return random_density(dims, rng)
    if kind == "pt_pure":
        return partial_transpose(random_pure(dims, rng), 1)
    if kind == "pure":
        return random_pure(dims, rng)
    raise ValueError(f"unknown kind {kind!r}")
