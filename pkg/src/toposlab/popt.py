"""Positive-over-pure-tensor (block-positive) states.

Positivity on product vectors is checked numerically: a see-saw minimizes
``<v_1 (x) ... (x) v_n| w |v_1 (x) ... (x) v_n>`` one factor at a time, and an
independent random-sampling pass guards the certificate.
"""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .linalg import (DEFAULT_TOL, NotHermitianError, Operator, as_operator, numerical_rank,
                     partial_trace, partial_transpose, permute_factors, tensor)

REFUTE_TOL = 1e-8
CERTIFY_TOL = 1e-9
SCHMIDT_CUTOFF = 1e-8


class Certification(str, enum.Enum):
    CERTIFIED_POPT = "CERTIFIED_POPT"
    REFUTED = "REFUTED"
    UNKNOWN = "UNKNOWN"


class Extremality(str, enum.Enum):
    EXTREMAL_PURE = "EXTREMAL_PURE"
    EXTREMAL_PT_PURE = "EXTREMAL_PT_PURE"
    UNDECIDED = "UNDECIDED"


class NotCertifiedError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OverlapResult:
    value: float
    vectors: tuple[np.ndarray, ...]
    restart: int
    converged: np.ndarray   # per restart
    values: np.ndarray      # final value per restart
    history: np.ndarray     # (sweeps + 1, restarts); row 0 is the initial value

    def product_vector(self) -> np.ndarray:
        out = np.ones(1, dtype=complex)
        for v in self.vectors:
            out = np.kron(out, v)
        return out


@dataclass(frozen=True, eq=False)
class POPTState:
    op: Operator
    status: Certification
    min_value: float
    witness: tuple[np.ndarray, ...]
    sample_min: float
    config: dict = field(default_factory=dict)

    @property
    def dims(self):
        return self.op.dims

    @property
    def certified(self) -> bool:
        return self.status is Certification.CERTIFIED_POPT

    def recheck(self) -> float:
        """Re-evaluate the stored witness against the operator."""
        return product_expectation(self.op, self.witness)


def product_expectation(op: Operator, vectors: Sequence[np.ndarray]) -> float:
    v = np.ones(1, dtype=complex)
    for x in vectors:
        v = np.kron(v, x)
    return float(np.real(np.vdot(v, op.mat @ v)))


def _haar_batch(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _contraction(n: int, k: int) -> str:
    rows = string.ascii_lowercase[:n]
    cols = string.ascii_uppercase[:n]
    ops = [f"z{rows[j]},z{cols[j]}" for j in range(n) if j != k]
    return f"{rows}{cols}," + ",".join(ops) + f"->z{rows[k]}{cols[k]}"


def _check_hermitian(op: Operator, tol: float):
    if not op.is_hermitian(tol):
        raise NotHermitianError(f"operator is not Hermitian (error {op.hermiticity_error():.3g})")


def min_product_overlap(op: Operator, restarts: int = 64, max_iters: int = 500,
                        tol: float = 1e-12, rng=0) -> OverlapResult:
    """Best local minimum of the product-vector expectation over seeded see-saw restarts.

    Each sweep updates factors in order 0..n-1, replacing one factor by the
    lowest eigenvector of the operator contracted against all the others, so
    the value never increases. A restart stops counting as running once a
    sweep improves it by less than ``tol``.
    """
    op = as_operator(op)
    _check_hermitian(op, DEFAULT_TOL)
    n = op.n_factors
    if n < 2:
        raise ValueError("min_product_overlap needs at least two factors; use an eigenvalue")
    rng = np.random.default_rng(rng)
    t = ((op.mat + op.mat.conj().T) / 2).reshape(op.dims + op.dims)
    vecs = [_haar_batch(rng, restarts, d) for d in op.dims]
    specs = [_contraction(n, k) for k in range(n)]

    def values(vs):
        m = np.einsum(specs[0], t, *[a for j in range(1, n) for a in (vs[j].conj(), vs[j])],
                      optimize=True)
        return np.real(np.einsum("zi,zij,zj->z", vs[0].conj(), m, vs[0]))

    current = values(vecs)
    history = [current]
    converged = np.zeros(restarts, dtype=bool)
    for _ in range(max_iters):
        for k in range(n):
            others = [a for j in range(n) if j != k for a in (vecs[j].conj(), vecs[j])]
            m = np.einsum(specs[k], t, *others, optimize=True)
            w, u = np.linalg.eigh((m + np.conj(np.swapaxes(m, 1, 2))) / 2)
            vecs[k] = u[:, :, 0]
            new = w[:, 0]
        converged |= (current - new) < tol
        current = new
        history.append(current)
        if converged.all():
            break
    best = int(np.argmin(current))  # argmin returns the lowest index on ties
    return OverlapResult(
        value=float(current[best]),
        vectors=tuple(v[best].copy() for v in vecs),
        restart=best,
        converged=converged,
        values=current,
        history=np.array(history),
    )


def sample_product_overlaps(op: Operator, n_samples: int, rng) -> tuple[float, tuple]:
    """Minimum over Haar-random product vectors; independent of the see-saw path."""
    op = as_operator(op)
    rng = np.random.default_rng(rng)
    factors = [_haar_batch(rng, n_samples, d) for d in op.dims]
    v = factors[0]
    for f in factors[1:]:
        v = (v[:, :, None] * f[:, None, :]).reshape(n_samples, -1)
    vals = np.real(np.sum(v.conj() * (v @ op.mat.T), axis=1))
    i = int(np.argmin(vals))
    return float(vals[i]), tuple(f[i].copy() for f in factors)


def certify_popt(op: Operator, restarts: int = 64, n_samples: int = 10000, seed: int = 0,
                 max_iters: int = 500, refute_tol: float = REFUTE_TOL,
                 certify_tol: float = CERTIFY_TOL, tol: float = DEFAULT_TOL) -> POPTState:
    op = as_operator(op)
    _check_hermitian(op, tol)
    if abs(op.trace() - 1) > tol:
        raise ValueError(f"trace {op.trace().real:.6g} is not 1")
    config = dict(restarts=restarts, n_samples=n_samples, seed=seed, max_iters=max_iters,
                  refute_tol=refute_tol, certify_tol=certify_tol)
    if op.n_factors < 2:
        # single factor: block positivity is plain positivity
        w, u = np.linalg.eigh((op.mat + op.mat.conj().T) / 2)
        status = (Certification.REFUTED if w[0] < -refute_tol
                  else Certification.CERTIFIED_POPT if w[0] >= -certify_tol
                  else Certification.UNKNOWN)
        wit = (u[:, 0],) if op.n_factors == 1 else ()
        return POPTState(op, status, float(w[0]), wit, float(w[0]), config)

    see_seed, sample_seed = np.random.SeedSequence(seed).spawn(2)
    res = min_product_overlap(op, restarts=restarts, max_iters=max_iters,
                              rng=np.random.default_rng(see_seed))
    smin, svecs = sample_product_overlaps(op, n_samples, np.random.default_rng(sample_seed))
    if res.value < -refute_tol or smin < -refute_tol:
        if res.value <= smin:
            value, witness = res.value, res.vectors
        else:
            value, witness = smin, svecs
        status = Certification.REFUTED
    else:
        value, witness = res.value, res.vectors
        ok = value >= -certify_tol and smin >= -certify_tol and res.converged.any()
        status = Certification.CERTIFIED_POPT if ok else Certification.UNKNOWN
    return POPTState(op, status, float(value), witness, smin, config)


class ProductTest(NamedTuple):
    is_product: bool
    distance: float


def _cut_order(op: Operator, cut: Sequence[int]) -> tuple[list[int], list[int]]:
    a = sorted(set(int(i) for i in cut))
    b = [i for i in range(op.n_factors) if i not in a]
    if not a or not b or any(not 0 <= i < op.n_factors for i in a):
        raise ValueError(f"invalid cut {list(cut)} for {op.n_factors} factors")
    return a, b


def product_approximation(op: Operator, cut: Sequence[int]) -> Operator:
    """``tr_B(w) (x) tr_A(w) / tr(w)`` laid out in the original factor order."""
    op = as_operator(op)
    a, b = _cut_order(op, cut)
    tr = op.trace()
    prod = tensor([partial_trace(op, a), partial_trace(op, b)]).scaled(1 / tr)
    order = a + b
    return permute_factors(prod, [order.index(i) for i in range(op.n_factors)])


def is_product(op: Operator, cut: Sequence[int], tol: float = 1e-10) -> ProductTest:
    op = as_operator(op)
    _check_hermitian(op, DEFAULT_TOL)
    delta = float(np.linalg.norm(op.mat - product_approximation(op, cut).mat))
    return ProductTest(delta <= tol, delta)


def operator_schmidt_values(op: Operator, cut: Sequence[int]) -> np.ndarray:
    """Singular values of the realigned operator across the cut A|B."""
    op = as_operator(op)
    a, b = _cut_order(op, cut)
    p = permute_factors(op, a + b)
    da = int(np.prod([op.dims[i] for i in a]))
    db = int(np.prod([op.dims[i] for i in b]))
    r = p.mat.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)
    return np.linalg.svd(r, compute_uv=False)


def is_nonproduct_schmidt(op: Operator, cut: Sequence[int],
                          cutoff: float = SCHMIDT_CUTOFF) -> bool:
    s = operator_schmidt_values(op, cut)
    return bool(s[0] > 0 and s.size > 1 and s[1] > cutoff * s[0])


def is_extremal_popt_heuristic(op: Operator, tol: float = DEFAULT_TOL) -> Extremality:
    """Recognize the two known extremal families: pure states and their partial transposes."""
    op = as_operator(op)
    if op.n_factors != 2:
        raise ValueError("extremality heuristic is defined for bipartite operators")
    if numerical_rank(op, tol) == 1:
        return Extremality.EXTREMAL_PURE
    if numerical_rank(partial_transpose(op, 1), tol) == 1:
        return Extremality.EXTREMAL_PT_PURE
    return Extremality.UNDECIDED
