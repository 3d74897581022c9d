"""Dense complex tensor algebra on multi-factor operators.

Factors are addressed by 0-based position. Every function here is pure; an
:class:`Operator` is immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9


class NotHermitianError(ValueError):
    pass


class NotAStateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix tagged with its tensor-factor dimensions."""

    mat: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        mat = np.array(self.mat, dtype=complex)
        dims = tuple(int(d) for d in self.dims)
        side = int(np.prod(dims)) if dims else 1
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"operator must be a square matrix, got shape {mat.shape}")
        if mat.shape[0] != side:
            raise ValueError(f"matrix side {mat.shape[0]} does not match dims {dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"factor dimensions must be positive, got {dims}")
        mat.flags.writeable = False
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "dims", dims)

    @property
    def side(self) -> int:
        return self.mat.shape[0]

    @property
    def n_factors(self) -> int:
        return len(self.dims)

    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    def dag(self) -> "Operator":
        return Operator(self.mat.conj().T, self.dims)

    def scaled(self, c: complex) -> "Operator":
        return Operator(c * self.mat, self.dims)

    def hermiticity_error(self) -> float:
        return float(np.linalg.norm(self.mat - self.mat.conj().T))

    def is_hermitian(self, tol: float = DEFAULT_TOL) -> bool:
        return self.hermiticity_error() <= tol * max(1.0, np.linalg.norm(self.mat))

    def __repr__(self):
        return f"Operator(dims={self.dims})"


@dataclass(frozen=True, eq=False)
class UnitVector:
    entries: np.ndarray

    def __post_init__(self):
        v = np.array(self.entries, dtype=complex).ravel()
        if abs(np.linalg.norm(v) - 1.0) > 1e-8:
            raise ValueError(f"vector norm {np.linalg.norm(v):.3g} is not 1")
        v.flags.writeable = False
        object.__setattr__(self, "entries", v)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def as_operator(x, dims: Sequence[int] | None = None) -> Operator:
    if isinstance(x, Operator):
        return x
    x = np.asarray(x, dtype=complex)
    return Operator(x, tuple(dims) if dims is not None else (x.shape[0],))


def tensor(ops: Iterable[Operator]) -> Operator:
    """Kronecker product; ``dims`` is the concatenation of operand dims."""
    mat = np.ones((1, 1), dtype=complex)
    dims: tuple[int, ...] = ()
    for op in ops:
        op = as_operator(op)
        mat = np.kron(mat, op.mat)
        dims += op.dims
    return Operator(mat, dims)


def ket_tensor(vectors: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for v in vectors:
        out = np.kron(out, np.asarray(v, dtype=complex))
    return out


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def _check_factors(op: Operator, idx: Iterable[int]) -> list[int]:
    idx = sorted(set(int(i) for i in idx))
    for i in idx:
        if not 0 <= i < op.n_factors:
            raise IndexError(f"factor {i} out of range for dims {op.dims}")
    return idx


def partial_trace(op: Operator, keep: Iterable[int]) -> Operator:
    """Trace out every factor not in ``keep``; the kept factors stay in order."""
    keep = _check_factors(op, keep)
    if not keep:
        raise ValueError("keep set must be nonempty")
    n = op.n_factors
    t = op.mat.reshape(op.dims + op.dims)
    # einsum labels: row indices 0..n-1, column indices n..2n-1
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    reduced = np.einsum(t, row + col, out)
    kd = tuple(op.dims[i] for i in keep)
    side = int(np.prod(kd))
    return Operator(reduced.reshape(side, side), kd)


def partial_transpose(op: Operator, factor: int) -> Operator:
    (factor,) = _check_factors(op, [factor])
    n = op.n_factors
    t = op.mat.reshape(op.dims + op.dims)
    axes = list(range(2 * n))
    axes[factor], axes[n + factor] = axes[n + factor], axes[factor]
    return Operator(t.transpose(axes).reshape(op.side, op.side), op.dims)


def permute_factors(op: Operator, order: Sequence[int]) -> Operator:
    """Reorder tensor factors so that new factor k is old factor ``order[k]``."""
    n = op.n_factors
    if sorted(order) != list(range(n)):
        raise ValueError(f"{order} is not a permutation of {n} factors")
    t = op.mat.reshape(op.dims + op.dims)
    t = t.transpose(list(order) + [n + i for i in order])
    return Operator(t.reshape(op.side, op.side), tuple(op.dims[i] for i in order))


def embed(op: Operator, position: Sequence[int], dims: Sequence[int]) -> Operator:
    """Pad ``op`` with identities so it acts on factors ``position`` of ``dims``."""
    position = list(position)
    rest = [i for i in range(len(dims)) if i not in position]
    ident = np.eye(int(np.prod([dims[i] for i in rest])) if rest else 1)
    full = tensor([op, Operator(ident, tuple(dims[i] for i in rest))])
    current = position + rest
    inverse = [current.index(i) for i in range(len(dims))]
    return permute_factors(full, inverse)


def phase_normalize(v: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Rotate the global phase so the first entry above ``tol`` is real positive."""
    v = np.asarray(v, dtype=complex)
    nz = np.flatnonzero(np.abs(v) > tol)
    if nz.size == 0:
        return v
    a = v[nz[0]]
    return v * (abs(a) / a)


def canonical_basis(p: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Deterministic orthonormal basis (as columns) of the range of projector ``p``.

    Gram-Schmidt over the images of the standard basis vectors, in index order.
    The result depends only on ``p``, not on how ``p`` was obtained.
    """
    d = p.shape[0]
    rank = int(round(np.trace(p).real))
    cols: list[np.ndarray] = []
    for k in range(d):
        if len(cols) == rank:
            break
        w = p[:, k].astype(complex)
        for c in cols:
            w = w - c * np.vdot(c, w)
        nrm = np.linalg.norm(w)
        if nrm ** 2 > tol:
            cols.append(phase_normalize(w / nrm))
    if len(cols) != rank:
        raise ValueError("could not extract a basis for the projector range")
    return np.array(cols, dtype=complex).T.reshape(d, rank)


def cluster_eigenvalues(vals: np.ndarray, tol: float) -> list[list[int]]:
    """Group indices of descending eigenvalues whose neighbours differ by <= tol."""
    groups: list[list[int]] = []
    for i, v in enumerate(vals):
        if groups and abs(vals[groups[-1][-1]] - v) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def eigh(op, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition with descending eigenvalues and canonical vectors.

    Eigenvectors of a degenerate eigenvalue are replaced by the canonical basis
    of the eigenspace projector, so the output is reproducible for a given
    operator regardless of the solver's arbitrary choice inside the eigenspace.
    """
    mat = op.mat if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(mat)))
    if np.linalg.norm(mat - mat.conj().T) > tol * scale:
        raise NotHermitianError("eigh requires a Hermitian operator")
    h = (mat + mat.conj().T) / 2
    vals, vecs = np.linalg.eigh(h)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    out = np.empty_like(vecs)
    for group in cluster_eigenvalues(vals, tol * scale):
        block = vecs[:, group]
        if len(group) == 1:
            out[:, group[0]] = phase_normalize(block[:, 0])
        else:
            out[:, group] = canonical_basis(block @ block.conj().T)
    # recompute values from the canonical vectors to keep them consistent
    vals = np.real(np.einsum("ij,ik,kj->j", out.conj(), h, out))
    return vals, out


def min_eigenvalue(op) -> float:
    mat = op.mat if isinstance(op, Operator) else np.asarray(op)
    return float(np.linalg.eigvalsh((mat + mat.conj().T) / 2)[0])


def numerical_rank(op, tol: float = DEFAULT_TOL) -> int:
    mat = op.mat if isinstance(op, Operator) else np.asarray(op)
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * max(1.0, s[0])))


def purify(rho: Operator, rank_cutoff: float = DEFAULT_TOL,
           tol: float = DEFAULT_TOL) -> tuple[UnitVector, int]:
    """Purification sum_k sqrt(p_k) |psi_k> (x) |k> on ``d (x) r``.

    ``r`` counts eigenvalues above ``rank_cutoff``; the vector is returned
    flattened with the ancilla as the last (fastest) factor.
    """
    rho = as_operator(rho)
    vals, vecs = eigh(rho, tol)
    if vals[-1] < -tol:
        raise NotAStateError(f"eigenvalue {vals[-1]:.3g} below -{tol:g}")
    keep = vals > rank_cutoff
    r = int(np.sum(keep))
    if r == 0:
        raise NotAStateError("operator has no positive eigenvalues")
    if abs(rho.trace() - 1) > tol:
        raise NotAStateError(f"trace {rho.trace().real:.6g} is not 1")
    phi = vecs[:, keep] * np.sqrt(vals[keep])
    return UnitVector(phi.ravel()), r


# --- random and canonical fixtures -------------------------------------------------


def haar_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_density(dims: Sequence[int], rng: np.random.Generator,
                   rank: int | None = None) -> Operator:
    """Ginibre-ensemble density operator of the given rank (full rank by default)."""
    dims = tuple(dims)
    n = int(np.prod(dims))
    k = n if rank is None else rank
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    rho = g @ g.conj().T
    return Operator(rho / np.trace(rho).real, dims)


def random_pure(dims: Sequence[int], rng: np.random.Generator) -> Operator:
    dims = tuple(dims)
    v = haar_vector(int(np.prod(dims)), rng)
    return Operator(projector(v), dims)


def maximally_entangled(d: int) -> Operator:
    v = np.eye(d).ravel() / np.sqrt(d)
    return Operator(projector(v), (d, d))


def classically_correlated(d: int) -> Operator:
    diag = np.zeros(d * d)
    diag[[i * d + i for i in range(d)]] = 1.0 / d
    return Operator(np.diag(diag), (d, d))


def maximally_mixed(dims: Sequence[int]) -> Operator:
    n = int(np.prod(dims))
    return Operator(np.eye(n) / n, tuple(dims))


def swap(d: int) -> Operator:
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[i * d + j, j * d + i] = 1.0
    return Operator(s, (d, d))
