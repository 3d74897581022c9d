"""Contexts: unital commutative subalgebras given by projective decompositions of 1.

A context on a ``d``-dimensional factor is stored as its minimal projections;
the algebra itself is their linear span. The poset of all contexts is never
enumerated, only explicitly supplied contexts are compared and combined.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linalg import DEFAULT_TOL, Operator, canonical_basis, haar_unitary, projector

SPAN_CUTOFF = 1e-9


class SpanMembershipError(ValueError):
    pass


def _rank(p: np.ndarray) -> int:
    return int(round(np.trace(p).real))


@dataclass(frozen=True, eq=False)
class Context:
    dim: int
    projectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        projs = []
        for p in self.projectors:
            p = np.array(p, dtype=complex)
            p.flags.writeable = False
            projs.append(p)
        object.__setattr__(self, "projectors", tuple(projs))
        self.validate()

    def validate(self, tol: float = DEFAULT_TOL) -> None:
        d = self.dim
        if not self.projectors:
            raise ValueError("a context needs at least one projector")
        total = np.zeros((d, d), dtype=complex)
        for i, p in enumerate(self.projectors):
            if p.shape != (d, d):
                raise ValueError(f"projector {i} has shape {p.shape}, expected {(d, d)}")
            if np.linalg.norm(p - p.conj().T) > tol:
                raise ValueError(f"projector {i} is not Hermitian")
            if np.linalg.norm(p @ p - p) > tol * max(1, d):
                raise ValueError(f"projector {i} is not idempotent")
            if np.trace(p).real < 0.5:
                raise ValueError(f"projector {i} is zero")
            for j in range(i):
                if np.linalg.norm(p @ self.projectors[j]) > tol * max(1, d):
                    raise ValueError(f"projectors {j} and {i} are not orthogonal")
            total += p
        if np.linalg.norm(total - np.eye(d)) > tol * max(1, d):
            raise ValueError("projectors do not sum to the identity")

    def __len__(self):
        return len(self.projectors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(_rank(p) for p in self.projectors)

    @classmethod
    def from_basis(cls, u: np.ndarray, groups: Sequence[Sequence[int]] | None = None) -> "Context":
        """Context spanned by the columns of unitary ``u``, optionally coarse-grained."""
        u = np.asarray(u, dtype=complex)
        d = u.shape[0]
        groups = [[i] for i in range(d)] if groups is None else groups
        projs = [sum(projector(u[:, i]) for i in g) for g in groups]
        return cls(d, tuple(projs))

    @classmethod
    def trivial(cls, d: int) -> "Context":
        return cls(d, (np.eye(d, dtype=complex),))

    @classmethod
    def standard(cls, d: int) -> "Context":
        return cls.from_basis(np.eye(d))

    def canonical(self) -> "Context":
        """Projectors sorted by descending rank, ties by their canonical leading vector."""
        return Context(self.dim, tuple(sorted(self.projectors, key=_projector_key)))

    def span_basis(self) -> np.ndarray:
        """Hilbert-Schmidt orthonormal basis of the span, one flattened matrix per row."""
        return np.array([p.ravel() / np.sqrt(_rank(p)) for p in self.projectors])

    def coefficients(self, a: np.ndarray) -> np.ndarray:
        """Expansion coefficients c with ``a = sum_i c_i P_i`` (least squares)."""
        a = np.asarray(a, dtype=complex)
        return np.array([np.trace(p @ a) / _rank(p) for p in self.projectors])

    def span_residual(self, a: np.ndarray) -> float:
        a = np.asarray(a, dtype=complex)
        c = self.coefficients(a)
        return float(np.linalg.norm(a - sum(ci * p for ci, p in zip(c, self.projectors))))

    def contains(self, a: np.ndarray, tol: float = SPAN_CUTOFF) -> bool:
        a = np.asarray(a, dtype=complex)
        return self.span_residual(a) <= tol * max(1.0, np.linalg.norm(a))

    def same_as(self, other: "Context", tol: float = DEFAULT_TOL) -> bool:
        return context_leq(self, other, tol) and context_leq(other, self, tol)

    def key(self, decimals: int = 8) -> tuple:
        """Hashable key of the canonical form, used to index value tables."""
        c = self.canonical()
        return (self.dim,) + tuple(
            tuple(np.round(p.ravel().view(float), decimals) + 0.0) for p in c.projectors)

    def __repr__(self):
        return f"Context(dim={self.dim}, ranks={self.ranks})"


def _projector_key(p: np.ndarray):
    lead = canonical_basis(p)[:, 0]
    return (-_rank(p),) + tuple(
        x for z in lead for x in (-round(z.real, 9) + 0.0, -round(z.imag, 9) + 0.0))


@dataclass(frozen=True, eq=False)
class ProductContext:
    components: tuple[Context, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("a product context needs at least one component")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.dim for c in self.components)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.components)

    def joint(self) -> Context:
        return product_context(self.components)

    def index_tuples(self):
        return itertools.product(*(range(len(c)) for c in self.components))

    def projector(self, idx: Sequence[int]) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for c, i in zip(self.components, idx):
            out = np.kron(out, c.projectors[i])
        return out

    def key(self) -> tuple:
        return tuple(c.key() for c in self.components)

    def restrict(self, factors: Sequence[int]) -> "ProductContext":
        return ProductContext(tuple(self.components[i] for i in factors))


def context_leq(c: Context, d: Context, tol: float = SPAN_CUTOFF) -> bool:
    """``c <= d`` iff every projector of ``c`` lies in the span of ``d``."""
    if c.dim != d.dim:
        raise ValueError(f"dimension mismatch: {c.dim} vs {d.dim}")
    return all(d.contains(p, tol) for p in c.projectors)


def product_leq(pc: ProductContext, pd: ProductContext, tol: float = SPAN_CUTOFF) -> bool:
    if pc.dims != pd.dims:
        raise ValueError(f"dimension mismatch: {pc.dims} vs {pd.dims}")
    return all(context_leq(a, b, tol) for a, b in zip(pc.components, pd.components))


def context_intersection(c: Context, d: Context, tol: float = DEFAULT_TOL) -> Context:
    """Largest context contained in both ``c`` and ``d``.

    A projection in both algebras is a sum of projectors of ``c`` and also a
    sum of projectors of ``d``; such a sum must absorb every projector of the
    other context that it overlaps. The minimal projections of the
    intersection are therefore the connected components of the overlap graph
    between the two projector lists.
    """
    if c.dim != d.dim:
        raise ValueError(f"dimension mismatch: {c.dim} vs {d.dim}")
    m = len(c)
    parent = list(range(m + len(d)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, p in enumerate(c.projectors):
        for j, q in enumerate(d.projectors):
            if np.linalg.norm(p @ q) > tol * max(1, c.dim):
                parent[find(i)] = find(m + j)
    comps: dict[int, list[int]] = {}
    for i in range(m):
        comps.setdefault(find(i), []).append(i)
    projs = tuple(sum(c.projectors[i] for i in idx) for idx in comps.values())
    return Context(c.dim, projs).canonical()


def product_context(cs: Sequence[Context]) -> Context:
    """Context of all tensor products of component projectors, lexicographic order."""
    cs = list(cs)
    if not cs:
        raise ValueError("product_context needs a nonempty list")
    if len(cs) == 1:
        return cs[0]
    projs = []
    for combo in itertools.product(*(c.projectors for c in cs)):
        out = np.ones((1, 1), dtype=complex)
        for p in combo:
            out = np.kron(out, p)
        projs.append(out)
    return Context(int(np.prod([c.dim for c in cs])), tuple(projs))


def coproduct_injection(i: int, a: np.ndarray, cs: Sequence[Context],
                        tol: float = SPAN_CUTOFF) -> Operator:
    """Identity-padded embedding ``1 (x) .. (x) a (x) .. (x) 1`` of ``a`` in span(cs[i])."""
    a = np.asarray(a, dtype=complex)
    if not cs[i].contains(a, tol):
        raise SpanMembershipError(
            f"operator is not in the span of context {i} (residual {cs[i].span_residual(a):.3g})")
    out = np.ones((1, 1), dtype=complex)
    for k, c in enumerate(cs):
        out = np.kron(out, a if k == i else np.eye(c.dim))
    return Operator(out, tuple(c.dim for c in cs))


@dataclass(frozen=True, eq=False)
class Character:
    """Point of the Gelfand spectrum of a context: ``a -> tr(P a) / tr(P)``."""

    proj: np.ndarray

    def __call__(self, a: np.ndarray) -> complex:
        return complex(np.trace(self.proj @ np.asarray(a)) / np.trace(self.proj).real)


def context_characters(c: Context) -> list[Callable[[np.ndarray], complex]]:
    return [Character(p) for p in c.projectors]


def random_context(d: int, rng: np.random.Generator, n_blocks: int | None = None) -> Context:
    """Context from a Haar basis, coarse-grained into ``n_blocks`` contiguous blocks."""
    u = haar_unitary(d, rng)
    if n_blocks is None or n_blocks >= d:
        return Context.from_basis(u)
    cuts = np.sort(rng.choice(np.arange(1, d), size=n_blocks - 1, replace=False))
    groups = [list(g) for g in np.split(np.arange(d), cuts)]
    return Context.from_basis(u, groups)


def random_span_element(c: Context, rng: np.random.Generator) -> np.ndarray:
    return sum(x * p for x, p in zip(rng.normal(size=len(c)), c.projectors))
