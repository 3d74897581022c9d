"""Contextual integrals, unentangled frame functions and per-context valuations.

A POPT operator ``w`` defines the integral ``a -> tr(w a)`` on every product
context; conversely the values on product projectors determine ``w`` uniquely,
which :func:`reconstruct_state` realizes as a linear solve.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .contexts import Context, ProductContext, SpanMembershipError, product_leq
from .linalg import DEFAULT_TOL, Operator, as_operator, ket_tensor, projector
from .popt import NotCertifiedError, POPTState, product_expectation

RECONSTRUCT_TOL = 1e-8
GLEASON_WARNING = "factor dimension below 3: uniqueness of the integral/state correspondence is not guaranteed"


class ReconstructionError(ValueError):
    pass


class MissingDirectionsError(ReconstructionError):
    def __init__(self, missing: list[str], rank: int, needed: int):
        self.missing = missing
        self.rank = rank
        self.needed = needed
        super().__init__(f"value set has rank {rank} < {needed}; missing directions: "
                         + ", ".join(missing))


class InconsistentValuesError(ReconstructionError):
    pass


def _op_of(state) -> Operator:
    return state.op if isinstance(state, POPTState) else as_operator(state)


def _require_certified(state):
    if not isinstance(state, POPTState) or not state.certified:
        raise NotCertifiedError("operation requires a certified POPT state")


def dimension_warnings(dims: Sequence[int]) -> list[str]:
    return [GLEASON_WARNING] if any(d < 3 for d in dims) else []


def integral_evaluate(state, pc: ProductContext, a: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """``tr(w a)`` for Hermitian ``a`` in the span of the product context."""
    w = _op_of(state)
    a = np.asarray(a, dtype=complex)
    if np.linalg.norm(a - a.conj().T) > tol * max(1.0, np.linalg.norm(a)):
        raise ValueError("integrand must be Hermitian")
    if pc.dims != w.dims:
        raise ValueError(f"context dims {pc.dims} do not match state dims {w.dims}")
    joint = pc.joint()
    if not joint.contains(a):
        raise SpanMembershipError(
            f"integrand is outside the context span (residual {joint.span_residual(a):.3g})")
    val = np.trace(w.mat @ a)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"integral has imaginary part {val.imag:.3g}")
    return float(val.real)


# --- table mode ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TableRecord:
    context: ProductContext
    element: np.ndarray
    value: float


@dataclass(frozen=True, eq=False)
class ContextualIntegral:
    """An integral given either by a POPT state or by a finite table of values."""

    dims: tuple[int, ...]
    state: POPTState | Operator | None = None
    records: tuple[TableRecord, ...] = ()

    @property
    def mode(self) -> str:
        return "evaluation" if self.state is not None else "table"

    def evaluate(self, pc: ProductContext, a: np.ndarray) -> float:
        if self.state is not None:
            return integral_evaluate(self.state, pc, a)
        group = [r for r in self.records if r.context.key() == pc.key()]
        if not group:
            raise KeyError("context not present in the table")
        fit = _fit_group(group)
        c = group[0].context.joint().coefficients(a).real
        if not _determined(fit.gram, c):
            raise KeyError("table does not determine the integral on this element")
        return float(c @ fit.weights)


def integral_table_from_state(state, contexts: Iterable[ProductContext],
                              rng: np.random.Generator, n_random: int = 2) -> ContextualIntegral:
    """Table of values on each context's projectors, the identity and random span elements."""
    w = _op_of(state)
    records = []
    for pc in contexts:
        joint = pc.joint()
        elements = list(joint.projectors) + [np.eye(joint.dim, dtype=complex)]
        for _ in range(n_random):
            c = rng.normal(size=len(joint))
            elements.append(sum(ci * p for ci, p in zip(c, joint.projectors)))
            elements.append(sum(ci * p for ci, p in zip(np.abs(c), joint.projectors)))
        for a in elements:
            records.append(TableRecord(pc, a, float(np.trace(w.mat @ a).real)))
    return ContextualIntegral(w.dims, None, tuple(records))


@dataclass
class _GroupFit:
    weights: np.ndarray
    gram: np.ndarray      # projector onto the row space of the coefficient matrix
    residual: float
    coeffs: np.ndarray
    values: np.ndarray


def _fit_group(group: Sequence[TableRecord]) -> _GroupFit:
    joint = group[0].context.joint()
    coeffs = np.array([joint.coefficients(r.element).real for r in group])
    values = np.array([r.value for r in group])
    weights, *_ = np.linalg.lstsq(coeffs, values, rcond=None)
    pinv = np.linalg.pinv(coeffs, rcond=1e-10)
    resid = float(np.max(np.abs(coeffs @ weights - values))) if len(values) else 0.0
    return _GroupFit(weights, pinv @ coeffs, resid, coeffs, values)


def _determined(rowspace: np.ndarray, c: np.ndarray, tol: float = 1e-8) -> bool:
    return bool(np.linalg.norm(c - rowspace @ c) <= tol * max(1.0, np.linalg.norm(c)))


@dataclass(frozen=True)
class Violation:
    kind: str           # span | hermiticity | normalization | linearity | positivity | naturality
    contexts: tuple[int, ...]
    detail: str
    deviation: float = 0.0


@dataclass
class FamilyReport:
    n_contexts: int
    n_records: int
    comparable_pairs: int
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def integral_check_family(table: ContextualIntegral, tol: float = 1e-9) -> FamilyReport:
    """Check normalization, linearity, positivity and naturality of a value table.

    Violations are collected, never raised. Context indices in the report
    refer to the order in which contexts first appear in the table.
    """
    if not table.records:
        raise ValueError("table is empty")
    groups: dict[tuple, list[TableRecord]] = {}
    for r in table.records:
        groups.setdefault(r.context.key(), []).append(r)
    keys = list(groups)
    report = FamilyReport(len(keys), len(table.records), 0,
                          warnings=dimension_warnings(table.dims))
    fits: dict[int, _GroupFit] = {}
    for gi, key in enumerate(keys):
        group = groups[key]
        joint = group[0].context.joint()
        clean = []
        for r in group:
            a = np.asarray(r.element, dtype=complex)
            if np.linalg.norm(a - a.conj().T) > tol * max(1.0, np.linalg.norm(a)):
                report.violations.append(Violation("hermiticity", (gi,), "non-Hermitian element"))
            elif not joint.contains(a):
                report.violations.append(Violation(
                    "span", (gi,), "element outside context span", joint.span_residual(a)))
            else:
                clean.append(r)
        if not clean:
            continue
        fit = _fit_group(clean)
        fits[gi] = fit
        if fit.residual > tol:
            report.violations.append(Violation(
                "linearity", (gi,), "values are not linear in the element", fit.residual))
        ones = np.ones(len(joint))
        if _determined(fit.gram, ones):
            norm = float(ones @ fit.weights)
            if abs(norm - 1) > tol:
                report.violations.append(Violation(
                    "normalization", (gi,), f"integral of identity is {norm:.12g}", abs(norm - 1)))
        else:
            report.warnings.append(f"context {gi}: normalization not determined by the table")
        for row, val in zip(fit.coeffs, fit.values):
            if np.all(row >= -tol) and val < -tol:
                report.violations.append(Violation(
                    "positivity", (gi,), "negative value on a positive element", -val))
        for j in range(len(joint)):
            e = np.zeros(len(joint))
            e[j] = 1
            if _determined(fit.gram, e) and fit.weights[j] < -tol:
                report.violations.append(Violation(
                    "positivity", (gi,), f"negative value {fit.weights[j]:.3g} on projector {j}",
                    -fit.weights[j]))

    for gi, gj in itertools.permutations(range(len(keys)), 2):
        if gi not in fits or gj not in fits:
            continue
        small, large = groups[keys[gi]][0].context, groups[keys[gj]][0].context
        if small.dims != large.dims or not product_leq(small, large):
            continue
        report.comparable_pairs += 1
        large_joint = large.joint()
        worst = 0.0
        for r in groups[keys[gi]]:
            c = large_joint.coefficients(r.element).real
            if _determined(fits[gj].gram, c):
                worst = max(worst, abs(float(c @ fits[gj].weights) - r.value))
        if worst > tol:
            report.violations.append(Violation(
                "naturality", (gi, gj),
                "values on the smaller algebra disagree across the inclusion", worst))
    return report


# --- frame functions and reconstruction ---------------------------------------------


@dataclass(frozen=True, eq=False)
class FrameFunction:
    """``v_1 (x) ... (x) v_n -> tr((p_1 (x) ... (x) p_n) w)`` on product unit vectors."""

    op: Operator
    weight: float = 1.0

    @property
    def dims(self) -> tuple[int, ...]:
        return self.op.dims

    def __call__(self, vectors: Sequence[np.ndarray]) -> float:
        if len(vectors) != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} local vectors")
        return product_expectation(self.op, [np.asarray(v) for v in vectors])

    def basis_sum(self, bases: Sequence[np.ndarray]) -> float:
        """Sum over the product basis formed from the columns of each local unitary."""
        total = 0.0
        for cols in itertools.product(*(range(u.shape[1]) for u in bases)):
            total += self([u[:, c] for u, c in zip(bases, cols)])
        return total


def frame_function_from_state(state: POPTState) -> FrameFunction:
    _require_certified(state)
    return FrameFunction(state.op)


def ic_vectors(d: int) -> list[tuple[str, np.ndarray]]:
    """The ``d**2`` local vectors: basis, (|i>+|j>)/sqrt2 and (|i>+i|j>)/sqrt2 for i<j."""
    e = np.eye(d, dtype=complex)
    out = [(f"d{i}", e[i]) for i in range(d)]
    for i, j in itertools.combinations(range(d), 2):
        out.append((f"p{i}{j}", (e[i] + e[j]) / np.sqrt(2)))
    for i, j in itertools.combinations(range(d), 2):
        out.append((f"y{i}{j}", (e[i] + 1j * e[j]) / np.sqrt(2)))
    return out


def ic_contexts(d: int) -> list[Context]:
    """Maximal contexts covering every informationally complete projector of one factor."""
    e = np.eye(d, dtype=complex)
    out = [Context.standard(d)]
    for phase in (1, 1j):
        for i, j in itertools.combinations(range(d), 2):
            u = e.copy()
            u[:, i] = (e[i] + phase * e[j]) / np.sqrt(2)
            u[:, j] = (e[i] - phase * e[j]) / np.sqrt(2)
            out.append(Context.from_basis(u))
    return out


def _herm_labels(n: int) -> list[str]:
    labels = [f"diag[{j}]" for j in range(n)]
    iu = np.triu_indices(n, 1)
    labels += [f"re[{j},{k}]" for j, k in zip(*iu)]
    labels += [f"im[{j},{k}]" for j, k in zip(*iu)]
    return labels


def _herm_row(a: np.ndarray) -> np.ndarray:
    """Row ``r`` with ``tr(a w) = r . x`` where ``x`` are the real coordinates of ``w``."""
    iu = np.triu_indices(a.shape[0], 1)
    return np.concatenate([np.real(np.diag(a)), 2 * np.real(a[iu]), 2 * np.imag(a[iu])])


def _herm_from_coords(x: np.ndarray, n: int) -> np.ndarray:
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    w = np.diag(x[:n]).astype(complex)
    w[iu] = x[n:n + m] + 1j * x[n + m:]
    w[(iu[1], iu[0])] = x[n:n + m] - 1j * x[n + m:]
    return w


def ic_product_records(f: FrameFunction) -> list[tuple[np.ndarray, float]]:
    locals_ = [ic_vectors(d) for d in f.dims]
    out = []
    for combo in itertools.product(*locals_):
        vecs = [v for _, v in combo]
        out.append((projector(ket_tensor(vecs)), f(vecs)))
    return out


def reconstruct_state(source, dims: Sequence[int] | None = None,
                      tol: float = RECONSTRUCT_TOL) -> Operator:
    """Unique Hermitian operator reproducing the supplied product-projector values.

    ``source`` is a :class:`FrameFunction` (evaluated on the product
    informationally complete family), a table-mode :class:`ContextualIntegral`,
    or a sequence of ``(element, value)`` pairs together with ``dims``.
    """
    if isinstance(source, FrameFunction):
        dims = source.dims
        pairs = ic_product_records(source)
    elif isinstance(source, ContextualIntegral):
        dims = source.dims
        pairs = [(r.element, r.value) for r in source.records]
    else:
        if dims is None:
            raise ValueError("dims are required when reconstructing from value pairs")
        pairs = list(source)
    dims = tuple(dims)
    n = int(np.prod(dims))
    if not pairs:
        raise MissingDirectionsError(["all"], 0, n * n)
    rows = np.array([_herm_row(np.asarray(a, dtype=complex)) for a, _ in pairs])
    vals = np.array([float(v) for _, v in pairs])
    _, s, vh = np.linalg.svd(rows)
    rank = int(np.sum(s > 1e-10 * s[0]))
    if rank < n * n:
        labels = _herm_labels(n)
        null = vh[rank:]
        missing = sorted({labels[int(np.argmax(np.abs(v)))] for v in null})
        raise MissingDirectionsError(missing, rank, n * n)
    x, *_ = np.linalg.lstsq(rows, vals, rcond=None)
    resid = float(np.max(np.abs(rows @ x - vals)))
    if resid > tol:
        raise InconsistentValuesError(f"values are inconsistent: residual {resid:.3g} > {tol:g}")
    return Operator(_herm_from_coords(x, n), dims)


# --- valuations -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContextValuation:
    context: ProductContext
    weights: np.ndarray   # shape == context.shape

    def measure(self, subset: Iterable[Sequence[int]]) -> float:
        """Valuation of a set of characters, given as index tuples."""
        return float(sum(self.weights[tuple(i)] for i in set(map(tuple, subset))))

    def marginal(self, factors: Sequence[int]) -> np.ndarray:
        drop = tuple(i for i in range(self.weights.ndim) if i not in factors)
        return self.weights.sum(axis=drop)

    def check_axioms(self, subsets: Sequence[Iterable[Sequence[int]]], tol: float = 1e-12) -> float:
        """Largest violation of v(0)=0, v(all)=1, monotonicity and the modular law."""
        everything = list(self.context.index_tuples())
        worst = max(abs(self.measure([])), abs(self.measure(everything) - 1))
        sets = [set(map(tuple, s)) for s in subsets]
        for u, v in itertools.product(sets, repeat=2):
            mu, mv = self.measure(u), self.measure(v)
            worst = max(worst, abs(mu + mv - self.measure(u | v) - self.measure(u & v)))
            if u <= v:
                worst = max(worst, mu - mv)
        return worst


def valuation_of(state: POPTState, pc: ProductContext, tol: float = DEFAULT_TOL) -> ContextValuation:
    _require_certified(state)
    w = state.op
    if pc.dims != w.dims:
        raise ValueError(f"context dims {pc.dims} do not match state dims {w.dims}")
    weights = np.empty(pc.shape)
    for idx in pc.index_tuples():
        weights[idx] = np.trace(w.mat @ pc.projector(idx)).real
    if weights.min() < -tol:
        raise ValueError(f"negative weight {weights.min():.3g} on a product projector")
    weights = np.where(weights < 0, 0.0, weights)
    if abs(weights.sum() - 1) > 1e-8:
        raise ValueError(f"weights sum to {weights.sum():.12g}")
    return ContextValuation(pc, weights)


def _refinement_map(fine: Context, coarse: Context, tol: float = DEFAULT_TOL) -> list[int]:
    out = []
    for p in fine.projectors:
        hits = [j for j, q in enumerate(coarse.projectors)
                if abs(np.trace(p @ q).real - np.trace(p).real) <= tol * max(1, fine.dim)]
        if len(hits) != 1:
            raise ValueError("contexts are not comparable: coarser context does not contain "
                             "every finer projector")
        out.append(hits[0])
    return out


def valuation_pushforward(v: ContextValuation, coarser: ProductContext) -> ContextValuation:
    """Restrict a valuation along the inclusion ``coarser <= v.context``."""
    if coarser.dims != v.context.dims:
        raise ValueError("dimension mismatch")
    maps = [_refinement_map(f, c) for f, c in zip(v.context.components, coarser.components)]
    out = np.zeros(coarser.shape)
    for idx in v.context.index_tuples():
        out[tuple(m[i] for m, i in zip(maps, idx))] += v.weights[idx]
    return ContextValuation(coarser, out)
