"""Commutative monads, Kleisli morphisms and Markov chains.

:class:`Monad` is the abstract interface (unit, map, join, Fubini map) from
which strength, costrength, both double strengths, Kleisli composition and the
chain-extension morphism are derived. The Markov-chain builder and the lemma
checkers are written once against it. :class:`DistributionMonad` is the
shipped instance; another commutative monad with ``T1 = 1`` plugs in by
subclassing :class:`Monad` and supplying ``distance``.

The numpy layer (:class:`FiniteSet`, :class:`FiniteDist`, :class:`Kernel`)
holds concrete data. Product sets are flattened row-major, last factor
fastest.
"""

from __future__ import annotations

import abc
import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Sequence

import numpy as np

PROB_TOL = 1e-12


# --- generic monad interface ----------------------------------------------------------


class Monad(abc.ABC):
    @abc.abstractmethod
    def unit(self, x): ...

    @abc.abstractmethod
    def map(self, h: Callable, t): ...

    @abc.abstractmethod
    def join(self, tt): ...

    @abc.abstractmethod
    def fubini(self, t1, t2):
        """Canonical ``T X x T Y -> T(X x Y)`` of a commutative monad."""

    @abc.abstractmethod
    def distance(self, t1, t2) -> float: ...

    def bind(self, t, k: Callable):
        return self.join(self.map(k, t))

    def kleisli(self, g: Callable, f: Callable) -> Callable:
        """``g . f`` in the Kleisli category."""
        return lambda x: self.bind(f(x), g)

    def strength(self, x, t):
        return self.map(lambda y: (x, y), t)

    def costrength(self, t, y):
        return self.map(lambda x: (x, y), t)

    def dst(self, t1, t2):
        """``mu . T st . cst``: the left double strength."""
        return self.join(self.map(lambda pair: self.strength(pair[0], pair[1]),
                                  self.costrength(t1, t2)))

    def dst_prime(self, t1, t2):
        """``mu . T cst . st``: the right double strength."""
        return self.join(self.map(lambda pair: self.costrength(pair[0], pair[1]),
                                  self.strength(t1, t2)))

    def pair(self, f: Callable, g: Callable) -> Callable:
        """``i . <f, g>`` for Kleisli morphisms with a common domain."""
        return lambda x: self.fubini(f(x), g(x))

    def spatial(self, f: Callable, g: Callable) -> Callable:
        """Spatial composition ``f (x) g = i . (f x g)`` on pairs."""
        return lambda xy: self.fubini(f(xy[0]), g(xy[1]))

    def ext(self, f: Callable) -> Callable:
        """``i_{X,YxZ} . (eta_X x i_{Y,Z} . <eta_Y, f>)``, sending (x, y) to triples (x, y, z)."""
        def extend(xy):
            x, y = xy
            inner = self.fubini(self.unit(y), f(y))
            return self.map(lambda p: (p[0], p[1][0], p[1][1]), self.fubini(self.unit(x), inner))
        return extend


class Dist(Mapping):
    """Finitely supported weight function; hashable so it can itself be an outcome.

    Weights are stored as given: no normalization happens here.
    """

    __slots__ = ("_w", "_hash")

    def __init__(self, items: Iterable[tuple[Hashable, float]] | Mapping = ()):
        w: dict = {}
        pairs = items.items() if isinstance(items, Mapping) else items
        for k, v in pairs:
            w[k] = w.get(k, 0.0) + float(v)
        self._w = w
        self._hash = None

    def __getitem__(self, k):
        return self._w[k]

    def get(self, k, default=0.0):
        return self._w.get(k, default)

    def __iter__(self) -> Iterator:
        return iter(self._w)

    def __len__(self):
        return len(self._w)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._w.items()))
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Dist) and self._w == other._w

    def total(self) -> float:
        return sum(self._w.values())

    def __repr__(self):
        return f"Dist({self._w!r})"


class DistributionMonad(Monad):
    """Finite probability distribution monad on sets."""

    def unit(self, x):
        return Dist([(x, 1.0)])

    def map(self, h, t):
        return Dist((h(x), w) for x, w in t.items())

    def join(self, tt):
        return Dist((x, w * v) for inner, w in tt.items() for x, v in inner.items())

    def fubini(self, t1, t2):
        return Dist(((x, y), w * v) for x, w in t1.items() for y, v in t2.items())

    def bind(self, t, k):
        return Dist((y, w * v) for x, w in t.items() for y, v in k(x).items())

    def distance(self, t1, t2) -> float:
        keys = set(t1) | set(t2)
        return max((abs(t1.get(k, 0.0) - t2.get(k, 0.0)) for k in keys), default=0.0)


DIST = DistributionMonad()


# --- generic constructions --------------------------------------------------------------


def markov_chain(monad: Monad, initial, kernels: Sequence[Callable]):
    """Iterated extension of ``initial`` by ``kernels``; outcomes are flat tuples.

    The first step extends over the terminal object, so every step has the
    same form: the current joint state is bound to ``ext`` of the next kernel,
    which acts on the last coordinate only.
    """
    v = monad.map(lambda x: (x,), initial)
    for f in kernels:
        e = monad.ext(f)
        v = monad.bind(v, lambda xs, e=e: monad.map(lambda t: t[0] + (t[1], t[2]),
                                                      e((xs[:-1], xs[-1]))))
    return v


def product_stability_sides(monad: Monad, p_x, p_y, f, g):
    lhs = monad.bind(monad.fubini(p_x, p_y), monad.spatial(f, g))
    rhs = monad.fubini(monad.bind(p_x, f), monad.bind(p_y, g))
    return lhs, rhs


def marginal_locality_sides(monad: Monad, p, f):
    """Both sides of ``T pi_{YxZ} . (ext . p) = (i . <eta_Y, f>) . (T pi_Y . p)``."""
    lhs = monad.map(lambda t: (t[1], t[2]), monad.bind(p, monad.ext(f)))
    rhs = monad.bind(monad.map(lambda xy: xy[1], p), monad.pair(monad.unit, f))
    return lhs, rhs


def state_preservation_sides(monad: Monad, p, f):
    lhs = monad.map(lambda t: (t[0], t[1]), monad.bind(p, monad.ext(f)))
    return lhs, p


# --- concrete finite data -------------------------------------------------------------


@dataclass(frozen=True)
class FiniteSet:
    label: str
    size: int
    factors: tuple[int, ...] = ()

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("a finite set needs at least one element")
        if self.factors and int(np.prod(self.factors)) != self.size:
            raise ValueError("factor sizes do not multiply to the set size")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.factors or (self.size,)

    def compatible(self, other: "FiniteSet") -> bool:
        return self.shape == other.shape

    def element(self, i: int):
        """Outcome for flat index ``i``: an int, or a tuple of ints for product sets."""
        if not self.factors:
            return int(i)
        return tuple(int(k) for k in np.unravel_index(i, self.factors))

    def index(self, e) -> int:
        if not self.factors:
            return int(e)
        return int(np.ravel_multi_index(tuple(e), self.factors))

    def elements(self) -> list:
        return [self.element(i) for i in range(self.size)]

    @staticmethod
    def product(*sets: "FiniteSet") -> "FiniteSet":
        shape = tuple(s for x in sets for s in x.shape)
        return FiniteSet("x".join(x.label for x in sets), int(np.prod(shape)), shape)


UNIT_SET = FiniteSet("1", 1)


def _check_stochastic(w: np.ndarray, what: str):
    if np.any(~np.isfinite(w)):
        raise ValueError(f"{what} has non-finite weights")
    if np.any(w < -PROB_TOL):
        raise ValueError(f"{what} has negative weights")
    sums = w.sum(axis=-1)
    if np.any(np.abs(sums - 1) > PROB_TOL * max(1, w.shape[-1])):
        raise ValueError(f"{what} does not sum to 1 (max deviation {np.max(np.abs(sums - 1)):.3g})")


@dataclass(frozen=True, eq=False)
class FiniteDist:
    over: FiniteSet
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.shape != (self.over.size,):
            raise ValueError(f"expected {self.over.size} weights, got {w.shape[0]}")
        _check_stochastic(w, "distribution")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def to_dist(self) -> Dist:
        return Dist((self.over.element(i), w) for i, w in enumerate(self.weights))

    def split(self, left: FiniteSet, right: FiniteSet) -> Dist:
        """View over a product set as a Dist on pairs ``(left element, right element)``."""
        if left.size * right.size != self.over.size:
            raise ValueError("split does not match the distribution size")
        return Dist(((left.element(i // right.size), right.element(i % right.size)), w)
                    for i, w in enumerate(self.weights))

    @classmethod
    def from_dist(cls, over: FiniteSet, d: Mapping, index: Callable | None = None) -> "FiniteDist":
        index = index or over.index
        w = np.zeros(over.size)
        for e, v in d.items():
            w[index(e)] += v
        return cls(over, w)

    def marginal(self, factors: Sequence[int]) -> "FiniteDist":
        shape = self.over.shape
        drop = tuple(i for i in range(len(shape)) if i not in factors)
        w = self.weights.reshape(shape).sum(axis=drop)
        sub = tuple(shape[i] for i in sorted(factors))
        return FiniteDist(FiniteSet("marginal", int(np.prod(sub)), sub if len(sub) > 1 else ()),
                          w.ravel())

    @classmethod
    def point(cls, over: FiniteSet, i: int) -> "FiniteDist":
        w = np.zeros(over.size)
        w[i] = 1
        return cls(over, w)

    @classmethod
    def uniform(cls, over: FiniteSet) -> "FiniteDist":
        return cls(over, np.full(over.size, 1 / over.size))


@dataclass(frozen=True, eq=False)
class Kernel:
    src: FiniteSet
    dst: FiniteSet
    matrix: np.ndarray  # rows indexed by src, each a distribution on dst

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (self.src.size, self.dst.size):
            raise ValueError(f"kernel matrix shape {m.shape} != {(self.src.size, self.dst.size)}")
        _check_stochastic(m, "kernel row")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def row(self, i: int) -> FiniteDist:
        return FiniteDist(self.dst, self.matrix[i])

    def as_morphism(self) -> Callable:
        """The Kleisli morphism ``x -> Dist`` of this kernel (outcomes via ``element``)."""
        rows = [self.row(i).to_dist() for i in range(self.src.size)]
        src = self.src
        return lambda x: rows[src.index(x)]

    @classmethod
    def identity(cls, s: FiniteSet) -> "Kernel":
        return cls(s, s, np.eye(s.size))

    @classmethod
    def constant(cls, src: FiniteSet, p: FiniteDist) -> "Kernel":
        return cls(src, p.over, np.tile(p.weights, (src.size, 1)))

    @classmethod
    def deterministic(cls, src: FiniteSet, dst: FiniteSet, fn: Callable[[int], int]) -> "Kernel":
        m = np.zeros((src.size, dst.size))
        for i in range(src.size):
            m[i, fn(i)] = 1
        return cls(src, dst, m)


def apply(k: Kernel, p: FiniteDist) -> FiniteDist:
    """``k . p`` for a state ``p : 1 -> X``."""
    if not p.over.compatible(k.src):
        raise ValueError("state and kernel domain do not match")
    return FiniteDist(k.dst, p.weights @ k.matrix)


def kleisli_compose(g: Kernel, f: Kernel) -> Kernel:
    """``(g . f)(x)(z) = sum_y f(x)(y) g(y)(z)``."""
    if not f.dst.compatible(g.src):
        raise ValueError(f"cannot compose: {f.dst.label} {f.dst.shape} != {g.src.label} {g.src.shape}")
    return Kernel(f.src, g.dst, f.matrix @ g.matrix)


def fubini_product(p: FiniteDist, q: FiniteDist) -> FiniteDist:
    return FiniteDist(FiniteSet.product(p.over, q.over), np.outer(p.weights, q.weights).ravel())


def spatial_compose(f: Kernel, g: Kernel) -> Kernel:
    return Kernel(FiniteSet.product(f.src, g.src), FiniteSet.product(f.dst, g.dst),
                  np.kron(f.matrix, g.matrix))


def ext_map(f: Kernel, x: FiniteSet) -> Kernel:
    """Kernel ``X x Y -> X x Y x Z`` with ``(x, y) -> (x, y, z)`` weighted by ``f(y)(z)``."""
    ny, nz = f.src.size, f.dst.size
    m = np.zeros((x.size * ny, x.size * ny * nz))
    for i in range(x.size * ny):
        m[i, i * nz:(i + 1) * nz] = f.matrix[i % ny]
    return Kernel(FiniteSet.product(x, f.src), FiniteSet.product(x, f.src, f.dst), m)


@dataclass(frozen=True, eq=False)
class MarkovChainSpec:
    initial: FiniteDist
    kernels: tuple[Kernel, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))
        prev = self.initial.over
        for i, k in enumerate(self.kernels):
            if not prev.compatible(k.src):
                raise ValueError(f"kernel {i + 2} expects {k.src.shape}, chain provides {prev.shape}")
            prev = k.dst

    @property
    def sets(self) -> list[FiniteSet]:
        return [self.initial.over] + [k.dst for k in self.kernels]

    @property
    def joint_set(self) -> FiniteSet:
        sets = self.sets
        if len(sets) == 1:
            return sets[0]
        return FiniteSet.product(*sets)

    def truncated(self, n: int) -> "MarkovChainSpec":
        return MarkovChainSpec(self.initial, self.kernels[:n - 1])


def build_markov_chain(spec: MarkovChainSpec, monad: Monad = DIST) -> FiniteDist:
    """Joint distribution of the chain, built by iterated extension."""
    for s in spec.sets:
        if s.factors:
            raise ValueError("chain positions must be atomic finite sets")
    joint = markov_chain(monad, spec.initial.to_dist(), [k.as_morphism() for k in spec.kernels])
    out = spec.joint_set
    if len(spec.sets) == 1:
        return FiniteDist.from_dist(out, joint, index=lambda t: t[0])
    return FiniteDist.from_dist(out, joint)


def closed_form_joint(spec: MarkovChainSpec) -> FiniteDist:
    """``p1(x1) prod_i f_i(x_{i-1})(x_i)`` by broadcasting."""
    w = spec.initial.weights
    for k in spec.kernels:
        w = w[..., None] * k.matrix.reshape((1,) * (w.ndim - 1) + k.matrix.shape)
    return FiniteDist(spec.joint_set, w.ravel())


def check_product_stability(p_x: FiniteDist, p_y: FiniteDist, f: Kernel, g: Kernel,
                            monad: Monad = DIST) -> float:
    if not (p_x.over.compatible(f.src) and p_y.over.compatible(g.src)):
        raise ValueError("states and kernels do not match")
    lhs, rhs = product_stability_sides(monad, p_x.to_dist(), p_y.to_dist(),
                                       f.as_morphism(), g.as_morphism())
    return monad.distance(lhs, rhs)


def _pair_view(p: FiniteDist, f: Kernel) -> tuple[Dist, FiniteSet]:
    ny = f.src.size
    if p.over.size % ny:
        raise ValueError("joint state does not factor through the kernel domain")
    x = FiniteSet("X", p.over.size // ny)
    return p.split(x, f.src), x


def check_marginal_locality(p: FiniteDist, f: Kernel, monad: Monad = DIST) -> float:
    pd, _ = _pair_view(p, f)
    lhs, rhs = marginal_locality_sides(monad, pd, f.as_morphism())
    return monad.distance(lhs, rhs)


def check_state_preservation(p: FiniteDist, f: Kernel, monad: Monad = DIST) -> float:
    pd, _ = _pair_view(p, f)
    lhs, rhs = state_preservation_sides(monad, pd, f.as_morphism())
    return monad.distance(lhs, rhs)


# --- exhaustive law checks -------------------------------------------------------------


@dataclass
class LawReport:
    deviations: dict[str, float] = field(default_factory=dict)
    evaluations: int = 0

    def record(self, law: str, dev: float):
        self.deviations[law] = max(self.deviations.get(law, 0.0), dev)
        self.evaluations += 1

    def violations(self, tol: float = 1e-14) -> dict[str, float]:
        return {k: v for k, v in self.deviations.items() if v > tol}

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)


def sample_values(size: int, rng: np.random.Generator, n_random: int = 3) -> list[Dist]:
    """Point masses on every element, the uniform distribution and random ones.

    All checked laws are affine in each distribution argument, so agreement on
    point masses already covers every input; the rest are spot checks.
    """
    out = [Dist([(x, 1.0)]) for x in range(size)]
    out.append(Dist((x, 1 / size) for x in range(size)))
    for _ in range(n_random):
        w = rng.dirichlet(np.ones(size))
        out.append(Dist(enumerate(w)))
    return out


def check_strength_diagrams(monad: Monad = DIST, sizes: Sequence[int] = (1, 2, 3),
                            seed: int = 0, extra_samples: Sequence[Dist] = ()) -> LawReport:
    """Kock triangles, Fubini projections and commutativity on all pairs of set sizes.

    ``extra_samples`` are appended to the inputs on every set (used for fault
    injection); their outcomes must be integers valid for the smallest size.
    """
    rng = np.random.default_rng(seed)
    report = LawReport()
    for nx, ny in itertools.product(sizes, repeat=2):
        tx = sample_values(nx, rng) + list(extra_samples)
        ty = sample_values(ny, rng) + list(extra_samples)
        for t in tx:
            for y in range(ny):
                report.record("dst.(id x eta) = cst", monad.distance(
                    monad.dst(t, monad.unit(y)), monad.costrength(t, y)))
        for t in ty:
            for x in range(nx):
                report.record("dst'.(eta x id) = st", monad.distance(
                    monad.dst_prime(monad.unit(x), t), monad.strength(x, t)))
        for t1, t2 in itertools.product(tx, ty):
            d1, d2 = monad.dst(t1, t2), monad.dst_prime(t1, t2)
            report.record("T pi_X . dst = pi_TX",
                          monad.distance(monad.map(lambda p: p[0], d1), t1))
            report.record("T pi_Y . dst' = pi_TY",
                          monad.distance(monad.map(lambda p: p[1], d2), t2))
            report.record("dst = dst'", monad.distance(d1, d2))
            report.record("dst = fubini", monad.distance(d1, monad.fubini(t1, t2)))
    return report


def check_monad_laws(monad: Monad = DIST, sizes: Sequence[int] = (1, 2, 3, 4),
                     seed: int = 0) -> LawReport:
    rng = np.random.default_rng(seed)
    report = LawReport()
    for n in sizes:
        ts = sample_values(n, rng)
        for t in ts:
            report.record("join . map(unit) = id",
                          monad.distance(monad.join(monad.map(monad.unit, t)), t))
            report.record("join . unit = id", monad.distance(monad.join(monad.unit(t)), t))
        tts = [monad.unit(t) for t in ts]
        for _ in range(3):
            w = rng.dirichlet(np.ones(len(ts)))
            tts.append(Dist(zip(ts, w)))
        for tt in tts:
            report.record("bind = join . map", monad.distance(
                monad.bind(tt, lambda t: t), monad.join(tt)))
        ttts = [monad.unit(tt) for tt in tts]
        w = rng.dirichlet(np.ones(len(tts)))
        ttts.append(Dist(zip(tts, w)))
        for ttt in ttts:
            report.record("join . join = join . map(join)", monad.distance(
                monad.join(monad.join(ttt)), monad.join(monad.map(monad.join, ttt))))
    return report


# --- classical extension problem -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClassicalExtension:
    status: str                     # EXTENDIBLE | INCOMPATIBLE
    l1_gap: float
    joint: FiniteDist | None = None
    conditional: Kernel | None = None


def conditional_kernel(p_yz: FiniteDist, ny: int, zero_row: np.ndarray | None = None) -> Kernel:
    """``p_{Z|Y}``; rows where ``p_Y(y) = 0`` default to uniform."""
    nz = p_yz.over.size // ny
    w = p_yz.weights.reshape(ny, nz)
    py = w.sum(axis=1)
    fill = np.full(nz, 1 / nz) if zero_row is None else np.asarray(zero_row, dtype=float)
    rows = np.where(py[:, None] > 0, w / np.where(py > 0, py, 1)[:, None], fill[None, :])
    return Kernel(FiniteSet("Y", ny), FiniteSet("Z", nz), rows)


def classical_extension(p_xy: FiniteDist, p_yz: FiniteDist, ny: int | None = None,
                        tol: float = PROB_TOL, zero_row: np.ndarray | None = None
                        ) -> ClassicalExtension:
    """Extension ``p_XYZ(x,y,z) = p_{Z|Y}(y)(z) p_XY(x,y)`` when the Y-marginals agree."""
    if ny is None:
        shp_xy, shp_yz = p_xy.over.shape, p_yz.over.shape
        if len(shp_xy) != 2 or len(shp_yz) != 2:
            raise ValueError("pass ny for distributions over non-pair sets")
        ny = shp_xy[1]
        if shp_yz[0] != ny:
            raise ValueError("the two distributions do not share Y")
    py_a = p_xy.weights.reshape(-1, ny).sum(axis=0)
    py_b = p_yz.weights.reshape(ny, -1).sum(axis=1)
    gap = float(np.abs(py_a - py_b).sum())
    if gap > tol * max(1, ny):
        return ClassicalExtension("INCOMPATIBLE", gap)
    f = conditional_kernel(p_yz, ny, zero_row)
    x = FiniteSet("X", p_xy.over.size // ny)
    e = ext_map(f, x)
    joint = FiniteDist(e.dst, p_xy.weights @ e.matrix)
    return ClassicalExtension("EXTENDIBLE", gap, joint, f)


# --- random instances ------------------------------------------------------------------------


def random_dist(s: FiniteSet, rng: np.random.Generator, sparse: bool = False) -> FiniteDist:
    w = rng.dirichlet(np.ones(s.size))
    if sparse and s.size > 1:
        w[rng.random(s.size) < 0.3] = 0
        if w.sum() == 0:
            w[rng.integers(s.size)] = 1
        w = w / w.sum()
    return FiniteDist(s, w)


def random_kernel(src: FiniteSet, dst: FiniteSet, rng: np.random.Generator) -> Kernel:
    return Kernel(src, dst, rng.dirichlet(np.ones(dst.size), size=src.size))


def random_chain_spec(n: int, rng: np.random.Generator, max_size: int = 4) -> MarkovChainSpec:
    sets = [FiniteSet(f"X{i + 1}", int(rng.integers(1, max_size + 1))) for i in range(n)]
    return MarkovChainSpec(random_dist(sets[0], rng),
                           tuple(random_kernel(a, b, rng) for a, b in zip(sets, sets[1:])))


