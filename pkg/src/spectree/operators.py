"""Adjacency, Laplacian and Schrödinger operators on finite weighted graphs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ._config import DEFAULT_DENSE_BUDGET
from .errors import BudgetExceeded, NotSphereSymmetric
from .graph_core import WeightedGraph, format_vertex, parse_vertex

ADJACENCY = "adjacency"
LAPLACIAN = "laplacian"
FLAVORS = (ADJACENCY, LAPLACIAN)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialSpec:
    """Descriptor of a real potential.

    Sphere-symmetric kinds (``constant``, ``by_sphere``, ``sphere_fn``,
    ``power``) give the value as a function of the generation ``n``.
    ``explicit`` maps individual vertices to values.

    ``lower_bound`` and ``abs_bound`` are *certified* bounds over the whole
    infinite graph; ``None`` means no bound is known.  ``growth`` is
    ``(c, p)`` when the value behaves like ``c * (n+1)**p`` for large ``n``.
    """

    kind: str = "constant"
    constant: float = 0.0
    by_sphere: tuple = ()
    explicit: dict | None = field(default=None, compare=False)
    sphere_fn: Callable[[int], float] | None = field(default=None, compare=False)
    lower_bound: float | None = 0.0
    abs_bound: float | None = 0.0
    growth: tuple | None = None

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def const(cls, c: float):
        c = float(c)
        return cls("constant", constant=c, lower_bound=c, abs_bound=abs(c), growth=(c, 0.0))

    @classmethod
    def spherical(cls, values):
        """Values for generations ``0..len(values)-1`` only; no tail, no certified bounds."""
        return cls("by_sphere", by_sphere=tuple(float(v) for v in values), lower_bound=None, abs_bound=None)

    @classmethod
    def from_function(cls, fn, lower_bound=None, abs_bound=None, growth=None):
        return cls("sphere_fn", sphere_fn=fn, lower_bound=lower_bound, abs_bound=abs_bound, growth=growth)

    @classmethod
    def power(cls, c: float, p: float):
        """``v(n) = c * (n+1)**p``."""
        c, p = float(c), float(p)
        lower = 0.0 if c >= 0 else (c if p <= 0 else None)
        bound = abs(c) if p <= 0 else None
        return cls(
            "sphere_fn",
            sphere_fn=lambda n: c * (n + 1) ** p,
            lower_bound=lower,
            abs_bound=bound,
            growth=(c, p),
        )

    @classmethod
    def vertexwise(cls, mapping: dict):
        mapping = {k: float(v) for k, v in mapping.items()}
        return cls("explicit", explicit=mapping, lower_bound=None, abs_bound=None)

    @property
    def sphere_symmetric(self) -> bool:
        return self.kind != "explicit"

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.constant == 0.0

    def value(self, n: int) -> float:
        if self.kind == "constant":
            return self.constant
        if self.kind == "by_sphere":
            if n >= len(self.by_sphere):
                raise IndexError(f"potential has no value for generation {n}")
            return self.by_sphere[n]
        if self.kind == "sphere_fn":
            return float(self.sphere_fn(n))
        raise NotSphereSymmetric("explicit potential has no per-generation value")

    def values(self, count: int) -> np.ndarray:
        return np.array([self.value(n) for n in range(count)], dtype=float)

    def on(self, vertices, lengths=None) -> np.ndarray:
        """Materialize on a vertex list.

        ``lengths`` gives the generation of each vertex; by default the
        vertices are taken to be words and their length is used.
        """
        vertices = list(vertices)
        if self.kind == "constant":
            return np.full(len(vertices), self.constant)
        if self.kind == "explicit":
            try:
                return np.array([self.explicit[v] for v in vertices], dtype=float)
            except KeyError as exc:
                raise KeyError(f"explicit potential undefined at vertex {exc.args[0]!r}") from None
        if lengths is None:
            lengths = [len(v) for v in vertices]
        cache: dict[int, float] = {}
        out = np.empty(len(vertices))
        for i, n in enumerate(lengths):
            if n not in cache:
                cache[n] = self.value(int(n))
            out[i] = cache[n]
        return out

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"constant": self.constant}
        if self.kind == "by_sphere":
            return {"by_sphere": list(self.by_sphere)}
        if self.kind == "explicit":
            return {"explicit": {format_vertex(k): v for k, v in self.explicit.items()}}
        if self.growth is not None:
            return {"power": list(self.growth)}
        raise ValueError("closed-form potentials without a power law are not serializable")

    @classmethod
    def from_json(cls, obj) -> "PotentialSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if len(obj) != 1:
            raise ValueError(f"potential descriptor must have exactly one key: {obj}")
        (kind, val), = obj.items()
        if kind == "constant":
            return cls.const(val)
        if kind == "by_sphere":
            return cls.spherical(val)
        if kind == "explicit":
            return cls.vertexwise({parse_vertex(k): v for k, v in val.items()})
        if kind == "power":
            return cls.power(*val)
        raise ValueError(f"unknown potential kind {kind!r}")


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


class SchrodingerOperator:
    """``A + V`` or ``Δ + V`` on a finite weighted graph."""

    def __init__(self, graph: WeightedGraph, potential=None, flavor: str = ADJACENCY):
        if flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}")
        self.graph = graph
        self.flavor = flavor
        if potential is None:
            v = np.zeros(len(graph))
        elif isinstance(potential, PotentialSpec):
            v = potential.on(graph.vertices)
        else:
            v = np.asarray(potential, dtype=float)
        if v.shape != (len(graph),):
            raise ValueError(f"potential has shape {v.shape}, expected ({len(graph)},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential must be finite and real")
        self.potential = v

    def __len__(self):
        return len(self.graph)

    def diagonal(self) -> np.ndarray:
        if self.flavor == LAPLACIAN:
            return laplacian_potential(self.graph) + self.potential
        return self.potential

    def sparse(self) -> sp.csr_matrix:
        w = self.graph.weights
        if self.flavor == LAPLACIAN:
            w = -w
        return (w + sp.diags(self.diagonal())).tocsr()

    def apply(self, f) -> np.ndarray:
        return apply(self, f)


def apply(h: SchrodingerOperator, f) -> np.ndarray:
    """Matrix-free action; ``f`` may be real or complex, 1-D or (n, k)."""
    f = np.asarray(f)
    if f.shape[0] != len(h.graph):
        raise ValueError(f"vector of length {f.shape[0]} on a graph with {len(h.graph)} vertices")
    w = h.graph.weights
    d = h.diagonal()
    d = d if f.ndim == 1 else d[:, None]
    if h.flavor == LAPLACIAN:
        return d * f - w @ f
    return w @ f + d * f


def laplacian_potential(g: WeightedGraph) -> np.ndarray:
    """Weighted degree ``x -> sum_y E(x, y)``, so that ``Δ = deg - A``."""
    return g.weighted_degrees()


def vertex_norms(g: WeightedGraph, x) -> tuple[float, float]:
    """``(|A 1_x|^2, |Δ 1_x|^2)`` from the closed forms.

    The first is the sum of squared weights at ``x``; the second adds the
    square of the weighted degree.
    """
    i = g.idx(x)
    lo, hi = g.weights.indptr[i], g.weights.indptr[i + 1]
    row = g.weights.data[lo:hi]
    sq = float(np.dot(row, row))
    return sq, sq + float(row.sum()) ** 2


def dense_matrix(h: SchrodingerOperator, budget: int = DEFAULT_DENSE_BUDGET) -> np.ndarray:
    n = len(h.graph)
    if n > budget:
        raise BudgetExceeded(f"dense matrix of size {n} exceeds budget {budget}")
    m = h.sparse().toarray()
    # enforce exact symmetry against summation-order rounding
    return 0.5 * (m + m.T)


def eigvalsh_sorted(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of an exactly symmetric matrix, ascending."""
    if not np.array_equal(m, m.T):
        raise ValueError("matrix is not exactly symmetric")
    return np.linalg.eigvalsh(m)


def schur_row_sum(g: WeightedGraph, transform=None) -> float:
    """``sup_v sum_w |transform(v, w, E(v, w))|`` over the edges of ``g``.

    ``transform`` defaults to the weights themselves.  It may be a callable
    ``(v, w, weight) -> float`` or a sparse/dense matrix aligned with ``g``.
    Only pairs joined by an edge contribute.
    """
    w = g.weights.tocoo()
    if transform is None:
        vals = np.abs(w.data)
    elif callable(transform):
        verts = g.vertices
        vals = np.abs(
            np.array([transform(verts[i], verts[j], x) for i, j, x in zip(w.row, w.col, w.data)], dtype=float)
        )
    else:
        t = sp.csr_matrix(transform)
        vals = np.abs(np.asarray(t[w.row, w.col]).ravel())
    if len(g) == 0:
        return 0.0
    sums = np.bincount(w.row, weights=vals, minlength=len(g))
    return float(sums.max()) if sums.size else 0.0


def degree_growth_ratio(g: WeightedGraph, x) -> float:
    """``|Δ 1_x|^2 / |A 1_x|^2``; ``1 + deg(x)`` on simple graphs."""
    a, d = vertex_norms(g, x)
    return d / a if a else math.nan
