"""Finite truncations of rooted trees and weighted graphs.

Tree vertices are words over the positive integers: the root is the empty
tuple, and ``w + (k,)`` is the ``k``-th son of ``w``.  A tree is stored up
to an explicit truncation depth; the infinite object is never built.

General graphs are :class:`WeightedGraph` instances, a vertex list plus a
symmetric sparse weight matrix.  Simple graphs are weight-1 graphs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from ._config import vertex_budget
from .errors import BudgetExceeded, InvalidOffspring, UnknownVertex

Word = tuple
ROOT: Word = ()
ROOT_LABEL = "ε"

TAIL_KINDS = (
    "explicit",
    "power",
    "exponential",
    "double_exponential",
    "periodic",
    "constant",
    "custom",
)


def length(w: Word) -> int:
    return len(w)


def father(w: Word) -> Word:
    """Drop the last letter. The root has no father."""
    if len(w) == 0:
        raise ValueError("the root ε has no father")
    return w[:-1]


def format_vertex(v) -> str:
    if isinstance(v, tuple):
        if len(v) == 0:
            return ROOT_LABEL
        if all(isinstance(x, tuple) for x in v):
            return "|".join(format_vertex(x) for x in v)
        return "/".join(str(int(x)) for x in v)
    return str(v)


def parse_vertex(token: str):
    if "|" in token:
        return tuple(parse_vertex(t) for t in token.split("|"))
    if token in (ROOT_LABEL, "e", "-"):
        return ROOT
    return tuple(int(p) for p in token.split("/"))


# ---------------------------------------------------------------------------
# offspring sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OffspringSequence:
    """Offspring counts ``b_n`` per generation.

    ``prefix`` lists ``b_0, ..., b_{N-1}`` explicitly; from index ``N`` on the
    tail descriptor takes over:

    * ``explicit``: no tail, terms past the prefix are undefined
    * ``power`` ``(alpha,)``: ``b_n = floor((n+1)**alpha)``
    * ``exponential`` ``(r,)``: ``b_n = floor(r**n)``
    * ``double_exponential`` ``(a, q)``: ``b_n = a**(q**n)``
    * ``periodic`` ``(p_0, ..., p_{m-1})``: repeats the pattern
    * ``constant`` ``(d,)``
    * ``custom``: ``tail_fn(n)`` sampled on demand
    """

    prefix: tuple = ()
    tail_kind: str = "explicit"
    tail_params: tuple = ()
    tail_fn: Callable[[int], int] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.tail_kind not in TAIL_KINDS:
            raise ValueError(f"unknown tail kind {self.tail_kind!r}")
        object.__setattr__(self, "prefix", tuple(int(x) for x in self.prefix))
        object.__setattr__(self, "tail_params", tuple(self.tail_params))
        for i, x in enumerate(self.prefix):
            if x < 1:
                raise InvalidOffspring(f"b_{i} = {x}; offspring must be >= 1")
        k, p = self.tail_kind, self.tail_params
        if k == "power" and not (len(p) == 1 and p[0] > 0):
            raise ValueError("power tail needs one exponent alpha > 0")
        if k == "exponential" and not (len(p) == 1 and p[0] >= 1):
            raise ValueError("exponential tail needs a ratio r >= 1")
        if k == "double_exponential":
            if not (len(p) == 2 and int(p[0]) == p[0] >= 2 and int(p[1]) == p[1] >= 2):
                raise ValueError("double_exponential tail needs integers a, q >= 2")
        if k == "periodic" and not (p and all(int(x) == x >= 1 for x in p)):
            raise ValueError("periodic tail needs a nonempty pattern of integers >= 1")
        if k == "constant" and not (len(p) == 1 and int(p[0]) == p[0] >= 1):
            raise ValueError("constant tail needs one integer d >= 1")
        if k == "custom" and self.tail_fn is None:
            raise ValueError("custom tail needs tail_fn")

    # constructors -----------------------------------------------------------

    @classmethod
    def explicit(cls, values):
        return cls(tuple(values), "explicit")

    @classmethod
    def power(cls, alpha, prefix=()):
        return cls(tuple(prefix), "power", (float(alpha),))

    @classmethod
    def exponential(cls, r, prefix=()):
        return cls(tuple(prefix), "exponential", (r,))

    @classmethod
    def periodic(cls, pattern, prefix=()):
        return cls(tuple(prefix), "periodic", tuple(int(x) for x in pattern))

    @classmethod
    def constant(cls, d, prefix=()):
        return cls(tuple(prefix), "constant", (int(d),))

    # access -----------------------------------------------------------------

    @property
    def closed_form(self) -> bool:
        """True when the tail admits an analytic description."""
        return self.tail_kind not in ("explicit", "custom")

    @property
    def stored_length(self) -> int | None:
        """Number of defined terms, or ``None`` if the sequence is infinite."""
        return len(self.prefix) if self.tail_kind == "explicit" else None

    def term(self, n: int) -> int:
        if n < 0:
            raise IndexError(n)
        if n < len(self.prefix):
            return self.prefix[n]
        k, p = self.tail_kind, self.tail_params
        if k == "explicit":
            raise IndexError(f"b_{n} is beyond the explicit prefix of length {len(self.prefix)}")
        if k == "power":
            alpha = p[0]
            if float(alpha).is_integer():
                return (n + 1) ** int(alpha)
            return max(1, math.floor((n + 1) ** alpha))
        if k == "exponential":
            r = p[0]
            if float(r).is_integer():
                return int(r) ** n
            return max(1, math.floor(r**n))
        if k == "double_exponential":
            return int(p[0]) ** (int(p[1]) ** n)
        if k == "periodic":
            return int(p[(n - len(self.prefix)) % len(p)])
        if k == "constant":
            return int(p[0])
        value = int(self.tail_fn(n))
        if value < 1:
            raise InvalidOffspring(f"custom tail gives b_{n} = {value}")
        return value

    def terms(self, count: int) -> list[int]:
        return [self.term(n) for n in range(count)]

    def describe(self) -> str:
        if self.tail_kind == "explicit":
            return "explicit:" + ",".join(map(str, self.prefix))
        head = ("prefix=" + ",".join(map(str, self.prefix)) + ";") if self.prefix else ""
        return f"{head}{self.tail_kind}:" + ",".join(_fmt_num(x) for x in self.tail_params)

    # serialization ------------------------------------------------------------

    def to_json(self, depth=None) -> dict:
        if self.tail_kind == "custom":
            raise ValueError("custom tails are not serializable")
        if self.tail_kind == "explicit":
            tail = {"explicit": True}
        elif len(self.tail_params) == 1 and self.tail_kind != "periodic":
            tail = {self.tail_kind: self.tail_params[0]}
        else:
            tail = {self.tail_kind: list(self.tail_params)}
        out = {"kind": "offspring", "prefix": list(self.prefix), "tail": tail}
        if depth is not None:
            out["depth"] = depth
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "OffspringSequence":
        if obj.get("kind", "offspring") != "offspring":
            raise ValueError(f"unsupported family kind {obj.get('kind')!r}")
        prefix = tuple(obj.get("prefix", ()))
        tail = obj.get("tail", {"explicit": True})
        if len(tail) != 1:
            raise ValueError(f"tail descriptor must have exactly one key: {tail}")
        (kind, params), = tail.items()
        if kind == "explicit":
            return cls(prefix, "explicit")
        if not isinstance(params, (list, tuple)):
            params = (params,)
        return cls(prefix, kind, tuple(params))

    @classmethod
    def parse(cls, text: str) -> "OffspringSequence":
        """Parse a ``kind:params`` family string.

        Examples: ``power:2``, ``exponential:2``, ``explicit:2,3,2,3``,
        ``periodic:2,3``, ``constant:2``, ``double_exponential:2,2``.
        """
        text = text.strip()
        if text.startswith("{"):
            return cls.from_json(json.loads(text))
        kind, _, rest = text.partition(":")
        nums = [float(x) for x in rest.split(",") if x.strip()]
        if kind == "explicit":
            return cls.explicit(int(x) for x in nums)
        if kind == "periodic":
            return cls.periodic(nums)
        if kind in ("power", "exponential", "constant", "double_exponential"):
            if kind in ("constant", "double_exponential"):
                nums = [int(x) for x in nums]
            return cls((), kind, tuple(nums))
        raise ValueError(f"unknown family {text!r}")


def _fmt_num(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def load_family(obj) -> tuple[OffspringSequence, int | None]:
    """Read a JSON tree-family descriptor; returns ``(sequence, depth)``."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    return OffspringSequence.from_json(obj), obj.get("depth")


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TreeTopology:
    """A rooted tree truncated at generation ``depth``.

    ``offspring`` maps a vertex to its number of sons in the full tree.  It
    always covers vertices strictly inside the truncation; vertices on the
    last sphere may or may not carry a value (sampled trees know it).
    """

    spheres: tuple
    offspring: dict
    depth: int
    sequence: OffspringSequence | None = None

    def __post_init__(self):
        verts = [v for s in self.spheres for v in s]
        object.__setattr__(self, "_vertices", tuple(verts))
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(verts)})

    @property
    def vertices(self) -> tuple:
        return self._vertices

    @property
    def index(self) -> dict:
        return self._index

    def __len__(self):
        return len(self._vertices)

    def __contains__(self, v):
        return v in self._index

    def sphere(self, n: int) -> list:
        if n == -1:
            return []
        if n < -1 or n > self.depth:
            raise IndexError(f"sphere {n} outside 0..{self.depth}")
        return list(self.spheres[n])

    def father(self, v: Word) -> Word:
        if v not in self._index:
            raise UnknownVertex(v)
        return father(v)

    def off(self, v: Word) -> int | None:
        return self.offspring.get(v)

    def children(self, v: Word) -> list:
        """Sons of ``v`` present in the truncation."""
        if len(v) >= self.depth:
            return []
        return [v + (k,) for k in range(1, self.offspring.get(v, 0) + 1)]

    def is_interior(self, v: Word) -> bool:
        return len(v) < self.depth

    def lengths(self) -> np.ndarray:
        return np.fromiter((len(v) for v in self._vertices), dtype=int, count=len(self))

    def to_graph(self) -> "WeightedGraph":
        idx = self._index
        rows, cols = [], []
        for v in self._vertices:
            if v:
                rows.append(idx[v])
                cols.append(idx[v[:-1]])
        return WeightedGraph.from_index_pairs(self._vertices, rows, cols, np.ones(len(rows)))


def _check_budget(total, budget, what="vertices", partial=None):
    if total > budget:
        raise BudgetExceeded(f"{total} {what} exceeds budget {budget}", partial)


def build_offspring_tree(b: OffspringSequence, depth: int, budget: int | None = None) -> TreeTopology:
    """Tree in which every generation-``n`` vertex has ``b_n`` sons, up to ``depth``."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    budget = vertex_budget(budget)
    counts = [1]
    for n in range(depth):
        bn = b.term(n)
        if bn < 1:
            raise InvalidOffspring(f"b_{n} = {bn}")
        counts.append(counts[-1] * bn)
        _check_budget(sum(counts), budget, partial={"sphere_sizes": counts})
    spheres = [[ROOT]]
    offspring = {}
    for n in range(depth):
        bn = b.term(n)
        nxt = []
        for v in spheres[-1]:
            offspring[v] = bn
            nxt.extend(v + (k,) for k in range(1, bn + 1))
        spheres.append(nxt)
    return TreeTopology(tuple(tuple(s) for s in spheres), offspring, depth, b)


def tree_from_offspring_map(offspring: dict, depth: int, budget: int | None = None) -> TreeTopology:
    """Tree from a word -> offspring map, expanded breadth-first up to ``depth``."""
    budget = vertex_budget(budget)
    spheres = [[ROOT]]
    total = 1
    for _ in range(depth):
        nxt = []
        for v in spheres[-1]:
            nxt.extend(v + (k,) for k in range(1, offspring.get(v, 0) + 1))
        total += len(nxt)
        _check_budget(total, budget)
        spheres.append(nxt)
    known = {v: offspring.get(v, 0) for s in spheres[:-1] for v in s}
    for v in spheres[-1]:
        if v in offspring:
            known[v] = offspring[v]
    return TreeTopology(tuple(tuple(s) for s in spheres), known, depth)


def sphere(t: TreeTopology, n: int) -> list:
    return t.sphere(n)


# ---------------------------------------------------------------------------
# weighted graphs
# ---------------------------------------------------------------------------


class WeightedGraph:
    """Finite loop-free graph with symmetric nonnegative weights.

    Vertices are arbitrary hashable labels held in a fixed order; the
    weights live in a CSR matrix indexed by that order.
    """

    def __init__(self, vertices: Sequence[Hashable], weights: sp.spmatrix, check: bool = True):
        self._vertices = tuple(vertices)
        self._index = {v: i for i, v in enumerate(self._vertices)}
        if len(self._index) != len(self._vertices):
            raise ValueError("duplicate vertex labels")
        w = sp.csr_matrix(weights, dtype=float)
        w.eliminate_zeros()
        w.sort_indices()
        if w.shape != (len(self._vertices),) * 2:
            raise ValueError(f"weight matrix shape {w.shape} does not match {len(self._vertices)} vertices")
        if check:
            if w.nnz and w.data.min() < 0:
                raise ValueError("weights must be nonnegative")
            if w.diagonal().any():
                raise ValueError("loops are not allowed")
            if (w - w.T).count_nonzero():
                raise ValueError("weights must be symmetric")
        self._w = w

    # construction -------------------------------------------------------------

    @classmethod
    def from_index_pairs(cls, vertices, rows, cols, weights):
        n = len(vertices)
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        weights = np.asarray(weights, dtype=float)
        m = sp.coo_matrix(
            (np.concatenate([weights, weights]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(n, n),
        )
        return cls(vertices, m.tocsr())

    @classmethod
    def from_edges(cls, vertices, edges: Iterable):
        """``edges`` yields ``(u, v)`` or ``(u, v, w)``; each undirected edge once."""
        vertices = list(vertices)
        idx = {v: i for i, v in enumerate(vertices)}
        rows, cols, ws = [], [], []
        seen = {}
        for e in edges:
            u, v = e[0], e[1]
            w = float(e[2]) if len(e) > 2 else 1.0
            if u not in idx or v not in idx:
                raise UnknownVertex(u if u not in idx else v)
            if u == v:
                raise ValueError(f"loop at {u!r}")
            key = frozenset((u, v))
            if key in seen:
                raise ValueError(f"edge {u!r}-{v!r} listed twice")
            seen[key] = w
            rows.append(idx[u])
            cols.append(idx[v])
            ws.append(w)
        return cls.from_index_pairs(vertices, rows, cols, ws)

    @classmethod
    def from_dense(cls, vertices, matrix):
        return cls(vertices, sp.csr_matrix(np.asarray(matrix, dtype=float)))

    # access -------------------------------------------------------------------

    @property
    def vertices(self) -> tuple:
        return self._vertices

    @property
    def index(self) -> dict:
        return self._index

    @property
    def weights(self) -> sp.csr_matrix:
        return self._w

    def __len__(self):
        return len(self._vertices)

    def __contains__(self, v):
        return v in self._index

    def idx(self, v) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise UnknownVertex(v) from None

    def weight(self, u, v) -> float:
        return float(self._w[self.idx(u), self.idx(v)])

    def neighbors(self, v) -> list:
        i = self.idx(v)
        lo, hi = self._w.indptr[i], self._w.indptr[i + 1]
        return [self._vertices[j] for j in self._w.indices[lo:hi]]

    def neighbor_weights(self, v) -> list:
        i = self.idx(v)
        lo, hi = self._w.indptr[i], self._w.indptr[i + 1]
        return [(self._vertices[j], float(x)) for j, x in zip(self._w.indices[lo:hi], self._w.data[lo:hi])]

    def degrees(self) -> np.ndarray:
        """Number of neighbours per vertex (the combinatorial degree)."""
        return np.diff(self._w.indptr)

    def weighted_degrees(self) -> np.ndarray:
        return np.asarray(self._w.sum(axis=1)).ravel()

    def edges(self):
        """Yield ``(u, v, w)`` once per undirected edge."""
        upper = sp.triu(self._w, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        for k in order:
            yield self._vertices[upper.row[k]], self._vertices[upper.col[k]], float(upper.data[k])

    @property
    def n_edges(self) -> int:
        return self._w.nnz // 2

    def adjacency_dense(self) -> np.ndarray:
        return self._w.toarray()

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return self._vertices == other._vertices and (self._w != other._w).nnz == 0

    def __repr__(self):
        return f"WeightedGraph(|V|={len(self)}, |E|={self.n_edges})"


def tensor_product(g1: WeightedGraph, g2: WeightedGraph, budget: int | None = None) -> WeightedGraph:
    """Graph on ``V1 x V2`` with weight ``E1(x1,y1) * E2(x2,y2)``."""
    budget = vertex_budget(budget)
    n = len(g1) * len(g2)
    _check_budget(n, budget)
    verts = [(a, b) for a in g1.vertices for b in g2.vertices]
    return WeightedGraph(verts, sp.kron(g1.weights, g2.weights, format="csr"))


def induced_subgraph(g: WeightedGraph, keep) -> WeightedGraph:
    """Restrict weights to ``keep x keep``; vertex order follows ``g``."""
    keep = set(keep)
    for v in keep:
        g.idx(v)
    idx = [i for i, v in enumerate(g.vertices) if v in keep]
    return WeightedGraph([g.vertices[i] for i in idx], g.weights[idx][:, idx], check=False)


def remove_edges(g: WeightedGraph, edges: Iterable) -> WeightedGraph:
    """Zero out the symmetric closure of ``edges``; the vertex set is kept."""
    w = g.weights.tolil(copy=True)
    for e in edges:
        i, j = g.idx(e[0]), g.idx(e[1])
        w[i, j] = 0.0
        w[j, i] = 0.0
    return WeightedGraph(g.vertices, w.tocsr(), check=False)


def connected_component(g: WeightedGraph, x) -> WeightedGraph:
    """Induced subgraph on everything reachable from ``x`` through nonzero weights."""
    order = breadth_first_order(g.weights, g.idx(x), directed=False, return_predecessors=False)
    reach = set(g.vertices[i] for i in order)
    return induced_subgraph(g, reach)


def component_labels(g: WeightedGraph) -> tuple[int, np.ndarray]:
    return connected_components(g.weights, directed=False)


def connected_components_list(g: WeightedGraph) -> list[list]:
    """Vertex lists of all components, ordered by first vertex."""
    n, labels = component_labels(g)
    groups: dict[int, list] = {}
    for v, lab in zip(g.vertices, labels):
        groups.setdefault(int(lab), []).append(v)
    return list(groups.values())


# ---------------------------------------------------------------------------
# small hand-written graphs
# ---------------------------------------------------------------------------


def complete_graph(n: int) -> WeightedGraph:
    return WeightedGraph.from_edges(range(n), [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> WeightedGraph:
    return WeightedGraph.from_edges(range(n), [(i, i + 1) for i in range(n - 1)])


def star_graph(d: int, weight: float = 1.0) -> WeightedGraph:
    """Center 0 joined to leaves 1..d."""
    return WeightedGraph.from_edges(range(d + 1), [(0, k, weight) for k in range(1, d + 1)])


def edgeless_graph(vertices) -> WeightedGraph:
    vertices = list(vertices)
    return WeightedGraph(vertices, sp.csr_matrix((len(vertices), len(vertices))))


# ---------------------------------------------------------------------------
# edge-list format
# ---------------------------------------------------------------------------


def write_edge_list(g: WeightedGraph, fh) -> None:
    """One ``u v w`` line per undirected edge; isolated vertices as ``# vertex u``."""
    touched = set()
    for u, v, w in g.edges():
        touched.update((u, v))
        fh.write(f"{format_vertex(u)} {format_vertex(v)} {w!r}\n")
    for v in g.vertices:
        if v not in touched:
            fh.write(f"# vertex {format_vertex(v)}\n")


def read_edge_list(fh) -> WeightedGraph:
    verts: dict = {}
    edges = []
    for raw in fh:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "vertex":
                verts.setdefault(parse_vertex(parts[1]), None)
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"bad edge line: {raw!r}")
        u, v = parse_vertex(parts[0]), parse_vertex(parts[1])
        verts.setdefault(u, None)
        verts.setdefault(v, None)
        edges.append((u, v, float(parts[2]) if len(parts) == 3 else 1.0))
    return WeightedGraph.from_edges(list(verts), edges)
