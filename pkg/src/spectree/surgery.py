"""Finite-scale checks for edge surgery, cutoff commutators, recursive
partitions and the block split of banded matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._config import DEFAULT_DENSE_BUDGET
from .errors import BudgetExceeded, InsufficientRange, NoCutFound
from .graph_core import OffspringSequence, WeightedGraph

MAX_CUTOFF_RANGE = 10**5


# ---------------------------------------------------------------------------
# edge perturbations
# ---------------------------------------------------------------------------


@dataclass
class EdgePerturbation:
    """A base graph plus a symmetric family of added edge weights.

    ``added`` is a symmetric sparse matrix on the vertex set of ``base``
    with zero diagonal.
    """

    base: WeightedGraph
    added: sp.csr_matrix

    def __post_init__(self):
        a = sp.csr_matrix(self.added, dtype=float)
        n = len(self.base)
        if a.shape != (n, n):
            raise ValueError(f"added weights have shape {a.shape}, expected {(n, n)}")
        if a.nnz and abs(a - a.T).max() > 0:
            raise ValueError("added weights must be symmetric")
        if np.any(a.diagonal() != 0):
            raise ValueError("added weights must vanish on the diagonal")
        a.eliminate_zeros()
        self.added = a

    @classmethod
    def from_components(cls, components, added_edges):
        """Disjoint union of ``components`` plus ``added_edges``.

        Vertices of the union are pairs ``(ci, v)``.  Each added edge is
        ``((ci, u), (cj, v), w)`` or ``((ci, u), (cj, v))`` for weight 1.
        """
        verts, rows, cols, vals = [], [], [], []
        offset = 0
        for ci, g in enumerate(components):
            verts.extend((ci, v) for v in g.vertices)
            c = g.weights.tocoo()
            rows.extend(c.row + offset)
            cols.extend(c.col + offset)
            vals.extend(c.data)
            offset += len(g)
        n = len(verts)
        base = WeightedGraph(verts, sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
        return cls(base, _added_matrix(base, added_edges))

    @classmethod
    def from_edge_removal(cls, g: WeightedGraph, edges):
        """Split ``g`` into a base without ``edges`` and the removed edges."""
        idx = g.index
        keep = g.weights.tolil(copy=True)
        removed = sp.lil_matrix(keep.shape)
        for u, v in edges:
            i, j = idx[u], idx[v]
            w = keep[i, j]
            if w == 0:
                raise KeyError(f"no edge {u!r} - {v!r}")
            removed[i, j] = removed[j, i] = w
            keep[i, j] = keep[j, i] = 0
        base = WeightedGraph(g.vertices, keep.tocsr())
        return cls(base, removed.tocsr())

    @property
    def t_degree(self) -> np.ndarray:
        """Number of added edges at each vertex."""
        return np.diff(self.added.indptr)

    def graph(self) -> WeightedGraph:
        """The perturbed graph, base plus added weights."""
        return WeightedGraph(self.base.vertices, (self.base.weights + self.added).tocsr())


def _added_matrix(base: WeightedGraph, edges) -> sp.csr_matrix:
    idx = base.index
    n = len(base)
    m = sp.lil_matrix((n, n))
    for e in edges:
        u, v = e[0], e[1]
        w = float(e[2]) if len(e) > 2 else 1.0
        if w < 0:
            raise ValueError("added weights must be nonnegative")
        i, j = idx[tuple(u)], idx[tuple(v)]
        if i == j:
            raise ValueError(f"added edge {u!r} is a loop")
        m[i, j] += w
        m[j, i] += w
    return m.tocsr()


def surgery_bound(p: EdgePerturbation) -> float:
    """``sup_x sum_y tdeg(y) Ẽ(x,y)**2``; its square root bounds the norm of ``Ẽ``."""
    a = p.added
    if a.nnz == 0:
        return 0.0
    sq = a.multiply(a)
    return float((sq @ p.t_degree.astype(float)).max())


@dataclass
class DifferenceReport:
    exact_norm: float
    bound: float
    passed: bool

    @property
    def sqrt_bound(self) -> float:
        return math.sqrt(self.bound)

    def to_json(self):
        return {"exact_norm": self.exact_norm, "bound": self.bound, "sqrt_bound": self.sqrt_bound, "passed": self.passed}


def verify_difference_bound(p: EdgePerturbation, budget: int = DEFAULT_DENSE_BUDGET, rtol: float = 1e-12) -> DifferenceReport:
    """Largest singular value of the operator difference against ``sqrt(surgery_bound)``.

    The potential is unchanged by surgery, so the adjacency difference is
    the added weight matrix itself.
    """
    n = len(p.base)
    if n > budget:
        raise BudgetExceeded(f"dense size {n} exceeds budget {budget}")
    bound = surgery_bound(p)
    exact = float(np.linalg.norm(p.added.toarray(), 2)) if p.added.nnz else 0.0
    return DifferenceReport(exact, bound, exact <= math.sqrt(bound) * (1 + rtol))


# ---------------------------------------------------------------------------
# cutoff functions
# ---------------------------------------------------------------------------


@dataclass
class CutoffFamily:
    """Radial cutoff ``chi_n = sum_i a_n(i) 1_{S_i}``.

    ``values[i] = a_n(i)``.  When ``complete`` the last stored value is 0
    and the cutoff vanishes beyond; otherwise the values past the stored
    range are unknown.
    """

    n: int
    values: np.ndarray
    complete: bool

    @property
    def support_end(self) -> int | None:
        """First generation where the cutoff is 0."""
        return len(self.values) - 1 if self.complete else None

    def at(self, i: int) -> float:
        if i < len(self.values):
            return float(self.values[i])
        if self.complete:
            return 0.0
        raise InsufficientRange(f"cutoff is unknown at generation {i}")

    def on(self, lengths) -> np.ndarray:
        return np.array([self.at(int(i)) for i in lengths])


def build_cutoff(b, n: int, allow_partial: bool = False, max_index: int | None = None) -> CutoffFamily:
    """``a_n(i) = 1`` for ``i <= n``, then ``clip(1 - (1/n) sum_{j=n+1}^i 1/b_j, 0, 1)``.

    ``b`` is an :class:`OffspringSequence` or a list of positive reals
    indexed from 0.  Raises :class:`InsufficientRange` if the running sum
    does not reach ``n`` on the stored range, unless ``allow_partial``.
    ``max_index`` shortens the range that is examined.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(b, OffspringSequence):
        stop = b.stored_length if b.stored_length is not None else MAX_CUTOFF_RANGE
        get = b.term
    else:
        b = [float(x) for x in b]
        stop, get = len(b), b.__getitem__
    if max_index is not None:
        stop = min(stop, max_index + 1)
    vals = [1.0] * min(n + 1, stop)
    total = 0.0
    j = n + 1
    while j < stop:
        bj = get(j)
        if not bj > 0:
            raise ValueError(f"b_{j} = {bj} must be positive")
        if bj > 1e300:
            # later terms cannot move the running sum
            stop = j
            break
        total += 1.0 / bj
        a = min(1.0, max(0.0, 1.0 - total / n))
        vals.append(a)
        if a == 0.0:
            return CutoffFamily(n, np.array(vals), True)
        j += 1
    if not allow_partial:
        raise InsufficientRange(f"running sum {total:.6g} < {n} over the stored range of {stop} terms")
    return CutoffFamily(n, np.array(vals), False)


def commutator_schur_norm(g: WeightedGraph, lengths, c: CutoffFamily, exclude=None) -> float:
    """``sup_v sum_w E(v,w) |chi(w) - chi(v)|``.

    ``lengths`` gives the generation of each vertex.  Vertices in
    ``exclude`` (a boolean mask, default the last generation present) are
    left out of the supremum because their neighbourhoods are truncated.
    """
    lengths = np.asarray(lengths)
    if exclude is None:
        exclude = lengths == lengths.max(initial=0)
    chi = c.on(lengths)
    w = g.weights.tocoo()
    vals = w.data * np.abs(chi[w.col] - chi[w.row])
    sums = np.bincount(w.row, weights=vals, minlength=len(g))
    sums = sums[~np.asarray(exclude)]
    return float(sums.max()) if sums.size else 0.0


def inter_sphere_sums(g: WeightedGraph, lengths) -> np.ndarray:
    """Total edge weight between consecutive generations ``i`` and ``i+1``."""
    lengths = np.asarray(lengths)
    w = g.weights.tocoo()
    fwd = lengths[w.col] == lengths[w.row] + 1
    return np.bincount(lengths[w.row[fwd]], weights=w.data[fwd], minlength=int(lengths.max(initial=0)))


# ---------------------------------------------------------------------------
# recursive partitions
# ---------------------------------------------------------------------------


@dataclass
class PartitionCandidate:
    """Base ``B`` with families ``U[n]`` and ``W[n]`` (dicts keyed by index)."""

    base: frozenset
    u: dict = field(default_factory=dict)
    w: dict = field(default_factory=dict)
    m: int = 1

    def __post_init__(self):
        self.base = frozenset(self.base)
        self.u = {k: frozenset(v) for k, v in self.u.items()}
        self.w = {k: frozenset(v) for k, v in self.w.items()}

    def indices(self) -> list:
        return sorted(set(self.u) | set(self.w))

    def blocks(self):
        yield "B", self.base
        for k in sorted(self.u):
            yield ("U", k), self.u[k]
        for k in sorted(self.w):
            yield ("W", k), self.w[k]


NOT_CHECKABLE = "not checkable at finite scale"


def verify_partition_properties(g: WeightedGraph, cand: PartitionCandidate) -> dict:
    """Check the combinatorial partition properties P2 to P5.

    Each entry holds ``passed`` and, on failure, a ``witness``.  P1 and P6
    concern deficiency indices of infinite graphs and are reported as not
    checkable.  In the second clause of P5 the base set is read as ``B``.
    """
    seen = {}
    for name, s in cand.blocks():
        for v in s:
            if v not in g:
                raise ValueError(f"vertex {v!r} of {name} is not in the graph")
            if v in seen:
                raise ValueError(f"vertex {v!r} lies in both {seen[v]} and {name}")
            seen[v] = name
    if len(seen) != len(g):
        missing = [v for v in g.vertices if v not in seen][:3]
        raise ValueError(f"blocks do not cover the vertex set, e.g. {missing}")

    nbr = {v: set(g.neighbors(v)) for v in g.vertices}
    B = cand.base

    def touch(s):
        return frozenset(x for x in B if nbr[x] & s)

    ut = {k: touch(cand.u[k]) for k in cand.u}
    wt = {k: touch(cand.w[k]) for k in cand.w}
    report = {"P1": NOT_CHECKABLE, "P6": NOT_CHECKABLE, "M": cand.m}

    # P2
    tilde = [(("U", k), s) for k, s in ut.items()] + [(("W", k), s) for k, s in wt.items()]
    p2 = {"passed": True}
    for i in range(len(tilde)):
        for j in range(i + 1, len(tilde)):
            common = tilde[i][1] & tilde[j][1]
            if common:
                p2 = {"passed": False, "witness": {"sets": [tilde[i][0], tilde[j][0]], "vertex": min(common, key=repr)}}
                break
        if not p2["passed"]:
            break
    report["P2"] = p2

    # P3
    label = {}
    for k, s in cand.u.items():
        for v in s:
            label[v] = ("U", k)
    for k, s in cand.w.items():
        for v in s:
            label[v] = ("W", k)
    p3 = {"passed": True}
    for u, v, _ in g.edges():
        a, b = label.get(u), label.get(v)
        if a is None or b is None or a == b:
            continue
        # U_n - W_m is forbidden for all n, m; same-type edges only across indices
        p3 = {"passed": False, "witness": {"edge": (u, v), "sets": [a, b]}}
        break
    report["P3"] = p3

    m = cand.m
    # P4
    p4 = {"passed": True}
    for k, s in cand.u.items():
        bad = next((x for x in sorted(B, key=repr) if len(nbr[x] & s) > m), None)
        if bad is not None:
            p4 = {"passed": False, "witness": {"vertex": bad, "set": ("U", k), "count": len(nbr[bad] & s)}}
            break
        bad = next((x for x in sorted(s, key=repr) if len(nbr[x] & B) > m), None)
        if bad is not None:
            p4 = {"passed": False, "witness": {"vertex": bad, "set": ("U", k), "count": len(nbr[bad] & B)}}
            break
    report["P4"] = p4

    # P5
    p5 = {"passed": True, "reading": "second clause over B minus the W-boundary"}
    for k in cand.indices():
        wk = wt.get(k, frozenset())
        rest = B - wk
        bad = next((x for x in sorted(wk, key=repr) if len(nbr[x] & rest) > m), None)
        if bad is not None:
            p5.update(passed=False, witness={"vertex": bad, "index": k, "count": len(nbr[bad] & rest)})
            break
        bad = next((x for x in sorted(rest, key=repr) if len(nbr[x] & B) > m), None)
        if bad is not None:
            p5.update(passed=False, witness={"vertex": bad, "index": k, "count": len(nbr[bad] & B)})
            break
    report["P5"] = p5
    report["passed"] = all(report[p]["passed"] for p in ("P2", "P3", "P4", "P5"))
    return report


def tree_path_partition(g: WeightedGraph, path_vertex, m: int = 1) -> PartitionCandidate:
    """Base ``{v}`` with everything else in a single ``W`` set.

    This is the partition used at each step of the recursion along a path
    of vertices in a tree: the boundary of ``W`` is the whole base, so the
    base minus that boundary is empty.
    """
    rest = frozenset(g.vertices) - {path_vertex}
    w = {1: rest} if rest else {}
    return PartitionCandidate(frozenset([path_vertex]), {}, w, m)


# ---------------------------------------------------------------------------
# banded block split
# ---------------------------------------------------------------------------


def half_bandwidth(a: np.ndarray) -> int:
    nz = np.argwhere(a != 0)
    return int(np.abs(nz[:, 0] - nz[:, 1]).max()) if nz.size else 0


def coupling_coefficients(a: np.ndarray, k: int) -> np.ndarray:
    """``c[n] = max |a[i, j]|`` over ``i <= n-1 < n <= j`` with ``j - i <= k``.

    Index ``n`` runs over ``1..N-1``; ``c[0]`` is unused and set to 0.
    These are the entries coupling the rows before ``n`` to the rows from
    ``n`` on.
    """
    a = np.asarray(a)
    size = a.shape[0]
    c = np.zeros(size)
    for n in range(1, size):
        best = 0.0
        for l in range(k):
            i = n - 1 - l
            if i < 0:
                break
            for kk in range(l + 1, k + 1):
                j = i + kk
                if j < size:
                    best = max(best, abs(a[i, j]))
        c[n] = best
    return c


@dataclass
class SplitResult:
    cuts: list
    blocks: list
    coefficients: np.ndarray
    residual: np.ndarray
    schur_estimate: float
    a_priori_estimate: float
    residual_norm: float
    window: int
    k: int

    def block_sizes(self) -> list[int]:
        return [hi - lo for lo, hi in self.blocks]

    def to_json(self):
        return {
            "window": self.window,
            "half_bandwidth": self.k,
            "cuts": self.cuts,
            "block_sizes": self.block_sizes(),
            "coefficients": self.coefficients[1:].tolist(),
            "schur_estimate": self.schur_estimate,
            "a_priori_estimate": self.a_priori_estimate,
            "residual_norm": self.residual_norm,
        }


def banded_block_split(a, bound: float, k: int | None = None) -> SplitResult:
    """Split a symmetric banded matrix at the indices where ``c[n] <= bound``.

    Blocks are the principal submatrices on ``[u_j, u_{j+1} - 1]`` between
    consecutive cuts (plus the ends).  The residual ``A - (direct sum)``
    holds the discarded couplings; its Schur row-sum norm and exact
    spectral norm are reported with the estimate ``2 K bound``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.array_equal(a, a.T):
        raise ValueError("matrix must be symmetric")
    bw = half_bandwidth(a)
    k = bw if k is None else k
    if bw > k:
        raise ValueError(f"matrix has half-bandwidth {bw} > {k}")
    size = a.shape[0]
    k = max(k, 1)
    c = coupling_coefficients(a, k)
    cuts = [n for n in range(1, size) if c[n] <= bound]
    if not cuts:
        raise NoCutFound(f"no index with c_n <= {bound} in a window of {size}")
    edges = [0] + cuts + [size]
    blocks = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
    direct = np.zeros_like(a)
    for lo, hi in blocks:
        direct[lo:hi, lo:hi] = a[lo:hi, lo:hi]
    residual = a - direct
    schur = float(np.abs(residual).sum(axis=1).max()) if size else 0.0
    norm = float(np.linalg.norm(residual, 2)) if size else 0.0
    return SplitResult(cuts, blocks, c, residual, schur, 2 * k * bound, norm, size, k)


def read_banded(fh) -> np.ndarray:
    """Text format: a line ``n K`` then ``n`` rows of ``K+1`` upper-band entries.

    Row ``i`` lists ``a[i, i], a[i, i+1], ..., a[i, i+K]``; entries past the
    matrix edge are ignored.
    """
    lines = [ln.split("#")[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    n, k = (int(x) for x in lines[0].split())
    if len(lines) - 1 != n:
        raise ValueError(f"expected {n} band rows, got {len(lines) - 1}")
    a = np.zeros((n, n))
    for i, ln in enumerate(lines[1:]):
        vals = [float(x) for x in ln.split()]
        if len(vals) != k + 1:
            raise ValueError(f"row {i} has {len(vals)} entries, expected {k + 1}")
        for d, x in enumerate(vals):
            if i + d < n:
                a[i, i + d] = a[i + d, i] = x
    return a
