"""Galton-Watson trees, offspring pruning and supermartingale statistics.

Random draws come from a counter-based generator: the offspring of a vertex
is a deterministic function of ``(seed, stream, word)``, so a tree does not
depend on the order in which it is explored.  The same keys are used by the
full sampler and by the lazy exploration of the root's pruned component,
which therefore agree on every common vertex.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from ._config import vertex_budget
from .errors import BudgetExceeded
from .graph_core import ROOT, OffspringSequence, TreeTopology

PMF_TOL = 1e-12
_TABLE_TAIL = 1e-17


def keyed_uniform(seed: int, stream: int, word) -> float:
    """Uniform draw in ``(0, 1)`` keyed by ``(seed, stream, word)``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<qq", int(seed), int(stream)))
    h.update(struct.pack(f"<{len(word)}q", *word))
    (x,) = struct.unpack("<Q", h.digest())
    return (x + 0.5) / 2.0**64


@dataclass(frozen=True)
class OffspringDistribution:
    """Law of the number of sons.

    ``kind`` is ``pmf`` (``params`` = probabilities of ``0..m_max``),
    ``poisson`` (``params = (lam,)``) or ``geometric`` (``params = (p,)``,
    with ``P(X = k) = (1-p)**k * p``).
    """

    kind: str
    params: tuple
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        k, p = self.kind, self.params
        if k == "pmf":
            arr = np.asarray(p)
            if arr.size == 0 or np.any(arr < 0) or abs(arr.sum() - 1) > PMF_TOL:
                raise ValueError("pmf must be nonnegative and sum to 1 within 1e-12")
            cdf = np.cumsum(arr)
        elif k == "poisson":
            if not (len(p) == 1 and p[0] >= 0):
                raise ValueError("poisson needs lam >= 0")
            top = int(p[0] + 20 * math.sqrt(p[0]) + 40) if p[0] > 0 else 1
            cdf = stats.poisson.cdf(np.arange(top), p[0])
        elif k == "geometric":
            if not (len(p) == 1 and 0 < p[0] <= 1):
                raise ValueError("geometric needs 0 < p <= 1")
            q = 1 - p[0]
            top = 1 if q == 0 else int(math.log(_TABLE_TAIL) / math.log(q)) + 2
            cdf = 1 - q ** (np.arange(top) + 1)
        else:
            raise ValueError(f"unknown distribution kind {k!r}")
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def point_mass(cls, m: int):
        pmf = [0.0] * m + [1.0]
        return cls("pmf", tuple(pmf))

    @classmethod
    def poisson(cls, lam):
        return cls("poisson", (lam,))

    @classmethod
    def geometric(cls, p):
        return cls("geometric", (p,))

    @classmethod
    def from_pmf(cls, probs):
        return cls("pmf", tuple(probs))

    @classmethod
    def parse(cls, text: str):
        """``poisson:2``, ``geom:0.4``, ``pmf:0.2,0.3,0.5`` or ``pmf:@file``."""
        kind, _, rest = text.partition(":")
        if kind == "poisson":
            return cls.poisson(float(rest))
        if kind in ("geom", "geometric"):
            return cls.geometric(float(rest))
        if kind == "pmf":
            path = rest[1:] if rest.startswith("@") else rest
            if rest.startswith("@") or os.path.isfile(path):
                with open(path) as fh:
                    rest = fh.read().replace("\n", ",").replace(" ", ",")
            return cls.from_pmf([float(x) for x in rest.split(",") if x.strip()])
        raise ValueError(f"unknown distribution {text!r}")

    def describe(self) -> str:
        return f"{self.kind}:" + ",".join(f"{x:g}" for x in self.params)

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if self.kind == "pmf":
            return self.params[k] if k < len(self.params) else 0.0
        if self.kind == "poisson":
            return float(stats.poisson.pmf(k, self.params[0]))
        p = self.params[0]
        return (1 - p) ** k * p

    @property
    def mean(self) -> float:
        if self.kind == "pmf":
            return float(np.dot(np.arange(len(self.params)), self.params))
        if self.kind == "poisson":
            return self.params[0]
        p = self.params[0]
        return (1 - p) / p

    def tail_expectation(self, m: int) -> float:
        """``sum_{k > m} k P(X = k)``."""
        if self.kind == "pmf":
            arr = np.asarray(self.params)
            ks = np.arange(arr.size)
            return float(np.dot(ks[m + 1 :], arr[m + 1 :])) if m + 1 < arr.size else 0.0
        if self.kind == "poisson":
            lam = self.params[0]
            # k P(X=k) = lam P(X=k-1)
            return float(lam * stats.poisson.sf(m - 1, lam)) if m >= 1 else lam
        p = self.params[0]
        q = 1 - p
        return q ** (m + 1) * ((m + 1) + q / p)

    def quantile(self, u: float) -> int:
        u = min(u, np.nextafter(1.0, 0.0))
        k = int(np.searchsorted(self._cdf, u, side="right"))
        if k < self._cdf.size:
            return k
        if self.kind == "poisson":
            return int(stats.poisson.ppf(u, self.params[0]))
        if self.kind == "geometric":
            return int(stats.geom.ppf(u, self.params[0])) - 1
        return self._cdf.size - 1

    def draw(self, seed: int, stream: int, word) -> int:
        return self.quantile(keyed_uniform(seed, stream, word))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_gw_tree(dist: OffspringDistribution, max_depth: int, seed: int, stream: int = 0, budget=None) -> TreeTopology:
    """Galton-Watson tree down to generation ``max_depth``.

    Son ``k`` of ``x`` exists iff ``k <= X_x``.  Offspring are also drawn
    for vertices on the last generation, so the returned tree knows
    whether it continues past the cap.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    budget = vertex_budget(budget)
    spheres = [[ROOT]]
    offspring = {}
    total = 1
    for n in range(max_depth + 1):
        nxt = []
        for v in spheres[-1]:
            x = dist.draw(seed, stream, v)
            offspring[v] = x
            if n < max_depth:
                nxt.extend(v + (k,) for k in range(1, x + 1))
        if n == max_depth or not nxt:
            break
        total += len(nxt)
        if total > budget:
            raise BudgetExceeded(
                f"{total} vertices exceeds budget {budget}",
                {"sphere_sizes": [len(s) for s in spheres] + [len(nxt)], "seed": seed},
            )
        spheres.append(nxt)
    return TreeTopology(tuple(tuple(s) for s in spheres), offspring, len(spheres) - 1)


def pruning_threshold(dist: OffspringDistribution, max_m: int = 10_000) -> tuple[int, float]:
    """Smallest ``M >= 0`` with ``sum_{m > M} m P(X = m) < 1``."""
    for m in range(max_m + 1):
        tail = dist.tail_expectation(m)
        if tail < 1:
            return m, tail
    raise RuntimeError("no threshold found; is the mean finite?")


def prune(t: TreeTopology, m: int) -> list[TreeTopology]:
    """Delete every edge from a vertex with at most ``m`` sons to its sons.

    Returns the connected components, each re-rooted at its vertex of
    minimal length and expressed in words relative to that vertex.  The
    order follows :func:`prune_roots`.
    """
    return [c for _, c in _components(t, m)]


def prune_roots(t: TreeTopology, m: int) -> list:
    """Original words of the component roots, in breadth-first order."""
    return [r for r, _ in _components(t, m)]


def _components(t: TreeTopology, m: int):
    out = []
    for v in t.vertices:
        if v and (t.off(v[:-1]) or 0) > m:
            continue
        out.append((v, _component_from(t, v, m)))
    return out


def _component_from(t: TreeTopology, root, m: int) -> TreeTopology:
    cut = len(root)
    spheres = [[root]]
    offspring = {}
    while True:
        nxt = []
        for v in spheres[-1]:
            k = t.off(v)
            if k is None:
                continue
            kept = k if k > m else 0
            offspring[v[cut:]] = kept
            if kept:
                nxt.extend(t.children(v))
        if not nxt:
            break
        spheres.append(nxt)
    rel = tuple(tuple(v[cut:] for v in s) for s in spheres)
    depth = len(rel) - 1
    return TreeTopology(rel, offspring, depth)


def component_reaches_cap(t: TreeTopology, root, comp: TreeTopology, m: int) -> bool:
    """True if the component touches the truncation and continues past it."""
    if len(root) + comp.depth < t.depth:
        return False
    return any((comp.off(v) or 0) > 0 for v in comp.sphere(comp.depth))


@dataclass
class ComponentSample:
    sphere_counts: list
    size: int
    depth: int
    censored: bool


def explore_root_component(dist, m: int, seed: int, stream: int = 0, depth_cap: int = 10_000, budget=None) -> ComponentSample:
    """Lazily explore the root's component after pruning at ``m``.

    Only vertices with more than ``m`` sons keep their edges, so the
    component is a Galton-Watson tree with offspring ``X 1{X > m}``.
    ``censored`` is set when generation ``depth_cap`` is reached.
    """
    budget = vertex_budget(budget)
    level = [ROOT]
    counts = [1]
    size = 1
    while level and len(counts) <= depth_cap:
        nxt = []
        for v in level:
            x = dist.draw(seed, stream, v)
            if x > m:
                nxt.extend(v + (k,) for k in range(1, x + 1))
        if not nxt:
            break
        size += len(nxt)
        if size > budget:
            raise BudgetExceeded(f"component exceeds budget {budget}", {"sphere_counts": counts, "seed": seed})
        counts.append(len(nxt))
        level = nxt
    censored = len(counts) > depth_cap
    return ComponentSample(counts, size, len(counts) - 1, censored)


@dataclass
class PruningReport:
    threshold: int
    tail_expectation: float
    samples: int
    component_sizes: dict
    max_component_depth: int
    censored: int

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "tail_expectation": self.tail_expectation,
            "samples": self.samples,
            "component_sizes": {str(k): v for k, v in sorted(self.component_sizes.items())},
            "max_component_depth": self.max_component_depth,
            "censored": self.censored,
        }


def supermartingale_check(
    dist: OffspringDistribution,
    m: int | None = None,
    n_samples: int = 10_000,
    horizon: int = 10,
    seed: int = 0,
    depth_cap: int = 10_000,
) -> dict:
    """Monte-Carlo check of ``E[Y_{n+1} / Y_n | Y_n > 0] <= sum_{k>m} k P(X=k)``.

    ``Y_n`` is the size of generation ``n`` of the root's pruned component.
    Sample ``i`` uses stream ``i`` of ``seed``.  Ratios are reported per
    generation ``n = 1..horizon`` and pooled over those generations; each
    passes when its mean is at most the analytic value plus three standard
    errors.
    """
    if m is None:
        m, _ = pruning_threshold(dist)
    analytic = dist.tail_expectation(m)
    if analytic >= 1:
        raise ValueError(f"tail expectation {analytic} at M={m} is not below 1")
    sizes = Counter()
    max_depth = 0
    censored = 0
    ratios = {n: [] for n in range(1, horizon + 1)}
    for i in range(n_samples):
        c = explore_root_component(dist, m, seed, i, depth_cap)
        sizes[c.size] += 1
        max_depth = max(max_depth, c.depth)
        censored += c.censored
        y = c.sphere_counts + [0] * (horizon + 2)
        for n in range(1, horizon + 1):
            if y[n] > 0:
                ratios[n].append(y[n + 1] / y[n])
    per_n = []
    for n in range(1, horizon + 1):
        per_n.append(_ratio_stats(n, ratios[n], analytic))
    pooled = _ratio_stats("pooled", [r for n in ratios for r in ratios[n]], analytic)
    report = PruningReport(m, analytic, n_samples, dict(sizes), max_depth, censored)
    return {
        "report": report,
        "analytic_mean": analytic,
        "per_generation": per_n,
        "pooled": pooled,
        "passed": all(s["passed"] for s in per_n) and pooled["passed"],
    }


def _ratio_stats(label, values, analytic):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {"n": label, "count": 0, "mean": math.nan, "se": math.nan, "passed": True}
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return {"n": label, "count": int(values.size), "mean": mean, "se": se, "passed": mean <= analytic + 3 * se}


# ---------------------------------------------------------------------------
# stationary offspring sequences
# ---------------------------------------------------------------------------


def iid_offspring_sequence(dist: OffspringDistribution, length: int, seed: int, stream: int = 0) -> OffspringSequence:
    """Explicit sequence ``b_0..b_{length-1}`` of i.i.d. draws.

    Zero draws are not valid offspring counts; use a law supported on
    ``{1, 2, ...}``.
    """
    vals = [dist.draw(seed, stream, (n,)) for n in range(length)]
    return OffspringSequence.explicit(vals)


def stationary_cut_levels(b_process, m: int, horizon: int) -> list[int]:
    """Levels ``n <= horizon`` with ``b_n = m``.

    ``b_process`` is an :class:`OffspringSequence`, a callable ``n -> b_n``
    or an array.  Cutting the edges between ``S_n`` and ``S_{n+1}`` at two
    consecutive such levels leaves a finite forest in between.  An empty
    list is a valid result.
    """
    if isinstance(b_process, OffspringSequence):
        get: Callable[[int], int] = b_process.term
        stop = horizon if b_process.stored_length is None else min(horizon, b_process.stored_length - 1)
    elif callable(b_process):
        get, stop = b_process, horizon
    else:
        arr = list(b_process)
        get, stop = arr.__getitem__, min(horizon, len(arr) - 1)
    return [n for n in range(stop + 1) if get(n) == m]


def level_gaps(levels) -> np.ndarray:
    return np.diff(np.asarray(levels, dtype=int))
