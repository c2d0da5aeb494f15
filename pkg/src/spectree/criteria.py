"""Essential self-adjointness and deficiency-index classifiers.

Every asymptotic statement (a series diverges, a sequence is summable or
bounded) is only declared decisively when the offspring or potential tail
is given in closed form.  Explicit finite data always yields a numeric-only
diagnostic or an ``Inconclusive`` verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .graph_core import OffspringSequence, TreeTopology, WeightedGraph
from .operators import ADJACENCY, LAPLACIAN, PotentialSpec, SchrodingerOperator

INF = math.inf
DEFAULT_TERMS = 10_000
RANK_RTOL = 1e-9


class Outcome(str, Enum):
    SELF_ADJOINT = "SelfAdjoint"
    INFINITE_DEFICIENCY = "InfiniteDeficiency"
    INCONCLUSIVE = "Inconclusive"


class Convergence(str, Enum):
    PROVED_DIVERGENT = "ProvedDivergent"
    PROVED_CONVERGENT = "ProvedConvergent"
    NUMERIC_ONLY = "NumericOnly"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    criterion: str
    evidence: dict = field(default_factory=dict)

    @property
    def decisive(self) -> bool:
        return self.outcome is not Outcome.INCONCLUSIVE

    def to_json(self) -> dict:
        return {"outcome": self.outcome.value, "criterion": self.criterion, "evidence": _jsonable(self.evidence)}


@dataclass(frozen=True)
class SeriesDiagnostic:
    terms_examined: int
    partial_sum: float
    tag: Convergence
    proof_route: str | None = None

    def to_json(self) -> dict:
        return {
            "terms_examined": self.terms_examined,
            "partial_sum": self.partial_sum,
            "tag": self.tag.value,
            "proof_route": self.proof_route,
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Enum):
        return x.value
    if hasattr(x, "to_json"):
        return x.to_json()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


# ---------------------------------------------------------------------------
# reciprocal series
# ---------------------------------------------------------------------------


def _as_sequence(b) -> OffspringSequence | list:
    if isinstance(b, OffspringSequence):
        return b
    vals = [float(x) for x in b]
    for i, x in enumerate(vals):
        if not x > 0:
            raise ValueError(f"term {i} = {x}; terms must be positive")
    return vals


def _partial_sum(b, exponent: float, n_terms: int) -> tuple[int, float]:
    """Partial sum of ``b_i**(-exponent)`` over the available terms."""
    if isinstance(b, list):
        vals = b[:n_terms]
        return len(vals), float(sum(x**-exponent for x in vals))
    count = n_terms if b.stored_length is None else min(n_terms, b.stored_length)
    total = 0.0
    examined = 0
    for i in range(count):
        bi = b.term(i)
        examined += 1
        if bi > 1e300:
            # remaining terms are below double resolution
            break
        total += float(bi) ** -exponent
    return examined, total


def reciprocal_series(b, exponent: float = 1.0, n_terms: int = DEFAULT_TERMS) -> SeriesDiagnostic:
    """Decide convergence of ``sum b_i**(-exponent)`` from the tail descriptor."""
    b = _as_sequence(b)
    examined, total = _partial_sum(b, exponent, n_terms)
    if isinstance(b, list) or not b.closed_form:
        return SeriesDiagnostic(examined, total, Convergence.NUMERIC_ONLY, None)
    kind, p = b.tail_kind, b.tail_params
    if kind == "power":
        q = p[0] * exponent
        # (n+1)^alpha / 2 <= floor((n+1)^alpha) <= (n+1)^alpha
        tag = Convergence.PROVED_DIVERGENT if q <= 1 else Convergence.PROVED_CONVERGENT
        return SeriesDiagnostic(examined, total, tag, f"p-series comparison, p = {q:g}")
    if kind == "exponential":
        if p[0] == 1:
            return SeriesDiagnostic(examined, total, Convergence.PROVED_DIVERGENT, "terms constant 1")
        return SeriesDiagnostic(
            examined, total, Convergence.PROVED_CONVERGENT, f"geometric comparison, ratio {p[0] ** -exponent:g}"
        )
    if kind == "double_exponential":
        return SeriesDiagnostic(examined, total, Convergence.PROVED_CONVERGENT, "ratio test, ratio -> 0")
    if kind in ("constant", "periodic"):
        return SeriesDiagnostic(
            examined, total, Convergence.PROVED_DIVERGENT, f"terms bounded below by {max(p) ** -exponent:g}"
        )
    raise AssertionError(kind)


def carleman_test(b, n_terms: int = DEFAULT_TERMS) -> SeriesDiagnostic:
    """Divergence of ``sum 1/b_i`` for inter-sphere edge-sum bounds ``b_i``.

    ``b`` is user supplied: either an :class:`OffspringSequence` or a finite
    list of positive reals (always numeric-only).
    """
    return reciprocal_series(b, 1.0, n_terms)


def carleman_pairs_series(b: OffspringSequence) -> SeriesDiagnostic:
    """``sum 1/|S_{i+1}|``: the Carleman series when ``b_i`` is read as the
    total edge weight between consecutive spheres of an offspring tree."""
    count = DEFAULT_TERMS if b.stored_length is None else b.stored_length
    total, size, examined = 0.0, 1, 0
    for i in range(count):
        size *= b.term(i)
        examined += 1
        if size > 1e300:
            break
        total += 1.0 / size
    if not b.closed_form:
        return SeriesDiagnostic(examined, total, Convergence.NUMERIC_ONLY)
    kind, p = b.tail_kind, b.tail_params
    ones = (kind == "constant" and p[0] == 1) or (kind == "periodic" and max(p) == 1) or (
        kind == "exponential" and p[0] == 1
    )
    if ones:
        return SeriesDiagnostic(examined, total, Convergence.PROVED_DIVERGENT, "sphere sizes eventually constant")
    return SeriesDiagnostic(examined, total, Convergence.PROVED_CONVERGENT, "sphere sizes grow at least geometrically")


# ---------------------------------------------------------------------------
# Berezanskii per-block test
# ---------------------------------------------------------------------------


def log_concavity(b: OffspringSequence, n_terms: int = DEFAULT_TERMS) -> dict:
    """Check ``b_{i-1} b_{i+1} <= b_i**2`` for ``i >= 1`` and certify the tail.

    Returns a dict with the numeric check over the stored range, the first
    violating index if any, and whether the tail descriptor certifies the
    inequality beyond that range.
    """
    count = n_terms if b.stored_length is None else min(n_terms, b.stored_length)
    if b.tail_kind == "double_exponential":
        count = min(count, max(len(b.prefix) + 3, 8))
    terms = b.terms(count)
    violation = None
    for i in range(1, count - 1):
        if terms[i - 1] * terms[i + 1] > terms[i] ** 2:
            violation = i
            break
    kind, p = b.tail_kind, b.tail_params
    if kind == "power":
        certified = True  # alpha * log(n+1) is concave; floors checked numerically above
    elif kind == "exponential":
        certified = True
    elif kind == "constant":
        certified = True
    elif kind == "periodic":
        certified = len(set(p)) == 1
    else:
        certified = False
    return {
        "checked_terms": count,
        "first_violation": violation,
        "holds_on_range": violation is None,
        "tail_certified": certified and violation is None,
    }


def berezanskii_test(b: OffspringSequence, potential: PotentialSpec | None = None, n_terms: int = DEFAULT_TERMS) -> Verdict:
    """Per-block test on the Jacobi blocks of an offspring tree.

    ``sum 1/sqrt(b_n)`` divergent gives a self-adjoint block for every
    ``n`` whatever the diagonal.  Convergent, with certified log-concavity
    and a bounded generation-dependent potential, makes every
    block deficient; each contributes its multiplicity, hence infinite deficiency.
    """
    potential = PotentialSpec.zero() if potential is None else potential
    series = reciprocal_series(b, 0.5, n_terms)
    evidence = {"series": series.to_json(), "family": b.describe()}
    if series.tag is Convergence.PROVED_DIVERGENT:
        return Verdict(Outcome.SELF_ADJOINT, "berezanskii", evidence)
    if series.tag is Convergence.NUMERIC_ONLY:
        return Verdict(Outcome.INCONCLUSIVE, "berezanskii", evidence)
    lc = log_concavity(b, n_terms)
    evidence["log_concavity"] = lc
    if not lc["tail_certified"]:
        return Verdict(Outcome.INCONCLUSIVE, "berezanskii", evidence)
    if not potential.sphere_symmetric or potential.abs_bound is None:
        evidence["potential"] = "not certified bounded and generation-dependent"
        return Verdict(Outcome.INCONCLUSIVE, "berezanskii", evidence)
    from .decomposition import block_multiplicity

    evidence["block_deficiency"] = "each block contributes its multiplicity"
    evidence["first_multiplicities"] = [block_multiplicity(b, n) for n in range(min(6, _safe_count(b)))]
    return Verdict(Outcome.INFINITE_DEFICIENCY, "berezanskii", evidence)


def _safe_count(b):
    return 6 if b.stored_length is None else b.stored_length + 1


# ---------------------------------------------------------------------------
# exponential growth
# ---------------------------------------------------------------------------


def offspring_ratios(max_off: Sequence, min_off: Sequence) -> np.ndarray:
    """``max off S_{n-1} / min off S_n`` for ``n = 1..``."""
    max_off = np.asarray(max_off, dtype=float)
    min_off = np.asarray(min_off, dtype=float)
    m = min(len(max_off), len(min_off))
    if np.any(min_off[1:m] <= 0):
        raise ValueError("zero minimal offspring on a sphere: the ratio is undefined")
    return max_off[: m - 1] / min_off[1:m]


def sphere_offspring_extremes(t: TreeTopology) -> tuple[list, list]:
    """Per-sphere max and min offspring over the spheres with known offspring."""
    mx, mn = [], []
    for n in range(t.depth + 1):
        offs = [t.off(v) for v in t.sphere(n)]
        if not offs or any(o is None for o in offs):
            break
        mx.append(max(offs))
        mn.append(min(offs))
    return mx, mn


def exponential_growth_test(descriptor, n_terms: int = 200) -> Verdict:
    """Summability of ``n -> max off S_{n-1} / min off S_n``.

    ``descriptor`` is an :class:`OffspringSequence`, a sampled
    :class:`TreeTopology`, or a pair ``(max_off, min_off)`` of per-sphere
    lists.  Only closed-form tails are certified.
    """
    if isinstance(descriptor, OffspringSequence):
        b = descriptor
        count = n_terms if b.stored_length is None else min(n_terms, b.stored_length)
        if b.tail_kind == "double_exponential":
            logs = [math.log(b.term(n)) if n < len(b.prefix) else (b.tail_params[1] ** n) * math.log(b.tail_params[0]) for n in range(min(count, 40))]
            log_ratio = np.array([logs[n - 1] - logs[n] for n in range(1, len(logs))])
            ratios = np.exp(log_ratio)
        else:
            terms = np.array(b.terms(count), dtype=float)
            ratios = terms[:-1] / terms[1:]
        evidence = {"partial_l1_sum": float(ratios.sum()), "terms": int(ratios.size), "family": b.describe()}
        kind, p = b.tail_kind, b.tail_params
        if kind == "double_exponential":
            evidence["route"] = "ratio test on the ratio sequence, limit 0"
            return Verdict(Outcome.INFINITE_DEFICIENCY, "exponential_growth", evidence)
        if kind == "power":
            evidence["route"] = "ratio sequence tends to 1, not summable"
        elif kind == "exponential":
            evidence["route"] = f"ratio sequence tends to {1 / p[0]:g}, not summable"
        elif kind in ("constant", "periodic"):
            evidence["route"] = "ratio sequence bounded below, not summable"
        else:
            evidence["route"] = "finite data only"
        return Verdict(Outcome.INCONCLUSIVE, "exponential_growth", evidence)
    if isinstance(descriptor, TreeTopology):
        mx, mn = sphere_offspring_extremes(descriptor)
    else:
        mx, mn = descriptor
    ratios = offspring_ratios(mx, mn)
    evidence = {"partial_l1_sum": float(ratios.sum()), "terms": int(ratios.size), "route": "finite data only"}
    return Verdict(Outcome.INCONCLUSIVE, "exponential_growth", evidence)


# ---------------------------------------------------------------------------
# Wüst and Nelson, finite-region checks
# ---------------------------------------------------------------------------


@dataclass
class WustReport:
    passed: bool
    flavor: str
    checked: int
    first_violation: object = None
    lhs: float | None = None
    rhs: float | None = None

    def to_json(self):
        return _jsonable(self.__dict__)


def wust_test(h: SchrodingerOperator, exceptional=(), exclude=(), degrees=None, rtol: float = 1e-12) -> WustReport:
    """Pointwise check of ``sum_y E(x,y)^2 d(y) <= V(x)^2`` (adjacency)
    or ``sum_y E(x,y)^2 (1 + d(y)) <= V(x)^2`` (Laplacian).

    ``exceptional`` is the finite set allowed to violate the inequality;
    ``exclude`` removes truncation-distorted vertices from the check.
    ``degrees`` overrides the combinatorial degrees (e.g. true degrees of a
    truncated tree).  ``rtol`` absorbs rounding in ``V(x)**2``.
    """
    g = h.graph
    deg = g.degrees().astype(float) if degrees is None else np.asarray(degrees, dtype=float)
    skip = set(exceptional) | set(exclude)
    w = g.weights
    extra = 1.0 if h.flavor == LAPLACIAN else 0.0
    checked = 0
    for i, x in enumerate(g.vertices):
        if x in skip:
            continue
        checked += 1
        lo, hi = w.indptr[i], w.indptr[i + 1]
        lhs = float(np.sum(w.data[lo:hi] ** 2 * (extra + deg[w.indices[lo:hi]])))
        rhs = float(h.potential[i] ** 2)
        if lhs > rhs * (1 + rtol):
            return WustReport(False, h.flavor, checked, x, lhs, rhs)
    return WustReport(True, h.flavor, checked)


@dataclass
class NelsonReport:
    variant: int
    degree_lipschitz: float
    weight_bound: float
    ratio_bound: float
    degree_bound: float
    weight_lipschitz: float
    region_size: int

    @property
    def passed(self) -> bool:
        vals = (self.degree_lipschitz, self.weight_bound, self.ratio_bound)
        if self.variant == 4:
            vals = (self.degree_bound, self.weight_lipschitz, self.ratio_bound)
        return all(math.isfinite(v) for v in vals)

    def quantities(self) -> dict:
        if self.variant == 4:
            return {"degree_bound": self.degree_bound, "weight_lipschitz": self.weight_lipschitz, "ratio_bound": self.ratio_bound}
        return {"degree_lipschitz": self.degree_lipschitz, "weight_bound": self.weight_bound, "ratio_bound": self.ratio_bound}

    def to_json(self):
        return _jsonable({**self.__dict__, "passed": self.passed})


def nelson_test(g: WeightedGraph, v, region=None, variant: int = 3) -> NelsonReport:
    """Finite-region quantities of the Nelson-commutator criteria.

    Variant 3: ``sup max_{y~x} |d(x)-d(y)|``, ``sup E`` and ``sup |V/d|``.
    Variant 4: ``sup d``, ``sup max_{y~x} |E(x)-E(y)|`` with
    ``E(x) = max_y E(x,y)``, and ``sup |V/E(x)|``.
    A zero denominator with nonzero ``V`` makes the ratio infinite.
    """
    if variant not in (3, 4):
        raise ValueError("variant must be 3 or 4")
    vals = v.on(g.vertices) if isinstance(v, PotentialSpec) else np.asarray(v, dtype=float)
    region = list(g.vertices) if region is None else list(region)
    w = g.weights
    deg = g.degrees().astype(float)
    emax = np.zeros(len(g))
    for i in range(len(g)):
        lo, hi = w.indptr[i], w.indptr[i + 1]
        if hi > lo:
            emax[i] = w.data[lo:hi].max()
    dl = wb = ratio = dmax = el = 0.0
    for x in region:
        i = g.idx(x)
        lo, hi = w.indptr[i], w.indptr[i + 1]
        nb = w.indices[lo:hi]
        if nb.size:
            dl = max(dl, float(np.abs(deg[i] - deg[nb]).max()))
            el = max(el, float(np.abs(emax[i] - emax[nb]).max()))
            wb = max(wb, float(w.data[lo:hi].max()))
        dmax = max(dmax, deg[i])
        denom = deg[i] if variant == 3 else emax[i]
        if denom == 0:
            r = 0.0 if vals[i] == 0 else INF
        else:
            r = abs(vals[i] / denom)
        ratio = max(ratio, r)
    return NelsonReport(variant, dl, wb, ratio, dmax, el, len(region))


def nelson_sweep(b: OffspringSequence, potential: PotentialSpec, radii: Sequence[int], variant: int = 3) -> dict:
    """Evaluate :func:`nelson_test` on balls of growing radius in an offspring tree.

    The tree is built two generations past each radius so that the
    degrees of the ball and of its neighbours are exact.  A quantity is flagged ``growing`` when it strictly
    increases at every step of the sweep.
    """
    from .graph_core import build_offspring_tree

    rows = []
    for r in radii:
        t = build_offspring_tree(b, r + 2)
        g = t.to_graph()
        region = [x for x in t.vertices if len(x) <= r]
        rep = nelson_test(g, potential.on(t.vertices), region, variant)
        rows.append({"radius": r, **rep.quantities(), "finite": rep.passed})
    keys = list(rows[0].keys() - {"radius", "finite"}) if rows else []
    growing = {
        k: len(rows) > 1 and all(rows[i + 1][k] > rows[i][k] for i in range(len(rows) - 1)) for k in sorted(keys)
    }
    return {"rows": rows, "growing": growing, "passed": all(r["finite"] for r in rows) and not any(growing.values())}


def laplacian_bounded_below_test(v: PotentialSpec) -> Verdict:
    """``Δ + V`` with ``V`` certified bounded below is essentially self-adjoint."""
    if v.lower_bound is not None:
        return Verdict(Outcome.SELF_ADJOINT, "bounded_below", {"lower_bound": v.lower_bound, "flavor": LAPLACIAN})
    return Verdict(Outcome.INCONCLUSIVE, "bounded_below", {"lower_bound": None})


# ---------------------------------------------------------------------------
# tensor products
# ---------------------------------------------------------------------------


def ext_mul(a, b):
    """Product on ``N ∪ {inf}`` with ``0 * inf = 0``."""
    if a == 0 or b == 0:
        return 0
    if a == INF or b == INF:
        return INF
    return int(a) * int(b)


def adjacency_rank(k: WeightedGraph, rtol: float = RANK_RTOL) -> int:
    if len(k) == 0:
        return 0
    lam = np.linalg.eigvalsh(k.adjacency_dense())
    scale = np.abs(lam).max()
    if scale == 0:
        return 0
    return int(np.sum(np.abs(lam) > rtol * scale))


def tensor_deficiency(eta_g, k: WeightedGraph, rtol: float = RANK_RTOL):
    """``eta(G x K) = eta(G) * rank(A_K)`` for a finite graph ``K``."""
    return ext_mul(eta_g, adjacency_rank(k, rtol))


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    """An offspring-tree Schrödinger operator to classify.

    ``carleman_reading`` selects how the Carleman bounds ``b_i`` are read off
    the tree: ``"vertex"`` takes the largest edge weight sum from one vertex
    of ``S_i`` into ``S_{i+1}`` (the offspring ``b_i``), ``"pairs"`` the
    total weight between the two spheres (``|S_{i+1}|``).
    """

    family: OffspringSequence
    potential: PotentialSpec = field(default_factory=PotentialSpec.zero)
    flavor: str = ADJACENCY
    carleman_reading: str = "vertex"


def _bounded_degree(b: OffspringSequence) -> bool:
    k, p = b.tail_kind, b.tail_params
    return k in ("constant", "periodic") or (k == "exponential" and p[0] == 1)


def _degree_lipschitz(b: OffspringSequence) -> bool:
    return _bounded_degree(b) or (b.tail_kind == "power" and b.tail_params[0] <= 1)


def _degree_exponent(b: OffspringSequence):
    """Polynomial growth exponent of the offspring, or ``None`` if not polynomial."""
    if _bounded_degree(b):
        return 0.0
    if b.tail_kind == "power":
        return b.tail_params[0]
    return None


def _nelson_certified(p: Problem) -> dict | None:
    b, v = p.family, p.potential
    if not b.closed_form or not v.sphere_symmetric:
        return None
    alpha = _degree_exponent(b)
    ratio_ok = v.abs_bound is not None or (
        v.growth is not None and alpha is not None and v.growth[1] <= alpha
    )
    if _degree_lipschitz(b) and ratio_ok:
        return {"variant": 3, "degree_lipschitz": True, "weights_bounded": True, "potential_over_degree_bounded": True}
    if _bounded_degree(b) and v.abs_bound is not None:
        return {"variant": 4, "degree_bounded": True, "potential_over_weight_bounded": True}
    return None


def _wust_certified(p: Problem) -> dict | None:
    b, v = p.family, p.potential
    if not b.closed_form or not v.sphere_symmetric or v.growth is None:
        return None
    c, q = v.growth
    alpha = _degree_exponent(b)
    if c == 0 or alpha is None:
        return None
    # neighbour degree sum at generation n grows like n^(2 alpha)
    if q > alpha:
        return {"potential_growth": q, "degree_sum_growth": 2 * alpha, "flavor": p.flavor}
    return None


def classify(problem: Problem) -> Verdict:
    """Run the tests in a fixed order and return the first decisive verdict.

    Order: bounded below (Laplacian only), Carleman, Nelson, Wüst,
    Berezanskii, exponential growth.
    """
    b, v, flavor = problem.family, problem.potential, problem.flavor
    trail = {}

    if flavor == LAPLACIAN:
        verdict = laplacian_bounded_below_test(v)
        trail["bounded_below"] = verdict.outcome.value
        if verdict.decisive:
            return verdict

    if problem.carleman_reading == "pairs":
        series = carleman_pairs_series(b)
    else:
        series = carleman_test(b)
    trail["carleman"] = series.tag.value
    if series.tag is Convergence.PROVED_DIVERGENT:
        return Verdict(Outcome.SELF_ADJOINT, "carleman", {"series": series.to_json(), "reading": problem.carleman_reading})

    cert = _nelson_certified(problem)
    trail["nelson"] = bool(cert)
    if cert:
        return Verdict(Outcome.SELF_ADJOINT, "nelson", cert)

    cert = _wust_certified(problem)
    trail["wust"] = bool(cert)
    if cert:
        return Verdict(Outcome.SELF_ADJOINT, "wust", cert)

    verdict = berezanskii_test(b, v if flavor == ADJACENCY else None)
    if flavor == LAPLACIAN and verdict.outcome is Outcome.INFINITE_DEFICIENCY:
        # the Laplacian adds an unbounded diagonal to every block
        verdict = Verdict(Outcome.INCONCLUSIVE, "berezanskii", verdict.evidence)
    trail["berezanskii"] = verdict.outcome.value
    if verdict.decisive:
        return verdict

    if flavor == ADJACENCY and v.is_zero:
        verdict = exponential_growth_test(b)
        trail["exponential_growth"] = verdict.outcome.value
        if verdict.decisive:
            return verdict

    return Verdict(Outcome.INCONCLUSIVE, "none", {"trail": trail, "family": b.describe()})
