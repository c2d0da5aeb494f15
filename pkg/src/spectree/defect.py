"""Explicit solutions of ``A* f = z f`` and square-summability diagnostics.

Two constructions are provided: the sibling-constant recursion on a tree
(every son of a vertex gets the same value) and the three-term recurrence
of a Jacobi block.  The verdicts returned here are numerical diagnostics
on a finite range, never proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import mpmath
import numpy as np

from .decomposition import JacobiBlock
from .errors import InvalidOffspring
from .graph_core import TreeTopology

DEFAULT_EPS = 1e-12
WINDOW_FRACTION = 0.1
OVERFLOW = 1e200
PRECISION_FLAG = 1e-6


class Summability(str, Enum):
    LIKELY_SUMMABLE = "LikelySummable"
    LIKELY_DIVERGENT = "LikelyDivergent"
    UNDECIDED = "Undecided"


@dataclass
class DefectProfile:
    """Norm profile of a candidate defect vector.

    ``sphere_norms[n]`` is the squared norm on generation ``n`` (for a
    Jacobi solution, ``|u_n|**2``).
    """

    sphere_norms: np.ndarray
    partial_sums: np.ndarray
    tail_ratio: float
    verdict: Summability
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "terms": int(self.sphere_norms.size),
            "partial_sum": float(self.partial_sums[-1]) if self.partial_sums.size else 0.0,
            "tail_ratio": self.tail_ratio,
            "verdict": self.verdict.value,
            **{k: v for k, v in self.details.items()},
        }


def _default_window(n: int) -> int:
    return max(2, int(math.ceil(WINDOW_FRACTION * n)))


def summability_verdict(terms, window: int | None = None, eps: float = DEFAULT_EPS, overflow: bool = False) -> Summability:
    """Classify a sequence of nonnegative terms by its last window.

    ``LikelySummable``: every partial-sum increment in the window is below
    ``eps`` and the second half of the window does not exceed the first.
    ``LikelyDivergent``: overflow, or the window is bounded below by a
    positive constant no smaller than the minimum of the earlier terms.
    """
    terms = np.asarray(terms, dtype=float)
    if overflow:
        return Summability.LIKELY_DIVERGENT
    window = _default_window(terms.size) if window is None else window
    if window < 2 or terms.size < window:
        raise ValueError("the window needs at least 2 data points")
    tail = terms[-window:]
    half = window // 2
    if np.all(tail < eps) and tail[half:].max() <= tail[:half].max():
        return Summability.LIKELY_SUMMABLE
    head = terms[:-window]
    floor = tail.min()
    if floor > 0 and (head.size == 0 or floor >= (1 - 1e-6) * head.min()):
        return Summability.LIKELY_DIVERGENT
    return Summability.UNDECIDED


def make_profile(terms, window=None, eps=DEFAULT_EPS, overflow=False, **details) -> DefectProfile:
    terms = np.asarray(terms, dtype=float)
    if np.any(terms < 0):
        raise ValueError("norms must be nonnegative")
    window = _default_window(terms.size) if window is None else window
    with np.errstate(over="ignore"):
        partial = np.cumsum(terms)
    verdict = summability_verdict(terms, window, eps, overflow)
    last = terms[-window:].sum()
    prev = terms[-2 * window : -window].sum() if terms.size >= 2 * window else math.nan
    ratio = float(last / prev) if prev and math.isfinite(prev) else math.nan
    details = {"window": window, "eps": eps, "overflow": overflow, **details}
    return DefectProfile(terms, partial, ratio, verdict, details)


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------


def build_tree_defect_vector(t: TreeTopology, z: complex = 1j, window=None, eps=DEFAULT_EPS):
    """Sibling-constant solution of ``sum_{y~x} f(y) = z f(x)`` with ``f(root) = 1``.

    Sons of the root get ``z / off(root)``; sons of any other interior
    ``x`` get ``(z f(x) - f(father x)) / off(x)``.  Returns ``(f, profile)``
    with ``f`` aligned to ``t.vertices``.
    """
    idx = t.index
    f = np.zeros(len(t), dtype=complex)
    f[idx[()]] = 1.0
    for n in range(t.depth):
        for x in t.sphere(n):
            k = t.off(x)
            if not k:
                raise InvalidOffspring(f"vertex {x} inside the truncation has no sons")
            fx = f[idx[x]]
            up = f[idx[x[:-1]]] if x else 0.0
            val = (z * fx - up) / k
            for y in t.children(x):
                f[idx[y]] = val
    norms = sphere_norms(t, f)
    residual = tree_defect_residual(t, f, z)
    if norms.size < 2:
        profile = DefectProfile(norms, np.cumsum(norms), math.nan, Summability.UNDECIDED, {"residual": residual})
    else:
        profile = make_profile(norms, window or 2, eps, residual=residual)
    return f, profile


def sphere_norms(t: TreeTopology, f) -> np.ndarray:
    lengths = t.lengths()
    return np.bincount(lengths, weights=np.abs(np.asarray(f)) ** 2, minlength=t.depth + 1)


def tree_defect_residual(t: TreeTopology, f, z: complex = 1j) -> float:
    """``max |sum_{y~x} f(y) - z f(x)|`` over vertices strictly inside the truncation."""
    g = t.to_graph()
    r = g.weights @ np.asarray(f) - z * np.asarray(f)
    inside = t.lengths() < t.depth
    return float(np.abs(r[inside]).max(initial=0.0))


def sibling_constant(t: TreeTopology, f) -> bool:
    """Exact check that all sons of each vertex carry the same value."""
    idx = t.index
    for x in t.vertices:
        kids = t.children(x)
        if kids and any(f[idx[y]] != f[idx[kids[0]]] for y in kids):
            return False
    return True


def sphere_norm_inequality(t: TreeTopology, f) -> list[dict]:
    """Per-generation check of the sphere-norm growth bound.

    For ``n = 0..depth-1``::

        |f|^2_{S_{n+1}} <= 2 (max off S_{n-1} / min off S_n) |f|^2_{S_{n-1}}
                           + (2 / min off S_n) |f|^2_{S_n}

    with the first term dropped for ``n = 0``.
    """
    norms = sphere_norms(t, f)
    rows = []
    for n in range(t.depth):
        offs = [t.off(x) for x in t.sphere(n)]
        mn = min(offs)
        rhs = 2.0 / mn * norms[n]
        if n >= 1:
            mx = max(t.off(x) for x in t.sphere(n - 1))
            rhs += 2.0 * mx / mn * norms[n - 1]
        lhs = norms[n + 1]
        # slack for rounding in the accumulated norms
        ok = lhs <= rhs * (1 + 1e-12) + 1e-300
        rows.append({"n": n, "lhs": float(lhs), "rhs": float(rhs), "ok": bool(ok)})
    return rows


# ---------------------------------------------------------------------------
# Jacobi blocks
# ---------------------------------------------------------------------------


def _recurrence(d, e, z, n_max):
    u = np.zeros(n_max, dtype=complex)
    u[0] = 1.0
    overflow_at = None
    if n_max > 1:
        u[1] = (z - d[0]) / e[0]
    for k in range(1, n_max - 1):
        u[k + 1] = ((z - d[k]) * u[k] - e[k - 1] * u[k - 1]) / e[k]
        if abs(u[k + 1]) > OVERFLOW:
            overflow_at = k + 1
            break
    if overflow_at is not None:
        u = u[: overflow_at + 1]
    return u, overflow_at


def _recurrence_mp(block: JacobiBlock, z, n, dps=40):
    with mpmath.workdps(dps):
        z = mpmath.mpc(z)
        d = [mpmath.mpf(float(x)) for x in block.diag(n)]
        b = block.sequence.terms(block.start + max(n - 1, 0))[block.start :]
        e = [mpmath.sqrt(mpmath.mpf(x)) for x in b]
        u = [mpmath.mpc(1)]
        if n > 1:
            u.append((z - d[0]) / e[0])
        for k in range(1, n - 1):
            u.append(((z - d[k]) * u[k] - e[k - 1] * u[k - 1]) / e[k])
        return [float(abs(x) ** 2) for x in u]


def jacobi_defect_solution(block: JacobiBlock, z: complex = 1j, n_max: int = 10_000, window=None, eps=DEFAULT_EPS, extended=True):
    """Solution of the three-term recurrence of ``block`` at spectral parameter ``z``.

    ``u_0 = 1``, ``u_1 = (z - d_0)/e_0`` and
    ``u_{k+1} = ((z - d_k) u_k - e_{k-1} u_{k-1}) / e_k``.  Stops early when
    ``|u_k|`` exceeds ``1e200``.  When the profile is undecided and
    ``extended`` is set, the squared norms are recomputed in extended
    precision; a relative discrepancy above ``1e-6`` is flagged as
    numerically unstable.  Returns ``(u, profile)``.
    """
    if n_max <= 0:
        raise ValueError("n_max must be positive")
    d = block.diag(n_max)
    e = block.offdiag(n_max)
    if np.any(e <= 0):
        raise ValueError("off-diagonal entries must be positive")
    u, overflow_at = _recurrence(d, e, z, n_max)
    with np.errstate(over="ignore"):
        terms = np.abs(u) ** 2
    if n_max == 1:
        return u, DefectProfile(terms, np.cumsum(terms), math.nan, Summability.UNDECIDED, {"window": 1, "eps": eps})
    profile = make_profile(terms, window, eps, overflow_at is not None, overflow_at=overflow_at, z=str(z))
    if profile.verdict is Summability.UNDECIDED and extended:
        hi = np.array(_recurrence_mp(block, z, terms.size))
        rel = float(np.max(np.abs(hi - terms) / np.maximum(hi, 1e-300)))
        profile.details["precision_discrepancy"] = rel
        profile.details["unstable"] = rel > PRECISION_FLAG
    return u, profile


def sphere_constant_projection(t: TreeTopology, f) -> np.ndarray:
    """``g_n = sqrt(|S_n|) * f_n`` for a sphere-constant ``f``."""
    idx = t.index
    out = []
    for n in range(t.depth + 1):
        s = t.sphere(n)
        out.append(math.sqrt(len(s)) * f[idx[s[0]]])
    return np.array(out)
