"""Reduction of offspring-tree adjacency matrices to Jacobi blocks.

For a tree whose generation-``n`` vertices all have ``b_n`` sons, the
adjacency matrix splits into a direct sum over ``n`` of semi-infinite
Jacobi matrices with off-diagonal ``sqrt(b_n), sqrt(b_{n+1}), ...``, the
``n``-th one repeated once for each dimension of the functions on
generation ``n`` that sum to zero over every set of siblings.  A potential that depends only
on the generation adds ``v(n), v(n+1), ...`` on the diagonal of block ``n``.

Block entries are read off the sequence; nothing here builds bases of the
invariant subspaces numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import CheckFailed, NotSphereSymmetric
from .graph_core import OffspringSequence, TreeTopology, build_offspring_tree
from .operators import PotentialSpec, SchrodingerOperator, dense_matrix


@dataclass(frozen=True)
class JacobiBlock:
    """Block ``start`` of the decomposition.

    ``size`` is ``None`` for the semi-infinite block and the truncation
    size otherwise.
    """

    start: int
    sequence: OffspringSequence
    potential: PotentialSpec = field(default_factory=PotentialSpec.zero)
    multiplicity: int = 1
    size: int | None = None

    def offdiag(self, size: int | None = None) -> np.ndarray:
        size = self._size(size)
        b = self.sequence.terms(self.start + max(size - 1, 0))[self.start :]
        return np.sqrt(np.asarray(b, dtype=float))

    def diag(self, size: int | None = None) -> np.ndarray:
        size = self._size(size)
        return np.array([self.potential.value(self.start + k) for k in range(size)], dtype=float)

    def matrix(self, size: int | None = None) -> np.ndarray:
        size = self._size(size)
        e = self.offdiag(size)
        return np.diag(self.diag(size)) + np.diag(e, 1) + np.diag(e, -1)

    def eigenvalues(self, size: int | None = None) -> np.ndarray:
        size = self._size(size)
        d, e = self.diag(size), self.offdiag(size)
        if size == 1:
            return d.copy()
        return eigh_tridiagonal(d, e, eigvals_only=True)

    def _size(self, size):
        size = self.size if size is None else size
        if size is None or size < 1:
            raise ValueError("a positive truncation size is required")
        return size


def block_multiplicity(b: OffspringSequence, n: int) -> int:
    """How often block ``n`` repeats: 1 for ``n = 0``, else ``(b_{n-1} - 1) * prod_{i<n-1} b_i``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1
    prod = 1
    for i in range(n - 1):
        prod *= b.term(i)
    return (b.term(n - 1) - 1) * prod


def sphere_sizes(b: OffspringSequence, count: int) -> list[int]:
    sizes = [1]
    for n in range(count - 1):
        sizes.append(sizes[-1] * b.term(n))
    return sizes


def isometry_apply(t: TreeTopology, f) -> np.ndarray:
    """``(Uf)(x) = f(father x) / sqrt(off(father x))`` for ``x`` off the root."""
    f = np.asarray(f)
    fathers, scale = _father_arrays(t)
    last = t.lengths() == t.depth
    if np.any(f[last] != 0):
        raise ValueError("f must vanish on the last stored sphere")
    out = np.zeros(len(t), dtype=np.result_type(f, float))
    mask = fathers >= 0
    out[mask] = f[fathers[mask]] * scale[mask]
    return out


def isometry_adjoint_apply(t: TreeTopology, f) -> np.ndarray:
    """``(U*f)(x) = sum over sons y of f(y) / sqrt(off(x))``."""
    f = np.asarray(f)
    fathers, scale = _father_arrays(t)
    mask = fathers >= 0
    out = np.zeros(len(t), dtype=np.result_type(f, float))
    np.add.at(out, fathers[mask], f[mask] * scale[mask])
    return out


def _father_arrays(t: TreeTopology):
    idx = t.index
    fathers = np.full(len(t), -1, dtype=int)
    scale = np.zeros(len(t))
    for i, v in enumerate(t.vertices):
        if v:
            p = v[:-1]
            fathers[i] = idx[p]
            scale[i] = 1.0 / np.sqrt(t.off(p))
    return fathers, scale


def decompose(b: OffspringSequence, v: PotentialSpec | None = None, depth: int = 1) -> list[JacobiBlock]:
    """Truncated blocks ``n = 0..depth-1`` for the tree on generations ``0..depth-1``.

    Block ``n`` is cut to size ``depth - n``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    v = PotentialSpec.zero() if v is None else v
    if not v.sphere_symmetric:
        raise NotSphereSymmetric("decompose requires a potential depending only on the generation")
    blocks = []
    for n in range(depth):
        blocks.append(JacobiBlock(n, b, v, block_multiplicity(b, n), depth - n))
    return blocks


@dataclass
class SpectralReport:
    depth: int
    n_vertices: int
    blocks: list
    tree_eigenvalues: np.ndarray
    block_eigenvalues: np.ndarray
    max_mismatch: float
    worst_index: int
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_mismatch <= self.tol

    @property
    def worst_pair(self) -> tuple[float, float]:
        i = self.worst_index
        return float(self.tree_eigenvalues[i]), float(self.block_eigenvalues[i])

    def to_json(self) -> dict:
        out_blocks = []
        for blk in self.blocks:
            out_blocks.append(
                {
                    "n": blk.start,
                    "size": blk.size,
                    "multiplicity": blk.multiplicity,
                    "offdiag": blk.offdiag().tolist(),
                    "diag": blk.diag().tolist(),
                    "eigenvalues": blk.eigenvalues().tolist(),
                }
            )
        return {
            "depth": self.depth,
            "n_vertices": self.n_vertices,
            "blocks": out_blocks,
            "max_mismatch": self.max_mismatch,
            "worst_pair": list(self.worst_pair),
            "tol": self.tol,
            "ok": self.ok,
        }


def expanded_block_spectrum(blocks: list[JacobiBlock]) -> np.ndarray:
    parts = [np.repeat(blk.eigenvalues(), blk.multiplicity) for blk in blocks if blk.multiplicity]
    return np.sort(np.concatenate(parts)) if parts else np.empty(0)


def verify_spectral_equivalence(
    b: OffspringSequence,
    v: PotentialSpec | None = None,
    depth: int = 1,
    tol: float = 1e-8,
    raise_on_failure: bool = True,
) -> SpectralReport:
    """Compare the dense spectrum of the truncated tree with the block spectra.

    Both sides are sorted and compared position by position.
    """
    v = PotentialSpec.zero() if v is None else v
    blocks = decompose(b, v, depth)
    tree = build_offspring_tree(b, depth - 1)
    total = sum(blk.multiplicity * blk.size for blk in blocks)
    if total != len(tree):
        raise CheckFailed(f"block dimensions sum to {total}, tree has {len(tree)} vertices")
    h = SchrodingerOperator(tree.to_graph(), v.on(tree.vertices))
    lam = np.linalg.eigvalsh(dense_matrix(h))
    mu = expanded_block_spectrum(blocks)
    diff = np.abs(lam - mu)
    worst = int(np.argmax(diff)) if diff.size else 0
    report = SpectralReport(depth, len(tree), blocks, lam, mu, float(diff.max(initial=0.0)), worst, tol)
    if raise_on_failure and not report.ok:
        a, c = report.worst_pair
        raise CheckFailed(
            f"eigenvalue mismatch {report.max_mismatch:.3e} > {tol:.1e} at position {worst}: tree {a!r} vs blocks {c!r}",
            report,
        )
    return report
