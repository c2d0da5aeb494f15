import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectree.decomposition import (
    JacobiBlock,
    block_multiplicity,
    decompose,
    isometry_adjoint_apply,
    isometry_apply,
    sphere_sizes,
    verify_spectral_equivalence,
)
from spectree.errors import CheckFailed, NotSphereSymmetric
from spectree.graph_core import OffspringSequence, build_offspring_tree
from spectree.operators import PotentialSpec


def father_matrix(t):
    """Dense ``U`` built directly from words: ``U[x, father x] = off(father)**-0.5``."""
    n = len(t)
    u = np.zeros((n, n))
    for i, v in enumerate(t.vertices):
        if v:
            u[i, t.index[v[:-1]]] = 1 / np.sqrt(t.off(v[:-1]))
    return u


def sibling_zero_basis(t, n):
    """Orthonormal basis (Gram-Schmidt via QR) of functions on S_n summing to 0 over every sibling set."""
    cols = []
    idx = t.index
    for p in t.sphere(n - 1):
        kids = t.children(p)
        for j in range(1, len(kids)):
            f = np.zeros(len(t))
            f[idx[kids[0]]] = 1.0
            f[idx[kids[j]]] = -1.0
            cols.append(f)
    if not cols:
        return np.zeros((len(t), 0))
    q, _ = np.linalg.qr(np.array(cols).T)
    return q


@pytest.mark.parametrize("family", ["periodic:2,3", "power:2", "constant:3", "explicit:2,1,3,2"])
def test_gram_schmidt_oracle_for_blocks(family):
    b = OffspringSequence.parse(family)
    depth = 4
    t = build_offspring_tree(b, depth)
    a = t.to_graph().adjacency_dense()
    u = father_matrix(t)
    for n in range(depth + 1):
        if n == 0:
            q = np.zeros((len(t), 1))
            q[0, 0] = 1.0
        else:
            q = sibling_zero_basis(t, n)
        assert q.shape[1] == block_multiplicity(b, n)
        if q.shape[1] == 0:
            continue
        size = depth + 1 - n
        blk = JacobiBlock(n, b, multiplicity=q.shape[1], size=size)
        for col in range(q.shape[1]):
            basis = [q[:, col]]
            for _ in range(size - 1):
                basis.append(u @ basis[-1])
            p = np.array(basis).T
            np.testing.assert_allclose(p.T @ p, np.eye(size), atol=1e-12)
            np.testing.assert_allclose(p.T @ a @ p, blk.matrix(), atol=1e-12)
            # the span is invariant under A
            ap = a @ p
            np.testing.assert_allclose(p @ (p.T @ ap), ap, atol=1e-12)


def test_multiplicities_sum_to_vertex_count():
    b = OffspringSequence.periodic([2, 3])
    for depth in range(1, 8):
        blocks = decompose(b, None, depth)
        assert sum(x.multiplicity * x.size for x in blocks) == sum(sphere_sizes(b, depth))


def test_multiplicity_values():
    b = OffspringSequence.periodic([2, 3])
    assert [block_multiplicity(b, n) for n in range(5)] == [1, 1, 4, 6, 24]


def test_block_entries():
    b = OffspringSequence.power(2)
    blk = decompose(b, PotentialSpec.power(1.0, 1.0), 4)[1]
    np.testing.assert_allclose(blk.offdiag(), np.sqrt([4, 9]))
    np.testing.assert_allclose(blk.diag(), [2.0, 3.0, 4.0])


def test_size_one_block():
    blk = JacobiBlock(3, OffspringSequence.constant(2), PotentialSpec.const(5.0), 1, 1)
    assert blk.eigenvalues().tolist() == [5.0]


def test_explicit_potential_rejected():
    with pytest.raises(NotSphereSymmetric):
        decompose(OffspringSequence.constant(2), PotentialSpec.vertexwise({(): 0.0}), 3)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=5, max_size=5), st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_spectral_equivalence_property(prefix, v):
    b = OffspringSequence.explicit(prefix)
    rep = verify_spectral_equivalence(b, PotentialSpec.spherical(v), 5)
    assert rep.max_mismatch <= 1e-8


def test_spectral_mismatch_raises_with_report(monkeypatch):
    import spectree.decomposition as d

    b = OffspringSequence.constant(2)
    real = d.expanded_block_spectrum
    monkeypatch.setattr(d, "expanded_block_spectrum", lambda blocks: real(blocks) + 1e-3)
    with pytest.raises(CheckFailed) as exc:
        verify_spectral_equivalence(b, None, 4)
    assert exc.value.report.max_mismatch > 1e-4


def test_isometry_and_adjoint():
    t = build_offspring_tree(OffspringSequence.periodic([2, 3]), 4)
    rng = np.random.default_rng(0)
    f = rng.normal(size=len(t))
    f[t.lengths() == t.depth] = 0
    g = rng.normal(size=len(t))
    uf = isometry_apply(t, f)
    assert np.dot(uf, uf) == pytest.approx(np.dot(f, f))
    assert np.dot(uf, g) == pytest.approx(np.dot(f, isometry_adjoint_apply(t, g)))
    np.testing.assert_allclose(uf, father_matrix(t) @ f, atol=1e-14)
    with pytest.raises(ValueError):
        isometry_apply(t, np.ones(len(t)))
