import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectree.decomposition import JacobiBlock, decompose
from spectree.defect import (
    Summability,
    build_tree_defect_vector,
    jacobi_defect_solution,
    make_profile,
    sibling_constant,
    sphere_constant_projection,
    sphere_norm_inequality,
    summability_verdict,
    tree_defect_residual,
)
from spectree.errors import InvalidOffspring
from spectree.graph_core import OffspringSequence, build_offspring_tree, tree_from_offspring_map
from spectree.operators import PotentialSpec

from _corpus import corpus


def solve_rowwise(t, z=1j):
    """Oracle: fix f(root) = 1 and solve the interior rows of (A - z) f = 0
    together with sibling equality, as one dense least-squares system."""
    a = t.to_graph().adjacency_dense().astype(complex)
    n = len(t)
    rows, rhs = [], []
    inside = [i for i, v in enumerate(t.vertices) if len(v) < t.depth]
    for i in inside:
        r = a[i].copy()
        r[i] -= z
        rows.append(r)
        rhs.append(0)
    for v in t.vertices:
        kids = t.children(v)
        for k in kids[1:]:
            r = np.zeros(n, complex)
            r[t.index[kids[0]]], r[t.index[k]] = 1, -1
            rows.append(r)
            rhs.append(0)
    r = np.zeros(n, complex)
    r[0] = 1
    rows.append(r)
    rhs.append(1)
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs, complex), rcond=None)
    return sol


def test_root_children_value():
    t = build_offspring_tree(OffspringSequence.constant(2), 3)
    f, _ = build_tree_defect_vector(t)
    assert f[t.index[(1,)]] == 0.5j
    assert f[t.index[(1, 2)]] == pytest.approx(-0.75)
    np.testing.assert_allclose(f, solve_rowwise(t), atol=1e-12)


@pytest.mark.parametrize("name,t", sorted(corpus().items()))
def test_tree_defect_against_linear_solve(name, t):
    if len(t) > 700:
        pytest.skip("dense oracle kept small")
    f, prof = build_tree_defect_vector(t)
    np.testing.assert_allclose(f, solve_rowwise(t), atol=1e-9)
    assert prof.details["residual"] <= 1e-12


def test_path_is_likely_divergent():
    t = build_offspring_tree(OffspringSequence.constant(1), 8)
    _, prof = build_tree_defect_vector(t)
    assert prof.verdict is Summability.LIKELY_DIVERGENT


def test_zero_offspring_inside_is_an_error():
    t = tree_from_offspring_map({(): 2, (1,): 1, (2,): 0}, 2)
    with pytest.raises(InvalidOffspring):
        build_tree_defect_vector(t)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=2, max_size=6))
def test_tree_defect_invariants(prefix):
    b = OffspringSequence.explicit(prefix)
    t = build_offspring_tree(b, len(prefix))
    f, prof = build_tree_defect_vector(t)
    assert tree_defect_residual(t, f) <= 1e-12
    assert sibling_constant(t, f)
    assert all(r["ok"] for r in sphere_norm_inequality(t, f))
    assert np.all(prof.sphere_norms >= 0)
    assert np.all(np.diff(prof.partial_sums) >= 0)


@pytest.mark.parametrize("family", ["periodic:2,3", "power:2", "constant:1", "explicit:3,1,2,2,1,3"])
def test_tree_vector_matches_block_zero(family):
    b = OffspringSequence.parse(family)
    depth = 5
    t = build_offspring_tree(b, depth)
    f, _ = build_tree_defect_vector(t)
    g = sphere_constant_projection(t, f)
    blk = decompose(b, None, depth + 1)[0]
    u, _ = jacobi_defect_solution(blk, 1j, depth + 1)
    np.testing.assert_allclose(g, u, atol=1e-10)


def test_free_jacobi_grows_geometrically():
    blk = JacobiBlock(0, OffspringSequence.constant(1))
    u, prof = jacobi_defect_solution(blk, 1j, 200)
    assert prof.verdict is Summability.LIKELY_DIVERGENT
    # dominant root of r + 1/r = i has modulus the golden ratio
    phi = (1 + math.sqrt(5)) / 2
    assert abs(u[150]) / abs(u[149]) == pytest.approx(phi, rel=1e-6)


def test_overflow_is_reported():
    blk = JacobiBlock(0, OffspringSequence.constant(1))
    u, prof = jacobi_defect_solution(blk, 1j, 5000)
    assert prof.details["overflow"] and prof.verdict is Summability.LIKELY_DIVERGENT
    assert u.size < 5000


def test_recurrence_against_mpmath():
    b = OffspringSequence.power(3)
    blk = JacobiBlock(0, b)
    u, _ = jacobi_defect_solution(blk, 1j, 300, extended=False)
    with mpmath.workdps(50):
        e = [mpmath.sqrt(b.term(k)) for k in range(300)]
        w = [mpmath.mpc(1), mpmath.mpc(0, 1) / e[0]]
        for k in range(1, 299):
            w.append((mpmath.mpc(0, 1) * w[k] - e[k - 1] * w[k - 1]) / e[k])
    ref = np.array([complex(x) for x in w])
    np.testing.assert_allclose(u, ref, rtol=1e-10, atol=1e-300)


def test_real_eigenvalue_gives_eigenvector():
    b = OffspringSequence.periodic([2, 3])
    size = 7
    blk = JacobiBlock(1, b, PotentialSpec.power(0.5, 1.0), size=size)
    lam = blk.eigenvalues()[3]
    u, _ = jacobi_defect_solution(blk, lam, size)
    u = u.real
    r = blk.matrix() @ u - lam * u
    assert np.abs(r).max() <= 1e-9 * np.abs(u).max()


def test_power1_diverges_and_power3_undecided_profile():
    u1, p1 = jacobi_defect_solution(decompose(OffspringSequence.power(1), None, 1)[0], 1j, 10_000)
    assert p1.verdict is Summability.LIKELY_DIVERGENT
    u3, p3 = jacobi_defect_solution(decompose(OffspringSequence.power(3), None, 1)[0], 1j, 10_000)
    # the terms decay like k^-1.5: summable, but far above 1e-12 at k = 10^4
    k = np.arange(5000, 10_000)
    slope = np.polyfit(np.log(k), np.log(p3.sphere_norms[k]), 1)[0]
    assert slope == pytest.approx(-1.5, abs=0.05)
    assert not p3.details["unstable"]


def test_summability_examples():
    k = np.arange(1, 2001, dtype=float)
    assert summability_verdict(2.0**-k) is Summability.LIKELY_SUMMABLE
    assert summability_verdict(np.ones(100)) is Summability.LIKELY_DIVERGENT
    assert summability_verdict(1 / k) is Summability.UNDECIDED
    with pytest.raises(ValueError):
        summability_verdict([1.0], window=1)


def test_profile_rejects_negative():
    with pytest.raises(ValueError):
        make_profile([1.0, -1.0])


def test_n_max_validation():
    with pytest.raises(ValueError):
        jacobi_defect_solution(JacobiBlock(0, OffspringSequence.constant(1)), 1j, 0)
