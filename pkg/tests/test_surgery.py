import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from spectree.errors import InsufficientRange, NoCutFound
from spectree.graph_core import OffspringSequence, WeightedGraph, build_offspring_tree, complete_graph, edgeless_graph, path_graph
from spectree.surgery import (
    CutoffFamily,
    EdgePerturbation,
    PartitionCandidate,
    banded_block_split,
    build_cutoff,
    commutator_schur_norm,
    coupling_coefficients,
    half_bandwidth,
    inter_sphere_sums,
    read_banded,
    surgery_bound,
    tree_path_partition,
    verify_difference_bound,
    verify_partition_properties,
)


# --- edge surgery ---------------------------------------------------------------


def test_single_unit_edge():
    p = EdgePerturbation.from_components([edgeless_graph([0]), edgeless_graph([0])], [((0, 0), (1, 0))])
    assert surgery_bound(p) == 1.0
    rep = verify_difference_bound(p)
    assert rep.exact_norm == pytest.approx(1.0) and rep.passed


def test_matching_and_scaling():
    comps = [path_graph(3), path_graph(3)]
    edges = [((0, i), (1, i), 2.5) for i in range(3)]
    p = EdgePerturbation.from_components(comps, edges)
    assert p.t_degree.tolist() == [1] * 6
    assert surgery_bound(p) == pytest.approx(2.5**2)
    rep = verify_difference_bound(p)
    assert rep.exact_norm == pytest.approx(2.5) and rep.passed


def test_star_of_added_edges():
    # centre joined to d leaves: norm sqrt(d), bound sup_x sum_y tdeg(y) E^2 = d (at a leaf: tdeg(centre) = d)
    d = 5
    comps = [edgeless_graph([0])] + [edgeless_graph([0]) for _ in range(d)]
    p = EdgePerturbation.from_components(comps, [((0, 0), (i, 0)) for i in range(1, d + 1)])
    assert surgery_bound(p) == d
    assert verify_difference_bound(p).exact_norm == pytest.approx(np.sqrt(d))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10**6))
def test_random_surgery_bound_holds(n, seed):
    rng = np.random.default_rng(seed)
    m = np.triu(rng.exponential(size=(n, n)) * (rng.random((n, n)) < 0.5), 1)
    base = edgeless_graph(range(n))
    p = EdgePerturbation(base, sp.csr_matrix(m + m.T))
    assert verify_difference_bound(p).passed


def test_edge_removal():
    g = complete_graph(4)
    p = EdgePerturbation.from_edge_removal(g, [(0, 1), (2, 3)])
    assert p.base.n_edges == 4
    np.testing.assert_allclose(p.graph().adjacency_dense(), g.adjacency_dense())
    assert verify_difference_bound(p).passed
    with pytest.raises(KeyError):
        EdgePerturbation.from_edge_removal(p.base, [(0, 1)])


def test_perturbation_validation():
    g = edgeless_graph(range(2))
    with pytest.raises(ValueError):
        EdgePerturbation(g, sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])))
    with pytest.raises(ValueError):
        EdgePerturbation(g, sp.csr_matrix(np.eye(2)))


# --- cutoffs ----------------------------------------------------------------------


def test_cutoff_examples():
    c = build_cutoff(OffspringSequence.constant(1), 2)
    np.testing.assert_allclose(c.values, [1, 1, 1, 0.5, 0])
    assert c.support_end == 4 and c.at(10) == 0.0
    c1 = build_cutoff(OffspringSequence.constant(1), 1)
    assert c1.values.tolist() == [1, 1, 0]


def test_cutoff_insufficient_range():
    with pytest.raises(InsufficientRange):
        build_cutoff([1, 1, 2, 4, 8], 3)
    c = build_cutoff([1, 1, 2, 4, 8], 3, allow_partial=True)
    assert not c.complete
    with pytest.raises(InsufficientRange):
        c.at(10)


def test_cutoff_ignores_huge_terms():
    c = build_cutoff(OffspringSequence((), "double_exponential", (2, 2)), 1, allow_partial=True)
    assert not c.complete and np.all(c.values > 0)


def test_commutator_of_constant_cutoff_is_zero():
    t = build_offspring_tree(OffspringSequence.constant(2), 4)
    c = CutoffFamily(1, np.ones(10), False)
    assert commutator_schur_norm(t.to_graph(), t.lengths(), c) == 0.0


@pytest.mark.parametrize("family", ["constant:2", "periodic:2,3", "power:1"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_commutator_with_matching_b(family, n):
    b_seq = OffspringSequence.parse(family)
    t = build_offspring_tree(b_seq, 6)
    g = t.to_graph()
    # the cutoff on the last generation needs one more inter-sphere sum
    deeper = build_offspring_tree(b_seq, 7)
    b = inter_sphere_sums(deeper.to_graph(), deeper.lengths())
    c = build_cutoff(b, n, allow_partial=True)
    assert commutator_schur_norm(g, t.lengths(), c) <= 1 / n + 1e-12


def test_inter_sphere_sums():
    t = build_offspring_tree(OffspringSequence.periodic([2, 3]), 3)
    assert inter_sphere_sums(t.to_graph(), t.lengths()).tolist() == [2, 6, 12]


# --- partitions ---------------------------------------------------------------------


def test_tree_path_partition_passes():
    t = build_offspring_tree(OffspringSequence.constant(2), 3)
    g = t.to_graph()
    for v in [(), (1,), (1, 2)]:
        rep = verify_partition_properties(g, tree_path_partition(g, v))
        assert rep["passed"], rep
        assert rep["P1"] == rep["P6"] == "not checkable at finite scale"


def test_planted_p3_violation():
    t = build_offspring_tree(OffspringSequence.constant(2), 2)
    g = t.to_graph()
    rest = set(t.vertices) - {(), (1,)}
    cand = PartitionCandidate({()}, {1: {(1,)}}, {1: rest})
    rep = verify_partition_properties(g, cand)
    assert not rep["P3"]["passed"]
    assert set(rep["P3"]["witness"]["edge"]) == {(1,), (1, 1)}
    assert not rep["passed"]


def test_vacuous_partition():
    g = path_graph(4)
    rep = verify_partition_properties(g, PartitionCandidate(set(g.vertices)))
    assert rep["passed"]


def test_p4_counts_neighbours():
    g = complete_graph(4)
    cand = PartitionCandidate({0}, {1: {1, 2, 3}}, {}, m=2)
    rep = verify_partition_properties(g, cand)
    assert not rep["P4"]["passed"] and rep["P4"]["witness"]["count"] == 3
    cand.m = 3
    assert verify_partition_properties(g, cand)["P4"]["passed"]


def test_partition_must_cover_and_be_disjoint():
    g = path_graph(3)
    with pytest.raises(ValueError):
        verify_partition_properties(g, PartitionCandidate({0}, {1: {1}}))
    with pytest.raises(ValueError):
        verify_partition_properties(g, PartitionCandidate({0, 1}, {1: {1, 2}}))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_partition_verdict_monotone_in_m(seed, m):
    rng = np.random.default_rng(seed)
    n = 9
    a = np.triu(rng.random((n, n)) < 0.35, 1).astype(float)
    g = WeightedGraph.from_dense(range(n), a + a.T)
    lab = rng.integers(0, 5, size=n)
    base = {i for i in range(n) if lab[i] == 0}
    u = {1: {i for i in range(n) if lab[i] == 1}, 2: {i for i in range(n) if lab[i] == 2}}
    w = {1: {i for i in range(n) if lab[i] == 3}, 2: {i for i in range(n) if lab[i] == 4}}
    lo = verify_partition_properties(g, PartitionCandidate(base, u, w, m))
    hi = verify_partition_properties(g, PartitionCandidate(base, u, w, m + 1))
    for p in ("P2", "P3", "P4", "P5"):
        assert hi[p]["passed"] or not lo[p]["passed"]


# --- banded split -------------------------------------------------------------------


def tridiag(off, diag=None):
    n = len(off) + 1
    a = np.diag(np.asarray(off, float), 1)
    a = a + a.T
    if diag is not None:
        a += np.diag(diag)
    return a


def test_tridiagonal_cuts():
    a = tridiag([1, 5, 1, 5, 1])
    res = banded_block_split(a, 1.0)
    assert res.cuts == [1, 3, 5]
    assert res.block_sizes() == [1, 2, 2, 1]
    # residual holds the unit couplings only
    assert res.schur_estimate == 1.0 and res.residual_norm == pytest.approx(1.0)
    assert res.residual_norm <= res.schur_estimate <= res.a_priori_estimate


def test_diagonal_matrix_cuts_everywhere():
    a = np.diag([1.0, 2.0, 3.0, 4.0])
    res = banded_block_split(a, 0.0)
    assert res.cuts == [1, 2, 3] and res.residual_norm == 0.0


def test_no_cut():
    with pytest.raises(NoCutFound):
        banded_block_split(tridiag([2, 2, 2]), 1.0)


def test_band_two_coefficients_brute_force():
    rng = np.random.default_rng(4)
    n, k = 9, 2
    a = rng.normal(size=(n, n))
    a = np.triu(np.tril(a + a.T, k), -k)
    c = coupling_coefficients(a, k)
    for cut in range(1, n):
        ref = max(abs(a[i, j]) for i in range(cut) for j in range(cut, n) if j - i <= k)
        assert c[cut] == ref


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 14), st.integers(1, 3), st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_split_reconstructs_and_bounds(n, k, seed, bound):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, size=(n, n))
    a = np.triu(np.tril(a + a.T, k), -k)
    assert half_bandwidth(a) <= k
    try:
        res = banded_block_split(a, bound, k)
    except NoCutFound:
        return
    direct = np.zeros_like(a)
    for lo, hi in res.blocks:
        direct[lo:hi, lo:hi] = a[lo:hi, lo:hi]
    np.testing.assert_allclose(direct + res.residual, a)
    assert res.residual_norm <= res.schur_estimate + 1e-12
    assert res.schur_estimate <= res.a_priori_estimate + 1e-12


def test_split_validation():
    with pytest.raises(ValueError):
        banded_block_split(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)
    with pytest.raises(ValueError):
        banded_block_split(np.ones((3, 3)), 1.0, k=1)


def test_read_banded():
    text = "4 1\n1 5\n2 1\n3 5\n4 0\n"
    a = read_banded(io.StringIO(text))
    np.testing.assert_allclose(a, tridiag([5, 1, 5], [1, 2, 3, 4]))
    with pytest.raises(ValueError):
        read_banded(io.StringIO("2 1\n1 1\n"))
