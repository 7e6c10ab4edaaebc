import numpy as np
import pytest

from monochain.errors import DomainError
from monochain.graph import LEFT, RIGHT, UP
from monochain.sc import init_graph, replicated_prior
from monochain.source import binary_demo_source, ternary_quinary_demo_source
from monochain.tensor import AlphabetSpec, ProbTensor
from monochain.transform import CYCLIC, TransformConvention, inverse


def uniform_prior(spec, N):
    return np.full((N, spec.size), 1.0 / spec.size)


def vertices_by_beta(graph, head):
    vs, _ = graph.traverse_all(head)
    return {v.beta: v for v in vs}


def edges_by_index(graph, head):
    _, es = graph.traverse_all(head)
    return {e.index: e for e in es}


def test_init_counts_and_prior():
    src = binary_demo_source()
    for N, nv, ne in ((2, 1, 3), (8, 7, 15)):
        g, head = init_graph(src.spec, replicated_prior(src, N))
        vs, es = g.traverse_all(head)
        assert len(vs) == nv and len(es) == ne
        byidx = edges_by_index(g, head)
        np.testing.assert_array_equal(byidx[1].data, replicated_prior(src, N))
        for i in range(N, 2 * N):
            assert byidx[i].data.shape == (1, 4)  # leaf edges hold one tensor
        for i in range(2, 2 * N):
            np.testing.assert_allclose(byidx[i].data, 0.25)
        g.check_orientation(head)


def test_get_path_examples():
    src = binary_demo_source()
    g, head = init_graph(src.spec, replicated_prior(src, 8))
    head.beta = 4
    assert g.get_path(head, 5) == [2, 5]
    head.beta = 7
    assert g.get_path(head, 4) == [3, 1, 2, 4]
    head.beta = 6
    assert g.get_path(head, 6) == []
    with pytest.raises(DomainError):
        g.get_path(head, 8)


def test_get_path_properties():
    src = binary_demo_source()
    N = 64
    g, head = init_graph(src.spec, replicated_prior(src, N))
    rng = np.random.default_rng(5)
    for _ in range(200):
        a = int(rng.integers(1, N))
        b = int(rng.integers(1, N))
        head.beta = a
        path = g.get_path(head, b)
        assert len(path) <= 2 * int(np.log2(N))
        cur = a
        for nxt in path:
            assert nxt in (2 * cur, 2 * cur + 1, cur // 2)
            cur = nxt
        assert cur == b


def test_step_to_moves_and_updates():
    src = binary_demo_source()
    g, head = init_graph(src.spec, replicated_prior(src, 8))
    g.step_to(head, 2)
    assert head.beta == 2 and head.vertex.beta == 2
    assert g.edge_updates.get(2) == 1  # calcLeft wrote edge 2
    g.check_orientation(head)
    g.step_to(head, 1)
    assert head.beta == 1
    assert g.edge_updates.get(2) == 2  # calcParent rewrote it on the way up
    g.check_orientation(head)
    before = g.tensor_ops
    g.step_to(head, 7)  # not adjacent: no-op per the traversal guard
    assert head.beta == 1 and g.tensor_ops == before


def test_uniform_fixed_point():
    spec = AlphabetSpec((2, 2))
    g, head = init_graph(spec, uniform_prior(spec, 8))
    for b in (2, 4, 2, 5, 2, 1, 3, 6, 3, 7):
        g.step_to(head, b)
    for e in g.traverse_all(head)[1]:
        np.testing.assert_allclose(e.data, 0.25, atol=1e-12)


@pytest.mark.parametrize("qs,mode", [
    ((2, 2), "identity"),
    ((3, 5), "identity"),
    ((3, 5), CYCLIC),
    ((2, 3, 2), CYCLIC),
])
def test_graph_consistency_with_transform(qs, mode):
    """Deterministic leaves pushed up the graph land exactly on inverse(u)."""
    spec = AlphabetSpec(qs)
    conv = TransformConvention(mode)
    rng = np.random.default_rng(31)
    for N in (2, 4, 16):
        g, head = init_graph(spec, uniform_prior(spec, N), convention=conv)
        u = rng.integers(0, spec.q, size=(N, spec.M))
        byidx = edges_by_index(g, head)
        for i in range(1, N + 1):
            byidx[i + N - 1].data[0] = ProbTensor.delta(spec, u[i - 1]).entries
        byv = vertices_by_beta(g, head)
        for beta in range(N - 1, 0, -1):
            v = byv[beta]
            g.calc_parent_rows(v.left_edge.data, v.right_edge.data, v.parent_edge.data)
        root = byv[1].parent_edge.data
        x = inverse(spec, u, conv)
        expect = np.stack([ProbTensor.delta(spec, row).entries for row in x])
        np.testing.assert_allclose(root, expect, atol=1e-12)


def test_calc_parent_deltas():
    """Point-mass children produce point masses at (L+R, R)."""
    spec = AlphabetSpec((3,))
    g, head = init_graph(spec, uniform_prior(spec, 2))
    v = head.vertex
    v.left_edge.data[0] = ProbTensor.delta(spec, (2,)).entries
    v.right_edge.data[0] = ProbTensor.delta(spec, (2,)).entries
    out = np.empty((2, 3))
    g.calc_parent_rows(v.left_edge.data, v.right_edge.data, out)
    np.testing.assert_allclose(out[0], ProbTensor.delta(spec, (1,)).entries, atol=0)
    np.testing.assert_allclose(out[1], ProbTensor.delta(spec, (2,)).entries, atol=0)


def test_fork_constant_touches_and_shared_state():
    src = binary_demo_source()
    touches = {}
    for N in (64, 1024):
        g, head = init_graph(src.spec, replicated_prior(src, N), list_size=2, cow=True)
        g.step_to_cow(head, 2)
        h2 = g.fork(head)
        touches[N] = g.fork_touches[-1]
        assert g.fork_data_copies == 0
        va, ea = g.traverse_all(head)
        vb, eb = g.traverse_all(h2)
        assert len(va) == len(vb) == N - 1
        # all records shared except the cloned head vertex
        assert {id(e) for e in ea} == {id(e) for e in eb}
        shared_v = {id(v) for v in va} & {id(v) for v in vb}
        assert len(shared_v) == N - 2
        g.check_orientation(head)
        g.check_orientation(h2)
    assert touches[64] == touches[1024]


def test_cow_divergence_is_local():
    spec = AlphabetSpec((2, 2))
    src_prior = uniform_prior(spec, 8)
    g, head = init_graph(spec, src_prior, list_size=2, cow=True)
    h2 = g.fork(head)
    # path A walks to vertex 4 and writes a leaf; B untouched
    for b in g.get_path(head, 4):
        g.step_to_cow(head, b)
    g.write_leaf(head, LEFT, ProbTensor.delta(spec, (1, 0)).entries)
    va, ea = g.traverse_all(head)
    vb, eb = g.traverse_all(h2)
    diff_edges = {e.index for e in ea} - {id(e) for e in eb} and {
        e.index for e in ea if id(e) not in {id(x) for x in eb}
    }
    # exactly the records along A's write path diverged: edges 2, 4, 8
    assert diff_edges == {2, 4, 8}
    g.check_orientation(head)
    g.check_orientation(h2)
    # B still sees the original uniform leaf
    leafB = [e for e in eb if e.index == 8][0]
    np.testing.assert_allclose(leafB.data, 0.25)


def test_release_returns_records_to_pool():
    spec = AlphabetSpec((2, 2))
    g, head = init_graph(spec, uniform_prior(spec, 16), list_size=2, cow=True)
    base = g.pool.v_in_use
    h2 = g.fork(head)
    for b in g.get_path(h2, 5):
        g.step_to_cow(h2, b)
    used = g.pool.v_in_use
    assert used > base
    g.release_head(h2)
    assert g.pool.v_in_use == base
    g.check_orientation(head)
