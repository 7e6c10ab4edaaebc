import math

import numpy as np
import pytest

from monochain.chain import corner_chain, from_gamma, random_chain
from monochain.oracle import BlockEnumeration, brute_map, prefix_probability
from monochain.rng import SplitMix64
from monochain.sc import conditionals_exact, replicated_prior, sc_decode
from monochain.scl import fork_cost_probe, scl_decode
from monochain.source import binary_demo_source, ternary_quinary_demo_source
from monochain.tensor import AlphabetSpec, ProbTensor
from monochain.source import JointSource
from monochain.transform import encode


def make_instance(src, chain, gen, freeze_p=0.5):
    N = chain.N
    frozen = tuple(t for t in range(1, len(chain) + 1) if gen.next_float() < freeze_p)
    block = np.array([[gen.next_below(q) for q in src.spec.q] for _ in range(N)])
    u = encode(src.spec, block)
    cw = [u[chain.idx[t - 1] - 1, chain.gamma[t - 1] - 1] for t in frozen]
    return frozen, cw, block, u


def test_list_size_one_equals_sc():
    gen = SplitMix64(21)
    for src in (binary_demo_source(), ternary_quinary_demo_source()):
        for seed in range(4):
            chain = random_chain(2, 8, seed=seed)
            frozen, cw, _, _ = make_instance(src, chain, gen)
            prior = replicated_prior(src, 8)
            a = sc_decode(src.spec, prior, chain, frozen, cw)
            b = scl_decode(src.spec, prior, chain, frozen, cw, L=1)
            np.testing.assert_array_equal(a.x_hat, b.x_hat)
            np.testing.assert_array_equal(a.u_hat, b.u_hat)
            assert a.loglik == pytest.approx(b.loglik, rel=1e-12, abs=1e-12)


def test_exhaustive_list_equals_brute_map_on_exact_chains():
    src = binary_demo_source()
    N = 4
    gen = SplitMix64(300)
    enum = BlockEnumeration(src.spec, N, src.pmf.entries)
    prior = replicated_prior(src, N)
    checked = 0
    seed = 0
    while checked < 25:
        chain = random_chain(2, N, seed=seed)
        seed += 1
        if not conditionals_exact(chain):
            continue
        frozen, cw, _, _ = make_instance(src, chain, gen)
        want = brute_map(enum, chain, frozen, cw)
        got = scl_decode(src.spec, prior, chain, frozen, cw, L=256)
        np.testing.assert_array_equal(got.x_hat, want)
        checked += 1


def test_uniform_source_tie_breaks_lexicographically():
    """With a uniform source every completion ties exactly; both the list
    decoder and the brute MAP must settle on the lexicographically smallest
    decided sequence."""
    spec = AlphabetSpec((2, 2))
    src = JointSource(spec, ProbTensor.uniform(spec))
    N = 4
    chain = from_gamma([1, 2] * 4)
    enum = BlockEnumeration(spec, N, src.pmf.entries)
    res = scl_decode(spec, replicated_prior(src, N), chain, L=256)
    want = brute_map(enum, chain, [], [])
    np.testing.assert_array_equal(res.x_hat, want)
    np.testing.assert_array_equal(res.u_hat, np.zeros((N, 2), dtype=np.int64))


def test_candidate_list_properties():
    src = ternary_quinary_demo_source()
    N = 8
    chain = corner_chain(2, N)
    gen = SplitMix64(9)
    frozen, cw, _, _ = make_instance(src, chain, gen, freeze_p=0.4)
    L = 8
    res = scl_decode(src.spec, replicated_prior(src, N), chain, frozen, cw,
                     L=L, want_candidates=True)
    assert 1 <= len(res.candidates) <= L
    lls = [c.loglik for c in res.candidates]
    assert lls == sorted(lls, reverse=True)
    assert res.loglik == pytest.approx(lls[0])
    # the winning candidate is the reported u-block
    np.testing.assert_array_equal(res.candidates[0].u_hat, res.u_hat)


def test_candidate_logliks_are_joint_probabilities():
    """exp(loglik) of every surviving path equals the true joint probability
    of its decided sequence (corner chains are in the exact domain)."""
    src = ternary_quinary_demo_source()
    N = 4
    chain = corner_chain(2, N)
    gen = SplitMix64(10)
    frozen, cw, _, _ = make_instance(src, chain, gen, freeze_p=0.4)
    res = scl_decode(src.spec, replicated_prior(src, N), chain, frozen, cw,
                     L=8, want_candidates=True)
    enum = BlockEnumeration(src.spec, N, src.pmf.entries)
    for c in res.candidates:
        useq = [c.u_hat[chain.idx[t - 1] - 1, chain.gamma[t - 1] - 1]
                for t in range(1, len(chain) + 1)]
        pj = prefix_probability(enum, chain, useq, len(chain))
        assert math.exp(c.loglik) == pytest.approx(pj, rel=1e-9)


def test_determinism():
    src = ternary_quinary_demo_source()
    chain = random_chain(2, 8, seed=3)
    gen = SplitMix64(55)
    frozen, cw, _, _ = make_instance(src, chain, gen)
    prior = replicated_prior(src, 8)
    a = scl_decode(src.spec, prior, chain, frozen, cw, L=4, want_candidates=True)
    b = scl_decode(src.spec, prior, chain, frozen, cw, L=4, want_candidates=True)
    np.testing.assert_array_equal(a.x_hat, b.x_hat)
    assert [(c.path_id, c.loglik) for c in a.candidates] == [
        (c.path_id, c.loglik) for c in b.candidates
    ]


def test_pool_highwater_bound():
    src = binary_demo_source()
    N = 16
    chain = random_chain(2, N, seed=8)
    L = 4
    res = scl_decode(src.spec, replicated_prior(src, N), chain, L=L)
    assert res.graph.pool.total_highwater <= L * (2 * N - 1)


def test_all_paths_dead_flags_failure():
    spec = AlphabetSpec((2, 2))
    pmf = ProbTensor(spec, [0.5, 0.5, 0.0, 0.0])  # component 1 is always 0
    prior = np.tile(pmf.entries, (4, 1))
    chain = corner_chain(2, 4)
    # freeze step 4 (last step of source 1) to an impossible value: with
    # x^1 identically zero, u^1_4 = x^1_4 must be 0; demand 1
    frozen = (4,)
    res = scl_decode(spec, prior, chain, frozen, [1], L=2)
    assert res.failed
    assert res.loglik == float("-inf")


def test_fork_probe_constant_touches():
    src = binary_demo_source()
    touches = {}
    for N in (64, 256, 1024):
        chain = corner_chain(2, N)
        t, copies = fork_cost_probe(src.spec, replicated_prior(src, N), chain,
                                    steps_before_fork=N // 2)
        touches[N] = t
        assert copies == 0
    assert touches[64] == touches[256] == touches[1024]


def test_extraction_cost_linear():
    src = binary_demo_source()
    ratios = []
    for N in (64, 256):
        chain = corner_chain(2, N)
        from monochain.sc import DecoderState, decode_at, extract_result, init_graph

        g, head = init_graph(src.spec, replicated_prior(src, N))
        state = DecoderState(g, head, chain)
        for t in range(1, len(chain) + 1):
            decode_at(state, t)
        before = g.tensor_ops
        extract_result(g, head)
        ratios.append((g.tensor_ops - before) / N)
    # per-copy extraction cost is a constant independent of N
    assert abs(ratios[0] - ratios[1]) < 1.0
