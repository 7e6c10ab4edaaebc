"""Compiled core vs pure-Python engine equivalence.

The two backends implement identical algorithms with identical tie-breaks
and instrumentation, so decoded symbols and counters must match exactly and
log-likelihoods to floating-point accumulation tolerance.
"""

import numpy as np
import pytest

import monochain.backend as backend
from monochain.chain import alternating_chain, corner_chain, from_gamma, random_chain
from monochain.errors import UnsupportedChainError
from monochain.rng import SplitMix64
from monochain.sc import replicated_prior
from monochain.source import binary_demo_source, ternary_quinary_demo_source
from monochain.transform import CYCLIC, TransformConvention, encode

pytestmark = pytest.mark.skipif(not backend.HAVE_COMPILED,
                                reason="compiled core not built")


def make_instance(src, chain, gen, freeze_p=0.5, convention=TransformConvention()):
    N = chain.N
    frozen = tuple(t for t in range(1, len(chain) + 1) if gen.next_float() < freeze_p)
    block = np.array([[gen.next_below(q) for q in src.spec.q] for _ in range(N)])
    u = encode(src.spec, block, convention)
    cw = [u[chain.idx[t - 1] - 1, chain.gamma[t - 1] - 1] for t in frozen]
    return frozen, cw, block, u


def assert_same_decode(a, b, check_candidates=False):
    np.testing.assert_array_equal(a.x_hat, b.x_hat)
    np.testing.assert_array_equal(a.u_hat, b.u_hat)
    if a.loglik == float("-inf"):
        assert b.loglik == float("-inf")
    else:
        assert a.loglik == pytest.approx(b.loglik, rel=1e-12, abs=1e-12)
    assert a.failed == b.failed
    if check_candidates:
        assert len(a.candidates) == len(b.candidates)
        for ca, cb in zip(a.candidates, b.candidates):
            np.testing.assert_array_equal(ca.u_hat, cb.u_hat)
            assert ca.loglik == pytest.approx(cb.loglik, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("src_name", ["binary", "tq"])
@pytest.mark.parametrize("mode", ["identity", CYCLIC])
def test_sc_decode_matches(src_name, mode):
    src = binary_demo_source() if src_name == "binary" else ternary_quinary_demo_source()
    conv = TransformConvention(mode)
    gen = SplitMix64(808)
    for N in (2, 8, 16):
        for seed in range(3):
            chain = random_chain(2, N, seed=seed)
            frozen, cw, _, _ = make_instance(src, chain, gen, convention=conv)
            prior = replicated_prior(src, N)
            a = backend.sc_decode(src.spec, prior, chain, frozen, cw, conv,
                                  want_conditionals=True, backend="python")
            b = backend.sc_decode(src.spec, prior, chain, frozen, cw, conv,
                                  want_conditionals=True, backend="compiled")
            assert_same_decode(a, b)
            np.testing.assert_allclose(a.conditionals, b.conditionals, atol=1e-12)


def test_genie_decode_matches():
    src = ternary_quinary_demo_source()
    N = 16
    chain = random_chain(2, N, seed=5)
    gen = SplitMix64(3)
    block = np.array([[gen.next_below(q) for q in src.spec.q] for _ in range(N)])
    u = encode(src.spec, block)
    prior = replicated_prior(src, N)
    a = backend.genie_decode(src.spec, prior, chain, u, backend="python")
    b = backend.genie_decode(src.spec, prior, chain, u, backend="compiled")
    np.testing.assert_array_equal(a.u_hat, u)
    np.testing.assert_array_equal(b.u_hat, u)
    np.testing.assert_allclose(a.conditionals, b.conditionals, atol=1e-12)


@pytest.mark.parametrize("L", [1, 2, 8])
def test_scl_decode_matches(L):
    gen = SplitMix64(99 + L)
    for src in (binary_demo_source(), ternary_quinary_demo_source()):
        for seed in range(4):
            chain = random_chain(2, 8, seed=seed)
            frozen, cw, _, _ = make_instance(src, chain, gen, freeze_p=0.4)
            prior = replicated_prior(src, 8)
            a = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=L,
                                   want_candidates=True, backend="python")
            b = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=L,
                                   want_candidates=True, backend="compiled")
            assert_same_decode(a, b, check_candidates=True)


def test_scl_counters_match():
    src = binary_demo_source()
    chain = random_chain(2, 16, seed=2)
    gen = SplitMix64(7)
    frozen, cw, _, _ = make_instance(src, chain, gen, freeze_p=0.4)
    prior = replicated_prior(src, 16)
    a = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=4,
                           backend="python")
    b = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=4,
                           backend="compiled")
    ga = a.graph
    assert ga.tensor_ops == b.counters["tensor_ops"]
    assert sum(ga.fork_touches) == b.counters["fork_touches"]
    assert ga.pool.total_highwater == b.counters["pool_highwater"]
    assert b.counters["data_copies_at_fork"] == 0


def test_lazy_decode_matches():
    gen = SplitMix64(42)
    for src in (binary_demo_source(), ternary_quinary_demo_source()):
        for N in (8, 32):
            chain = corner_chain(2, N)
            frozen, cw, _, _ = make_instance(src, chain, gen, freeze_p=0.4)
            prior = replicated_prior(src, N)
            a = backend.lazy_scl_decode(src.spec, prior, chain, frozen, cw, L=2,
                                        want_candidates=True, backend="python")
            b = backend.lazy_scl_decode(src.spec, prior, chain, frozen, cw, L=2,
                                        want_candidates=True, backend="compiled")
            assert_same_decode(a, b, check_candidates=True)


def test_lazy_counters_match():
    src = binary_demo_source()
    N = 64
    chain = corner_chain(2, N)
    prior = replicated_prior(src, N)
    a = backend.lazy_scl_decode(src.spec, prior, chain, L=2, backend="python")
    b = backend.lazy_scl_decode(src.spec, prior, chain, L=2, backend="compiled")
    assert a.counters["tensor_ops"] == b.counters["tensor_ops"]
    assert a.counters["forks"] == b.counters["forks"]
    assert a.counters["handle_copies"] == b.counters["handle_copies"]
    assert a.counters["cow_bytes"] == b.counters["cow_bytes"]


def test_lazy_rejects_non_corner_compiled():
    src = binary_demo_source()
    prior = replicated_prior(src, 8)
    with pytest.raises(UnsupportedChainError):
        backend.lazy_scl_decode(src.spec, prior, alternating_chain(8),
                                backend="compiled")


def test_engines_cross_match_on_corner_chain_compiled():
    src = ternary_quinary_demo_source()
    N = 64
    chain = corner_chain(2, N)
    gen = SplitMix64(17)
    frozen, cw, _, _ = make_instance(src, chain, gen, freeze_p=0.5)
    prior = replicated_prior(src, N)
    a = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=4,
                           backend="compiled")
    b = backend.lazy_scl_decode(src.spec, prior, chain, frozen, cw, L=4,
                                backend="compiled")
    np.testing.assert_array_equal(a.x_hat, b.x_hat)
    np.testing.assert_array_equal(a.u_hat, b.u_hat)
    assert a.loglik == pytest.approx(b.loglik, rel=1e-9, abs=1e-9)


def test_three_terminals_match():
    from monochain.source import loads_joint

    text = "3\n2 3 2\n" + "\n".join(
        f"{v}" for v in np.arange(1.0, 13.0) / np.arange(1.0, 13.0).sum()) + "\n"
    src = loads_joint(text)
    chain = random_chain(3, 4, seed=1)
    gen = SplitMix64(23)
    frozen, cw, _, _ = make_instance(src, chain, gen)
    prior = replicated_prior(src, 4)
    a = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=3,
                           backend="python")
    b = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=3,
                           backend="compiled")
    assert_same_decode(a, b)
