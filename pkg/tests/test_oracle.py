import numpy as np
import pytest

from monochain.chain import corner_chain, from_gamma, random_chain
from monochain.errors import ContradictionError
from monochain.oracle import (BlockEnumeration, brute_conditional, brute_map,
                              exact_step_entropies, prefix_probability)
from monochain.source import binary_demo_source
from monochain.tensor import AlphabetSpec, ProbTensor, dconv
from monochain.transform import encode


def test_first_step_is_difference_distribution():
    """At N=2, U_1 = X_1 - X_2, so the t=1 conditional must equal the
    difference-convolution of the pmf with itself."""
    src = binary_demo_source()
    enum = BlockEnumeration(src.spec, 2, src.pmf.entries)
    chain = corner_chain(2, 2)
    got = brute_conditional(enum, chain, [], 1)
    expect = dconv(src.pmf, src.pmf).entries
    np.testing.assert_allclose(got, expect, atol=1e-12)


def test_uniform_prior_gives_uniform_conditionals():
    """Transforms of uniform independent symbols stay uniform: the current
    component's marginal is exactly 1/q at every step (already-decided
    components of the same copy are of course pinned)."""
    spec = AlphabetSpec((2, 2))
    enum = BlockEnumeration(spec, 4, ProbTensor.uniform(spec).entries)
    chain = random_chain(2, 4, seed=3)
    comp_of = {}
    prefix = []
    for t in range(1, len(chain) + 1):
        cond = brute_conditional(enum, chain, prefix, t)
        gamma = chain.gamma[t - 1]
        marg = np.zeros(2)
        for k in range(4):
            marg[(k >> (2 - gamma)) & 1] += cond[k]
        np.testing.assert_allclose(marg, 0.5, atol=1e-12)
        comp_of[t] = gamma
        prefix.append(0)


def test_brute_map_fully_frozen_and_mode():
    src = binary_demo_source()
    enum = BlockEnumeration(src.spec, 4, src.pmf.entries)
    chain = from_gamma([1, 2, 1, 2, 1, 2, 1, 2])
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, size=(4, 2))
    u = encode(src.spec, x)
    steps = list(range(1, 9))
    cw = [u[chain.idx[t - 1] - 1, chain.gamma[t - 1] - 1] for t in steps]
    np.testing.assert_array_equal(brute_map(enum, chain, steps, cw), x)
    # empty frozen set: the global mode of a product distribution is the
    # per-copy mode
    mode = brute_map(enum, chain, [], [])
    np.testing.assert_array_equal(mode, np.ones((4, 2)))


def test_prefix_probability_and_contradiction():
    src = binary_demo_source()
    enum = BlockEnumeration(src.spec, 2, src.pmf.entries)
    chain = corner_chain(2, 2)
    # total probability of all prefixes of length 1 is 1
    p0 = prefix_probability(enum, chain, [0], 1)
    p1 = prefix_probability(enum, chain, [1], 1)
    assert p0 + p1 == pytest.approx(1.0, abs=1e-12)
    spec = src.spec
    delta = ProbTensor.delta(spec, (0, 0))
    enum_d = BlockEnumeration(spec, 2, delta.entries)
    with pytest.raises(ContradictionError):
        brute_conditional(enum_d, chain, [1], 2)  # impossible prefix


def test_exact_entropies_chain_rule():
    src = binary_demo_source()
    N = 4
    enum = BlockEnumeration(src.spec, N, src.pmf.entries)
    H = src.pmf.entropy_bits()
    for seed in range(3):
        chain = random_chain(2, N, seed=seed)
        ent = exact_step_entropies(enum, chain)
        assert ent.sum() == pytest.approx(N * H, abs=1e-9)
        assert np.all(ent >= -1e-12)
