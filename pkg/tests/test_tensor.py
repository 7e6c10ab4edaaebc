import math

import numpy as np
import pytest

from monochain.errors import ContradictionError, DomainError, ShapeError
from monochain.tensor import (AlphabetSpec, ProbTensor, combine, conv, dconv,
                              entropy_bits_of)

PAPER_BINARY = [0.1286, 0.0175, 0.0175, 0.8364]


def random_tensor(spec, rng):
    e = rng.random(spec.size) + 1e-3
    return ProbTensor(spec, e / e.sum())


def loop_conv(a, b, sign):
    """Independent double-loop enumeration oracle for conv (+1) / dconv (-1)."""
    spec = a.spec
    out = np.zeros(spec.size)
    q = spec.q

    def tup(k):
        digs = []
        for m in range(spec.M - 1, -1, -1):
            digs.append(k % q[m])
            k //= q[m]
        return digs[::-1]

    def flat(t):
        k = 0
        for v, qm in zip(t, q):
            k = k * qm + (v % qm)
        return k

    for ka in range(spec.size):
        for kb in range(spec.size):
            ta, tb = tup(ka), tup(kb)
            ts = [(va + sign * vb) % qm for va, vb, qm in zip(ta, tb, q)]
            out[flat(ts)] += a.entries[ka] * b.entries[kb]
    return out


SPECS = [AlphabetSpec(q) for q in [(2,), (3,), (5,), (2, 2), (3, 5), (2, 3, 2), (4, 4, 4)]]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: str(s.q))
def test_conv_dconv_match_enumeration(spec):
    rng = np.random.default_rng(17)
    for _ in range(5):
        a, b = random_tensor(spec, rng), random_tensor(spec, rng)
        np.testing.assert_allclose(conv(a, b).entries, loop_conv(a, b, +1), atol=1e-12)
        np.testing.assert_allclose(dconv(a, b).entries, loop_conv(a, b, -1), atol=1e-12)


def test_conv_delta_identity():
    spec = AlphabetSpec((2, 3))
    rng = np.random.default_rng(1)
    p = random_tensor(spec, rng)
    d0 = ProbTensor.delta(spec, (0, 0))
    np.testing.assert_allclose(conv(d0, p).entries, p.entries, atol=1e-12)
    np.testing.assert_allclose(dconv(p, d0).entries, p.entries, atol=1e-12)


def test_conv_binary_example():
    spec = AlphabetSpec((2,))
    a = ProbTensor(spec, [0.9, 0.1])
    b = ProbTensor(spec, [0.8, 0.2])
    np.testing.assert_allclose(conv(a, b).entries, [0.74, 0.26], atol=1e-12)
    # subtraction equals addition in Z_2
    np.testing.assert_allclose(dconv(a, b).entries, conv(a, b).entries, atol=1e-15)


def test_conv_delta_shift_q3():
    spec = AlphabetSpec((3,))
    a = ProbTensor(spec, [1, 0, 0])
    b = ProbTensor(spec, [0, 1, 0])
    np.testing.assert_allclose(conv(a, b).entries, [0, 1, 0], atol=0)
    np.testing.assert_allclose(dconv(b, b).entries, [1, 0, 0], atol=0)


def test_conv_commutative_associative():
    rng = np.random.default_rng(7)
    for spec in (AlphabetSpec((2, 2)), AlphabetSpec((3, 5))):
        a, b, c = (random_tensor(spec, rng) for _ in range(3))
        np.testing.assert_allclose(conv(a, b).entries, conv(b, a).entries, atol=1e-12)
        np.testing.assert_allclose(
            conv(conv(a, b), c).entries, conv(a, conv(b, c)).entries, atol=1e-12
        )


def test_delta_roundtrip_property():
    rng = np.random.default_rng(3)
    spec = AlphabetSpec((3, 5))
    for _ in range(10):
        a = random_tensor(spec, rng)
        v = (rng.integers(3), rng.integers(5))
        d = ProbTensor.delta(spec, v)
        np.testing.assert_allclose(dconv(conv(a, d), d).entries, a.entries, atol=1e-12)


def test_ops_preserve_normalization():
    rng = np.random.default_rng(11)
    spec = AlphabetSpec((3, 5))
    for _ in range(20):
        a, b = random_tensor(spec, rng), random_tensor(spec, rng)
        for r in (conv(a, b), dconv(a, b), combine(a, b)):
            assert abs(r.entries.sum() - 1.0) < 1e-9


def test_combine():
    spec = AlphabetSpec((2,))
    u = ProbTensor.uniform(spec)
    p = ProbTensor(spec, [0.3, 0.7])
    np.testing.assert_allclose(combine(u, p).entries, p.entries, atol=1e-15)
    a = ProbTensor(spec, [0.9, 0.1])
    b = ProbTensor(spec, [0.2, 0.8])
    np.testing.assert_allclose(combine(a, b).entries, [9 / 13, 4 / 13], atol=1e-12)
    with pytest.raises(ContradictionError):
        combine(ProbTensor.delta(spec, (0,)), ProbTensor(spec, [0.0, 1.0]))


def test_partial_deterministic():
    spec = AlphabetSpec((2, 2))
    t = ProbTensor.partial_deterministic(spec, {1}, {1: 1})
    np.testing.assert_allclose(t.entries, [0, 0, 0.5, 0.5], atol=0)
    u = ProbTensor.partial_deterministic(spec, set(), {})
    np.testing.assert_allclose(u.entries, [0.25] * 4, atol=0)
    d = ProbTensor.partial_deterministic(spec, {1, 2}, (1, 0))
    np.testing.assert_allclose(d.entries, ProbTensor.delta(spec, (1, 0)).entries, atol=0)
    with pytest.raises(DomainError):
        ProbTensor.partial_deterministic(spec, {1}, {1: 2})
    with pytest.raises(DomainError):
        ProbTensor.partial_deterministic(spec, {3}, {3: 0})


def test_marginal():
    spec = AlphabetSpec((2, 2))
    t = ProbTensor(spec, [0, 0, 0.5, 0.5])
    np.testing.assert_allclose(t.marginal(1), [0, 1], atol=0)
    u = ProbTensor.uniform(AlphabetSpec((3, 5)))
    np.testing.assert_allclose(u.marginal(2), [0.2] * 5, atol=1e-15)
    paper = ProbTensor(spec, PAPER_BINARY)
    np.testing.assert_allclose(paper.marginal(1), [0.1461, 0.8539], atol=1e-12)
    with pytest.raises(DomainError):
        t.marginal(3)


def test_hard_decision():
    spec2 = AlphabetSpec((2,))
    assert ProbTensor(spec2, [0.3, 0.7]).hard_decision(1) == 1
    assert ProbTensor(spec2, [0.5, 0.5]).hard_decision(1) == 0  # tie to smallest
    spec3 = AlphabetSpec((3,))
    assert ProbTensor(spec3, [0.2, 0.2, 0.6]).hard_decision(1) == 2


def test_entropy_bits():
    assert ProbTensor.uniform(AlphabetSpec((2,))).entropy_bits() == pytest.approx(1.0)
    assert ProbTensor.delta(AlphabetSpec((3, 5)), (1, 3)).entropy_bits() == 0.0
    expected = -sum(p * math.log2(p) for p in PAPER_BINARY)
    got = ProbTensor(AlphabetSpec((2, 2)), PAPER_BINARY).entropy_bits()
    assert got == pytest.approx(expected, abs=1e-12)
    assert abs(got - 0.800) < 1e-3


def test_validation_errors():
    spec = AlphabetSpec((2, 2))
    with pytest.raises(ShapeError):
        ProbTensor(spec, [0.5, 0.5])
    with pytest.raises(DomainError):
        ProbTensor(spec, [0.5, 0.6, 0.0, 0.0])
    with pytest.raises(DomainError):
        ProbTensor(spec, [-0.1, 0.6, 0.3, 0.2])
    with pytest.raises(ShapeError):
        conv(ProbTensor.uniform(spec), ProbTensor.uniform(AlphabetSpec((3,))))
    with pytest.raises(DomainError):
        AlphabetSpec((1, 2))
    t = ProbTensor.uniform(spec)
    with pytest.raises(AttributeError):
        t.entries = None
    assert not t.entries.flags.writeable


def test_entropy_bits_of_zero_handling():
    assert entropy_bits_of(np.array([1.0, 0.0])) == 0.0
