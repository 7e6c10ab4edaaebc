from itertools import permutations

import pytest

from monochain.chain import (MonotoneChain, alternating_chain, corner_chain,
                             from_gamma, k_extend, loads_chain, random_chain)
from monochain.errors import DomainError, ShapeError


def test_from_gamma_examples():
    c = from_gamma([1, 2, 1, 2], M=2, N=2)
    assert c.idx == (1, 1, 2, 2)
    c2 = from_gamma([1, 1, 2, 1, 2, 2, 1, 2], M=2, N=4)
    assert c2.idx == (1, 2, 1, 3, 2, 3, 4, 4)
    with pytest.raises(DomainError):
        from_gamma([1, 1, 1, 2], M=2, N=2)
    with pytest.raises(ShapeError):
        from_gamma([1, 2, 1], M=2, N=2)
    with pytest.raises(DomainError):
        from_gamma([1, 3, 1, 3], M=2, N=2)


def test_idx_is_pure_function_of_gamma():
    c = random_chain(3, 4, seed=5)
    again = from_gamma(c.gamma)
    assert again == c


def test_corner_chain():
    assert corner_chain(2, 2).gamma == (1, 1, 2, 2)
    assert corner_chain(3, 2).gamma == (1, 1, 2, 2, 3, 3)
    assert corner_chain(2, 4).is_corner()
    with pytest.raises(DomainError):
        corner_chain(1, 4)


def test_alternating_chain():
    assert alternating_chain(4).gamma == (1, 1, 1, 2, 1, 2, 2, 2)
    c8 = alternating_chain(8)
    assert len(c8.gamma) == 16
    assert c8.gamma[4:12] == (1, 2, 1, 2, 1, 2, 1, 2)
    with pytest.raises(DomainError):
        alternating_chain(2)


def test_random_chain_valid_and_deterministic():
    c1 = random_chain(2, 8, seed=123)
    c2 = random_chain(2, 8, seed=123)
    assert c1 == c2
    assert from_gamma(c1.gamma) == c1
    valid = {p for p in permutations((1, 1, 2, 2))}
    assert len(valid) == 6
    assert random_chain(2, 2, seed=0).gamma in valid


def test_k_extend():
    c = from_gamma([1, 2], M=2, N=1)
    assert k_extend(c, 0) is c
    assert k_extend(c, 1).gamma == (1, 1, 2, 2)
    c2 = from_gamma([1, 2, 1, 2], M=2, N=2)
    e = k_extend(c2, 2)
    assert len(e.gamma) == 16 and e.N == 8
    assert e.gamma[:4] == (1, 1, 1, 1) and e.gamma[4:8] == (2, 2, 2, 2)
    a = k_extend(k_extend(c2, 1), 2)
    b = k_extend(c2, 3)
    assert a == b


def test_known_set():
    c = from_gamma([1, 2, 1, 2], M=2, N=2)
    for i in (1, 2):
        assert c.known_set(1, i) == set()
    assert c.known_set(3, 1) == {1, 2}
    c2 = from_gamma([1, 1, 2, 2], M=2, N=2)
    assert c2.known_set(3, 1) == {1}
    for i in range(1, c2.N + 1):
        assert c2.known_set(len(c2) + 1, i) == {1, 2}


def test_serialize_parse():
    c = random_chain(3, 4, seed=9)
    assert loads_chain(c.serialize()) == c
    assert loads_chain("# comment\n1 1 2 2\n") == corner_chain(2, 2)


def test_monotonicity_holds_by_construction():
    c = random_chain(2, 8, seed=77)
    for t in range(len(c)):
        for t2 in range(t + 1, len(c)):
            if c.gamma[t] == c.gamma[t2]:
                assert c.idx[t] < c.idx[t2]
