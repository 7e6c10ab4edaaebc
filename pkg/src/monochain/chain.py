"""Monotone chains: decoding orders over the MN transformed variables.

A chain is identified by its terminal-id sequence gamma_{1:MN} (each id in
1..M appearing exactly N times). The derived index sequence i_{1:MN} counts,
at each step, how many times that step's terminal has appeared so far; the
monotonicity i_t < i_t' for equal terminals is automatic under this
derivation. Serialized form: one whitespace-separated line of MN integers
(``#`` comments allowed); M and N are inferred.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .rng import SplitMix64


@dataclass(frozen=True)
class MonotoneChain:
    M: int
    N: int
    gamma: tuple  # terminal ids, 1-based, length M*N
    idx: tuple = field(init=False)  # derived copy indices, 1-based

    def __post_init__(self):
        gamma = tuple(int(g) for g in self.gamma)
        if len(gamma) != self.M * self.N:
            raise ShapeError(f"chain length {len(gamma)} != M*N = {self.M * self.N}")
        counts = [0] * self.M
        idx = []
        for g in gamma:
            if not 1 <= g <= self.M:
                raise DomainError(f"terminal id {g} out of range 1..{self.M}")
            counts[g - 1] += 1
            idx.append(counts[g - 1])
        bad = [g + 1 for g, c in enumerate(counts) if c != self.N]
        if bad:
            raise DomainError(f"terminals {bad} do not appear exactly N={self.N} times")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "idx", tuple(idx))

    def __len__(self):
        return self.M * self.N

    def known_set(self, t, i):
        """Components of copy i already decided before step t (1-based)."""
        if not 1 <= t <= len(self) + 1:
            raise DomainError(f"step {t} out of range")
        if not 1 <= i <= self.N:
            raise DomainError(f"copy index {i} out of range 1..{self.N}")
        return {self.gamma[s] for s in range(t - 1) if self.idx[s] == i}

    def is_corner(self):
        return self.gamma == corner_chain(self.M, self.N).gamma

    def serialize(self):
        return " ".join(str(g) for g in self.gamma) + "\n"


def from_gamma(gamma, M=None, N=None):
    """Validate a terminal-id sequence; infer M and N when not given."""
    gamma = [int(g) for g in gamma]
    if not gamma:
        raise ShapeError("empty chain")
    if M is None:
        M = max(gamma)
    if N is None:
        N = gamma.count(1)
        if N == 0:
            raise DomainError("terminal 1 never appears; cannot infer N")
    if len(gamma) != M * N:
        raise ShapeError(f"chain length {len(gamma)} != M*N = {M * N}")
    return MonotoneChain(M, N, tuple(gamma))


def corner_chain(M, N):
    """N ones, then N twos, ..., then N copies of M (a rate-region corner)."""
    if M < 2:
        raise DomainError("corner chain needs M >= 2")
    return MonotoneChain(M, N, tuple(g for g in range(1, M + 1) for _ in range(N)))


def alternating_chain(N):
    """M=2 chain with a full-depth alternating middle region:
    N/2 ones, (1,2) repeated N/2 times, N/2 twos."""
    if N < 4 or N & (N - 1):
        raise DomainError("alternating chain needs a power-of-two N >= 4")
    half = N // 2
    gamma = [1] * half + [1, 2] * half + [2] * half
    return MonotoneChain(2, N, tuple(gamma))


def random_chain(M, N, seed):
    """Uniform random interleaving of the M runs (seeded Fisher-Yates)."""
    if M < 2:
        raise DomainError("random chain needs M >= 2")
    gamma = [g for g in range(1, M + 1) for _ in range(N)]
    SplitMix64(seed).shuffle(gamma)
    return MonotoneChain(M, N, tuple(gamma))


def k_extend(chain, k):
    """Repeat each chain element 2^k consecutive times (N grows by 2^k)."""
    k = int(k)
    if k < 0:
        raise DomainError("extension order must be >= 0")
    if k == 0:
        return chain
    rep = 1 << k
    gamma = tuple(g for g in chain.gamma for _ in range(rep))
    return MonotoneChain(chain.M, chain.N * rep, gamma)


def loads_chain(text):
    toks = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            toks.extend(line.split())
    return from_gamma([int(t) for t in toks])


def load_chain(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_chain(fh.read())


def step_arrays(chain):
    """0-based (gamma0, idx0) int32 arrays for the decode loops."""
    g = np.asarray(chain.gamma, dtype=np.int32) - 1
    i = np.asarray(chain.idx, dtype=np.int32) - 1
    return g, i
