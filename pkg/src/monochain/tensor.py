"""Dense joint probability tensors over small product alphabets.

A tensor holds the joint distribution of an M-variate symbol whose gamma-th
component lives in Z_{q_gamma}. Entries are stored flat in row-major order
with the M-th (last) component fastest, which is also the order used by all
file formats. Three primitives do all of the message-passing work:

* ``conv``     distribution of the componentwise modular sum
* ``dconv``    distribution of the componentwise modular difference
* ``combine``  normalized elementwise product (fusing independent evidence)

Alphabets are design-time constants (products of a few small sizes), so the
convolutions are direct table-driven O(Q^2) loops rather than FFTs.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .errors import ContradictionError, DomainError, ShapeError

NORM_TOL = 1e-9


@dataclass(frozen=True)
class AlphabetSpec:
    """Terminal count M and per-terminal alphabet sizes q_1..q_M."""

    q: tuple

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        if len(self.q) < 1:
            raise DomainError("need at least one terminal")
        if any(v < 2 for v in self.q):
            raise DomainError(f"alphabet sizes must be >= 2, got {self.q}")

    @property
    def M(self):
        return len(self.q)

    @property
    def size(self):
        """Total number of joint symbols, prod(q)."""
        return math.prod(self.q)

    def flat_index(self, symbols):
        """Row-major flat index of an M-tuple (last component fastest)."""
        if len(symbols) != self.M:
            raise ShapeError(f"expected {self.M} components, got {len(symbols)}")
        k = 0
        for v, qm in zip(symbols, self.q):
            v = int(v)
            if not 0 <= v < qm:
                raise DomainError(f"symbol {v} out of range for alphabet size {qm}")
            k = k * qm + v
        return k


@lru_cache(maxsize=None)
def _tables(q):
    """Index tables for the modular arithmetic on flat indices.

    sub[k, i] = flat(k - i), add[k, i] = flat(k + i), comp[m, k] = m-th
    component of flat index k. All componentwise mod q_m.
    """
    q = tuple(q)
    Q = math.prod(q)
    M = len(q)
    comp = np.empty((M, Q), dtype=np.int32)
    rem = np.arange(Q)
    for m in range(M - 1, -1, -1):
        comp[m] = rem % q[m]
        rem //= q[m]
    sub = np.zeros((Q, Q), dtype=np.int32)
    add = np.zeros((Q, Q), dtype=np.int32)
    for m in range(M):
        place = math.prod(q[m + 1:])
        cm = comp[m]
        sub += place * ((cm[:, None] - cm[None, :]) % q[m])
        add += place * ((cm[:, None] + cm[None, :]) % q[m])
    return sub, add, comp


def component_table(spec):
    """comp[m, k] = value of component m+1 at flat index k."""
    return _tables(spec.q)[2]


class ProbTensor:
    """Immutable normalized joint distribution over an AlphabetSpec.

    ``entries`` is a flat read-only float64 array of length spec.size.
    """

    __slots__ = ("spec", "entries")

    def __init__(self, spec, entries, _trusted=False):
        entries = np.asarray(entries, dtype=np.float64).reshape(-1)
        if entries.shape != (spec.size,):
            raise ShapeError(
                f"expected {spec.size} entries for alphabets {spec.q}, got {entries.shape}"
            )
        if not _trusted:
            if np.any(entries < 0):
                raise DomainError("negative probability entry")
            s = float(entries.sum())
            if abs(s - 1.0) > NORM_TOL:
                raise DomainError(f"entries sum to {s}, not 1")
            entries = entries / s
        entries = entries.copy()
        entries.flags.writeable = False
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):
        raise AttributeError("ProbTensor is immutable")

    def __repr__(self):
        return f"ProbTensor(q={self.spec.q}, entries={self.entries!r})"

    # -- constructors ---------------------------------------------------

    @classmethod
    def uniform(cls, spec):
        Q = spec.size
        return cls(spec, np.full(Q, 1.0 / Q), _trusted=True)

    @classmethod
    def delta(cls, spec, symbols):
        e = np.zeros(spec.size)
        e[spec.flat_index(symbols)] = 1.0
        return cls(spec, e, _trusted=True)

    @classmethod
    def partial_deterministic(cls, spec, known, values):
        """Partially deterministic tensor: entries contradicting the known
        component values are zero, all remaining entries are equal.

        ``known`` is a set of 1-based component indices, ``values`` maps each
        known component to its symbol. Empty ``known`` gives the uniform
        tensor.
        """
        return cls(spec, partial_deterministic_entries(spec, known, values), _trusted=True)

    # -- queries ---------------------------------------------------------

    def marginal(self, component):
        """Marginal distribution of one component (1-based index)."""
        return marginal_of(self.spec, self.entries, component)

    def hard_decision(self, component):
        """argmax of the component marginal, ties to the smallest symbol."""
        return int(np.argmax(self.marginal(component)))

    def entropy_bits(self):
        return entropy_bits_of(self.entries)


def partial_deterministic_entries(spec, known, values):
    """``known``: 1-based component indices; ``values``: dict component->symbol,
    or a sequence aligned with ``known`` in ascending component order."""
    known = sorted(set(int(c) for c in known))
    if isinstance(values, dict):
        vals = {c: int(values[c]) for c in known}
    else:
        if len(values) != len(known):
            raise ShapeError(f"{len(known)} known components but {len(values)} values")
        vals = {c: int(v) for c, v in zip(known, values)}
    for c in known:
        if not 1 <= c <= spec.M:
            raise DomainError(f"component {c} out of range 1..{spec.M}")
        if not 0 <= vals[c] < spec.q[c - 1]:
            raise DomainError(f"value {vals[c]} out of range for component {c}")
    comp = component_table(spec)
    mask = np.ones(spec.size, dtype=bool)
    count = spec.size
    for c in known:
        mask &= comp[c - 1] == vals[c]
        count //= spec.q[c - 1]
    e = np.zeros(spec.size)
    e[mask] = 1.0 / count
    return e


def marginal_of(spec, entries, component):
    if not 1 <= component <= spec.M:
        raise DomainError(f"component {component} out of range 1..{spec.M}")
    comp = component_table(spec)
    m = np.zeros(spec.q[component - 1])
    np.add.at(m, comp[component - 1], entries)
    s = m.sum()
    return m / s if s > 0 else m


def entropy_bits_of(entries):
    p = entries[entries > 0]
    return float(-(p * np.log2(p)).sum())


def _check_pair(a, b):
    if a.spec != b.spec:
        raise ShapeError(f"alphabet mismatch: {a.spec.q} vs {b.spec.q}")


def conv(a, b):
    """Distribution of the componentwise modular sum of two tensors."""
    _check_pair(a, b)
    sub = _tables(a.spec.q)[0]
    out = a.entries[sub] @ b.entries
    return ProbTensor(a.spec, out / out.sum(), _trusted=True)


def dconv(a, b):
    """Distribution of the componentwise modular difference a - b."""
    _check_pair(a, b)
    add = _tables(a.spec.q)[1]
    out = a.entries[add] @ b.entries
    return ProbTensor(a.spec, out / out.sum(), _trusted=True)


def combine(a, b):
    """Normalized elementwise product of two tensors.

    Raises ContradictionError when the supports are disjoint.
    """
    _check_pair(a, b)
    out = a.entries * b.entries
    s = out.sum()
    if s == 0.0:
        raise ContradictionError("incompatible evidence: elementwise product is zero")
    return ProbTensor(a.spec, out / s, _trusted=True)
