"""Correlated discrete memoryless multi-terminal source.

File format (UTF-8 text, ``#`` starts a comment line):

    line 1:  M
    line 2:  q_1 ... q_M (space separated)
    then prod(q) lines, one probability each, row-major with the M-th
    component fastest.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .rng import SplitMix64
from .tensor import AlphabetSpec, ProbTensor

LOAD_TOL = 1e-6


@dataclass(frozen=True)
class JointSource:
    """Single-letter joint pmf of X^{1:M}."""

    spec: AlphabetSpec
    pmf: ProbTensor

    def __post_init__(self):
        if self.spec.M < 2:
            raise DomainError("a multi-terminal source needs M >= 2")
        if self.pmf.spec != self.spec:
            raise ShapeError("pmf alphabet does not match source spec")


def _strip_comments(text):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def loads_joint(text):
    """Parse a joint-distribution file body into a JointSource."""
    lines = list(_strip_comments(text))
    if len(lines) < 2:
        raise ShapeError("joint file needs an M line and a q line")
    try:
        M = int(lines[0])
        q = tuple(int(v) for v in lines[1].split())
    except ValueError as exc:
        raise ShapeError(f"malformed header: {exc}") from None
    if len(q) != M:
        raise ShapeError(f"header says M={M} but {len(q)} alphabet sizes given")
    spec = AlphabetSpec(q)
    vals = []
    for line in lines[2:]:
        vals.extend(float(tok) for tok in line.split())
    if len(vals) != spec.size:
        raise ShapeError(f"expected {spec.size} probabilities, got {len(vals)}")
    p = np.asarray(vals, dtype=np.float64)
    if np.any(p < 0):
        raise DomainError("negative probability entry")
    s = float(p.sum())
    if abs(s - 1.0) > LOAD_TOL:
        raise DomainError(f"probabilities sum to {s}; outside tolerance {LOAD_TOL}")
    return JointSource(spec, ProbTensor(spec, p / s, _trusted=True))


def load_joint(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_joint(fh.read())


def dumps_joint(src, comment=None):
    out = []
    if comment:
        out.append(f"# {comment}")
    out.append(str(src.spec.M))
    out.append(" ".join(str(v) for v in src.spec.q))
    out.extend(f"{p:.17g}" for p in src.pmf.entries)
    return "\n".join(out) + "\n"


def _require_block_length(N):
    N = int(N)
    if N < 2 or N & (N - 1):
        raise DomainError(f"block length must be a power of two >= 2, got {N}")
    return N


def sample_block(src, N, seed):
    """N i.i.d. draws from the joint pmf, as an (N, M) int array.

    Inverse-CDF over the row-major flat order, driven by SplitMix64, so the
    same (source, N, seed) gives the same block everywhere.
    """
    N = _require_block_length(N)
    cdf = np.cumsum(src.pmf.entries)
    cdf[-1] = 1.0
    gen = SplitMix64(seed)
    u = np.array([gen.next_float() for _ in range(N)])
    flat = np.searchsorted(cdf, u, side="right")
    comp = np.empty((N, src.spec.M), dtype=np.int64)
    rem = flat
    for m in range(src.spec.M - 1, -1, -1):
        comp[:, m] = rem % src.spec.q[m]
        rem = rem // src.spec.q[m]
    return comp


def joint_entropy(src):
    """H(X^{1:M}) in bits."""
    return src.pmf.entropy_bits()


# The two sources used throughout the experiments.
BINARY_PAPER_TEXT = "2\n2 2\n0.1286\n0.0175\n0.0175\n0.8364\n"
TERNARY_QUINARY_TEXT = (
    "2\n3 5\n"
    "0.0814\n0.6078\n0.0519\n0.0014\n0.0014\n"
    "0.0095\n0.0308\n0.0013\n0.0027\n0.0044\n"
    "0.0018\n0.0156\n0.0500\n0.0012\n0.1388\n"
)


def binary_demo_source():
    return loads_joint(BINARY_PAPER_TEXT)


def ternary_quinary_demo_source():
    return loads_joint(TERNARY_QUINARY_TEXT)
