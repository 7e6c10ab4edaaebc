"""Componentwise butterfly transform between source blocks and u-blocks.

The transform is defined by the tree recursion (top-down): a parent value
group P_{1:2l} splits into children

    R_i = pi^{-1}(P_{i+l}),   L_i = P_i - R_i   (mod q, per component)

and the leaves read left-to-right are u_{1:N}. The inverse ascends with
P_i = L_i + R_i, P_{i+l} = pi(R_i). ``pi`` is the identity by default; a
fixed cyclic shift x -> x+1 (mod q) is available as the non-binary
permutation hook. The decoder's message rules use the same convention, which
is what actually matters for correctness.

Block files: one line per copy i, M space separated symbols.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

IDENTITY = "identity"
CYCLIC = "cyclic-shift"


@dataclass(frozen=True)
class TransformConvention:
    permutation: str = IDENTITY

    def __post_init__(self):
        if self.permutation not in (IDENTITY, CYCLIC):
            raise DomainError(f"unknown permutation mode {self.permutation!r}")

    @property
    def shift(self):
        return 1 if self.permutation == CYCLIC else 0


def _check_block(spec, block):
    block = np.asarray(block, dtype=np.int64)
    if block.ndim != 2 or block.shape[1] != spec.M:
        raise ShapeError(f"block must be (N, {spec.M}), got {block.shape}")
    N = block.shape[0]
    if N < 2 or N & (N - 1):
        raise ShapeError(f"N must be a power of two >= 2, got {N}")
    q = np.asarray(spec.q)
    if np.any(block < 0) or np.any(block >= q[None, :]):
        raise DomainError("symbol out of alphabet range")
    return block, N


def encode(spec, block, convention=TransformConvention()):
    """Map a source block x_{1:N} (N, M) to its u-block (N, M)."""
    block, N = _check_block(spec, block)
    q = np.asarray(spec.q)[None, :]
    w = block.copy()
    half = N // 2
    while half >= 1:
        for off in range(0, N, 2 * half):
            top = w[off:off + half]
            bot = w[off + half:off + 2 * half]
            r = (bot - convention.shift) % q
            top_new = (top - r) % q
            w[off:off + half] = top_new
            w[off + half:off + 2 * half] = r
        half //= 2
    return w


def inverse(spec, ublock, convention=TransformConvention()):
    """Map a u-block back to the source block (exact inverse of encode)."""
    ublock, N = _check_block(spec, ublock)
    q = np.asarray(spec.q)[None, :]
    w = ublock.copy()
    half = 1
    while half < N:
        for off in range(0, N, 2 * half):
            left = w[off:off + half]
            right = w[off + half:off + 2 * half]
            w[off:off + half] = (left + right) % q
            w[off + half:off + 2 * half] = (right + convention.shift) % q
        half *= 2
    return w


def encode_many(spec, blocks, convention=TransformConvention()):
    """Vectorized encode of an array of blocks, shape (B, N, M)."""
    blocks = np.asarray(blocks, dtype=np.int64)
    B, N, M = blocks.shape
    q = np.asarray(spec.q)[None, None, :]
    w = blocks.copy()
    half = N // 2
    while half >= 1:
        for off in range(0, N, 2 * half):
            top = w[:, off:off + half]
            bot = w[:, off + half:off + 2 * half]
            r = (bot - convention.shift) % q
            w[:, off:off + half] = (top - r) % q
            w[:, off + half:off + 2 * half] = r
        half //= 2
    return w


def loads_block(text, spec):
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append([int(tok) for tok in line.split()])
    block = np.asarray(rows, dtype=np.int64)
    _check_block(spec, block)
    return block


def load_block(path, spec):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_block(fh.read(), spec)


def dumps_block(block):
    return "\n".join(" ".join(str(int(v)) for v in row) for row in np.asarray(block)) + "\n"
