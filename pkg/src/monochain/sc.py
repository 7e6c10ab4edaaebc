"""Successive cancellation decoding as a guided head traversal.

One decoding step t: walk the head to the vertex adjacent to leaf i_t,
updating the crossed edges; compute the leaf's conditional message; fuse it
with the leaf's stored partial decisions; decide component gamma_t (hard
decision or frozen value); write back the extended partial decision. The
per-step conditional is exactly Pr(U^{1:M}_{i_t} | decided prefix), which the
oracle tests verify.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError, InternalStateError, ShapeError
from .graph import LEFT, RIGHT, CompGraph
from .tensor import partial_deterministic_entries
from .transform import TransformConvention

NEG_INF = float("-inf")


@dataclass(frozen=True)
class FrozenSpec:
    """Transmitted (frozen) chain steps, 1-based, strictly ascending."""

    chain: object
    steps: tuple

    def __post_init__(self):
        steps = tuple(int(t) for t in self.steps)
        MN = len(self.chain)
        if any(not 1 <= t <= MN for t in steps):
            raise DomainError(f"frozen step out of range 1..{MN}")
        if any(a >= b for a, b in zip(steps, steps[1:])):
            raise DomainError("frozen steps must be strictly ascending")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)


def frozen_value_array(chain, frozen, codeword):
    """Per-step symbol array: value at frozen steps, -1 elsewhere."""
    MN = len(chain)
    vals = np.full(MN, -1, dtype=np.int64)
    steps = frozen.steps if isinstance(frozen, FrozenSpec) else tuple(frozen)
    if len(codeword) != len(steps):
        raise ShapeError(f"codeword length {len(codeword)} != |frozen| {len(steps)}")
    for t, s in zip(steps, codeword):
        vals[t - 1] = int(s)
    return vals


def codeword_from_ublock(chain, frozen, ublock):
    """Symbols of a u-block at the frozen steps, in ascending step order."""
    steps = frozen.steps if isinstance(frozen, FrozenSpec) else tuple(frozen)
    return np.array(
        [ublock[chain.idx[t - 1] - 1, chain.gamma[t - 1] - 1] for t in steps],
        dtype=np.int64,
    )


def init_graph(spec, prior, list_size=1, convention=TransformConvention(), cow=False):
    """Build a wired graph over an (N, Q) prior array; head at vertex 1."""
    prior = np.asarray(prior, dtype=np.float64)
    g = CompGraph(spec, prior.shape[0], list_size=list_size, convention=convention, cow=cow)
    head = g.build_initial(prior)
    return g, head


def replicated_prior(src, N):
    """Root-edge prior for i.i.d. copies of the single-letter joint pmf."""
    return np.tile(src.pmf.entries, (N, 1))


@dataclass
class DecoderState:
    """One SC decoder mid-flight."""

    graph: CompGraph
    head: object
    chain: object
    t: int = 1
    decided: dict = field(default_factory=dict)  # (gamma, i) -> symbol
    loglik: float = 0.0
    failed: bool = False


def advance_to_leaf(graph, head, chain, t):
    """Walk the head next to leaf i_t and return (leaf conditional message,
    stored leaf tensor, leaf side). The message is Alg-style scratch output
    but still counts as a leaf-edge update."""
    i = chain.idx[t - 1]
    beta_t = (i + graph.N - 1) // 2
    step = graph.step_to_cow if graph.cow else graph.step_to
    for b in graph.get_path(head, beta_t):
        step(head, b)
    v = head.vertex
    side = LEFT if i % 2 == 1 else RIGHT
    if side == LEFT:
        msg = graph.calc_left_rows(v.parent_edge.data, v.right_edge.data)
        leaf = v.left_edge
    else:
        msg = graph.calc_right_rows(v.parent_edge.data, v.left_edge.data)
        leaf = v.right_edge
    graph._count_update(leaf.index)
    return msg[0], leaf.data[0], side


def pinned_values(graph, entries, components):
    """Recover the pinned symbols of a partially deterministic tensor."""
    vals = {}
    for c in components:
        row = graph.comp[c - 1]
        mask = entries > 0.0
        seen = np.unique(row[mask])
        if seen.size != 1:
            raise InternalStateError(f"component {c} is not pinned")
        vals[c] = int(seen[0])
    return vals


def marginal_rows(graph, entries, component):
    q = graph.spec.q[component - 1]
    return np.bincount(graph.comp[component - 1], weights=entries, minlength=q)


def decode_at(state, t, frozen_value=None):
    """One decoding step; returns (conditional entries, decided symbol)."""
    if t != state.t:
        raise DomainError(f"decoder is at step {state.t}, not {t}")
    graph, head, chain = state.graph, state.head, state.chain
    gamma = chain.gamma[t - 1]
    i = chain.idx[t - 1]
    graph.contradiction = False
    msg, temp, side = advance_to_leaf(graph, head, chain, t)
    combined = graph.combine_rows(msg[None], temp[None])[0]
    contra = graph.contradiction
    marg = marginal_rows(graph, combined, gamma)
    if frozen_value is None:
        symbol = int(np.argmax(marg))
    else:
        symbol = int(frozen_value)
        if not 0 <= symbol < graph.spec.q[gamma - 1]:
            raise DomainError(f"frozen symbol {symbol} out of range")
    p = float(marg[symbol])
    if contra or p <= 0.0:
        state.loglik = NEG_INF
        state.failed = True
    else:
        state.loglik += math.log(p)
    known_before = chain.known_set(t, i)
    vals = pinned_values(graph, temp, known_before)
    vals[gamma] = symbol
    pd = partial_deterministic_entries(graph.spec, set(known_before) | {gamma}, vals)
    graph.write_leaf(head, side, pd)
    state.decided[(gamma, i)] = symbol
    state.t = t + 1
    return combined, symbol


def extract_result(graph, head):
    """Walk the head to the root and read the block off the root edge.

    Valid once every leaf is deterministic; O(N) tensor operations.
    """
    step = graph.step_to_cow if graph.cow else graph.step_to
    while head.beta > 1:
        step(head, head.beta // 2)
    root = graph.write_root(head, None)
    peaks = np.argmax(root, axis=1)
    if np.any(root[np.arange(root.shape[0]), peaks] < 1.0 - 1e-6):
        raise InternalStateError("root tensors are not deterministic")
    return graph.comp[:, peaks].T.astype(np.int64)


def recover_ublock(graph, head):
    """Read the decided u-block off the (fully deterministic) leaf edges."""
    N, M = graph.N, graph.spec.M
    u = np.full((N, M), -1, dtype=np.int64)
    _, edges = graph.traverse_all(head)
    for e in edges:
        if e.level == graph.n + 1:
            i = e.index - (N - 1)
            k = int(np.argmax(e.data[0]))
            u[i - 1] = graph.comp[:, k]
    return u


@dataclass
class ScResult:
    x_hat: np.ndarray
    u_hat: np.ndarray
    loglik: float
    failed: bool
    conditionals: np.ndarray  # (MN, Q) or None
    graph: CompGraph


def sc_decode(spec, prior, chain, frozen=(), codeword=(), convention=TransformConvention(),
              want_conditionals=False, forced_u=None):
    """Full SC decode of one block.

    ``frozen``/``codeword`` give the transmitted steps and symbols. With
    ``forced_u`` (an (N, M) u-block) every decision is forced to the true
    symbol instead (genie mode, used by code construction).
    """
    graph, head = init_graph(spec, prior, convention=convention, cow=False)
    MN = len(chain)
    vals = frozen_value_array(chain, frozen, codeword)
    if forced_u is not None:
        forced_u = np.asarray(forced_u)
        for t in range(1, MN + 1):
            vals[t - 1] = forced_u[chain.idx[t - 1] - 1, chain.gamma[t - 1] - 1]
    state = DecoderState(graph, head, chain)
    conds = np.empty((MN, spec.size)) if want_conditionals else None
    for t in range(1, MN + 1):
        fv = None if vals[t - 1] < 0 else int(vals[t - 1])
        combined, _ = decode_at(state, t, fv)
        if want_conditionals:
            conds[t - 1] = combined
    u_hat = recover_ublock(graph, head)
    x_hat = extract_result(graph, head)
    return ScResult(x_hat, u_hat, state.loglik, state.failed, conds, graph)


def genie_decode(spec, prior, chain, true_u, convention=TransformConvention()):
    """SC pass with all decisions forced to the true u-block; returns the
    per-step conditionals (the statistic code construction averages)."""
    return sc_decode(spec, prior, chain, convention=convention,
                     want_conditionals=True, forced_u=true_u)


def conditionals_exact(chain):
    """Whether per-edge per-copy tensors can carry the full evidence for this
    decoding order, i.e. whether the computed step conditionals equal the true
    conditionals.

    The message into a step's leaf summarizes each sibling subtree by one
    tensor per copy. That summary is the exact evidence likelihood iff, at
    every read of a multi-copy subtree summary, each component is either
    decided on all of the subtree's copies or on none of them (decided values
    then enter as per-copy point masses, undecided components as uniform).
    Otherwise a decided value straddling the subtree couples its copies (for
    example u_1 = x_1 - x_2 with x-components undecided) and the per-copy
    product form cannot represent it; the decoder then propagates per-copy
    marginals, which is a mean-field-style approximation.

    Corner chains and same-copy interleavings satisfy this for every N
    (single-copy subtrees never couple). General monotone chains need not.
    """
    N, M = chain.N, chain.M
    span = {}
    for e in range(1, 2 * N):
        span[e] = N >> (e.bit_length() - 1)
    cnt = [[0] * (2 * N) for _ in range(M)]

    def subtree_ok(e):
        if span[e] < 2:
            return True
        return all(cnt[c][e] in (0, span[e]) for c in range(M))

    head = 1
    for t in range(1, len(chain) + 1):
        i = chain.idx[t - 1]
        target = (i + N - 1) // 2
        a, b = head, target
        ups, downs = [], []
        while a != b:
            if a > b:
                a //= 2
                ups.append(a)
            else:
                downs.append(b)
                b //= 2
        downs.reverse()
        cur = head
        for nxt in ups + downs:
            if nxt == 2 * cur:  # down-left reads the right child summary
                if not subtree_ok(2 * cur + 1):
                    return False
            elif nxt == 2 * cur + 1:  # down-right reads the left child summary
                if not subtree_ok(2 * cur):
                    return False
            else:  # up: combines both child summaries into the parent cache
                if not (subtree_ok(2 * cur) and subtree_ok(2 * cur + 1)):
                    return False
            cur = nxt
        head = target
        c = chain.gamma[t - 1] - 1
        e = i + N - 1
        while e >= 1:
            cnt[c][e] += 1
            e //= 2
    return True
