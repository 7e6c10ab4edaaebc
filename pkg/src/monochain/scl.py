"""SC list decoding with constant-cost forking on the shared graph.

Per step: every alive path advances to the leaf conditional (copy-on-write
stepping). At a frozen step all paths adopt the transmitted symbol. Otherwise
each path spawns one candidate per symbol, the top L candidates by
log-likelihood survive (ties to the earlier-created candidate, so the list
order is lexicographic in the decided prefixes), surviving siblings beyond
the first fork the parent head, and pruned paths cascade their exclusive
records back to the pool. The answer is the max-likelihood survivor.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError
from .sc import (NEG_INF, advance_to_leaf, extract_result, frozen_value_array,
                 init_graph, marginal_rows, pinned_values, recover_ublock)
from .tensor import partial_deterministic_entries
from .transform import TransformConvention


class _Path:
    __slots__ = ("head", "ll", "path_id", "marg", "vals", "side", "contra")

    def __init__(self, head, ll, path_id):
        self.head = head
        self.ll = ll
        self.path_id = path_id
        self.marg = None
        self.vals = None
        self.side = None
        self.contra = False


@dataclass
class Candidate:
    path_id: int
    loglik: float
    u_hat: np.ndarray
    x_hat: np.ndarray = None


@dataclass
class SclResult:
    x_hat: np.ndarray
    u_hat: np.ndarray
    loglik: float
    failed: bool
    candidates: list
    graph: object


def candidate_logliks(parent_lls, margs, contras, q):
    """Candidate c = (parent position, symbol), created in id order
    c = pos*q + symbol; returns (extended log-likelihood, symbol probability)
    per candidate."""
    out = np.empty(len(parent_lls) * q)
    psym = np.empty(len(parent_lls) * q)
    for pos, (ll, marg, contra) in enumerate(zip(parent_lls, margs, contras)):
        for s in range(q):
            ps = float(marg[s])
            psym[pos * q + s] = 0.0 if contra else ps
            if contra or ps <= 0.0 or ll == NEG_INF:
                out[pos * q + s] = NEG_INF
            else:
                out[pos * q + s] = ll + math.log(ps)
    return out, psym


def select_survivors(cand_ll, cand_ps, L):
    """Top-L candidate ids by log-likelihood, then by the candidate symbol's
    own probability, then by creation order; returned ascending so the new
    list stays lexicographic in the decided prefixes.

    The probability key only matters for candidates of already-impossible
    paths (all at -inf): it makes their continuation follow the greedy hard
    decision, so a degenerate list of size one behaves exactly like the plain
    decoder even after a decode failure.
    """
    order = sorted(range(len(cand_ll)), key=lambda c: (-cand_ll[c], -cand_ps[c], c))
    return sorted(order[:L])


def scl_decode(spec, prior, chain, frozen=(), codeword=(), L=1,
               convention=TransformConvention(), want_candidates=False):
    """List decode one block; returns the best reconstruction plus, when
    asked, the full surviving candidate list (path id, log-likelihood,
    decided u-block)."""
    if L < 1:
        raise DomainError("list size must be >= 1")
    graph, head0 = init_graph(spec, prior, list_size=L, convention=convention, cow=True)
    MN = len(chain)
    vals_frozen = frozen_value_array(chain, frozen, codeword)
    paths = [_Path(head0, 0.0, 0)]
    next_id = 1
    for t in range(1, MN + 1):
        gamma = chain.gamma[t - 1]
        i = chain.idx[t - 1]
        q = spec.q[gamma - 1]
        known_before = chain.known_set(t, i)
        for p in paths:
            graph.contradiction = False
            msg, temp, side = advance_to_leaf(graph, p.head, chain, t)
            combined = graph.combine_rows(msg[None], temp[None])[0]
            p.contra = graph.contradiction
            p.marg = marginal_rows(graph, combined, gamma)
            p.vals = pinned_values(graph, temp, known_before)
            p.side = side
        fv = vals_frozen[t - 1]
        if fv >= 0:
            sym = int(fv)
            for p in paths:
                _settle(graph, p, gamma, i, sym, known_before)
        else:
            cand_ll, cand_ps = candidate_logliks([p.ll for p in paths],
                                                 [p.marg for p in paths],
                                                 [p.contra for p in paths], q)
            keep = select_survivors(cand_ll, cand_ps, L)
            new_paths = []
            reused = set()
            for c in keep:
                pos, s = divmod(c, q)
                parent = paths[pos]
                if pos not in reused:
                    reused.add(pos)
                    child = parent
                else:
                    child = _Path(graph.fork(parent.head), parent.ll, -1)
                    child.marg = parent.marg
                    child.vals = dict(parent.vals)
                    child.side = parent.side
                    child.contra = parent.contra
                child.ll = cand_ll[c]
                child.path_id = next_id
                next_id += 1
                new_paths.append((child, s))
            for pos, p in enumerate(paths):
                if pos not in reused:
                    graph.release_head(p.head)
            paths = []
            for child, s in new_paths:
                _settle(graph, child, gamma, i, s, known_before, ll_done=True)
                paths.append(child)
    best = max(paths, key=lambda p: (p.ll, -p.path_id))
    failed = best.ll == NEG_INF
    candidates = []
    if want_candidates:
        for p in sorted(paths, key=lambda p: (-p.ll, p.path_id)):
            candidates.append(Candidate(p.path_id, p.ll, recover_ublock(graph, p.head)))
    u_hat = recover_ublock(graph, best.head)
    x_hat = extract_result(graph, best.head)
    for p in paths:
        graph.release_head(p.head)
    return SclResult(x_hat, u_hat, best.ll, failed, candidates, graph)


def _settle(graph, p, gamma, i, symbol, known_before, ll_done=False):
    """Write a path's partial decision for step t and settle its metric."""
    if not ll_done:
        ps = float(p.marg[symbol])
        if p.contra or ps <= 0.0 or p.ll == NEG_INF:
            p.ll = NEG_INF
        else:
            p.ll += math.log(ps)
    vals = p.vals
    vals[gamma] = symbol
    pd = partial_deterministic_entries(graph.spec, set(known_before) | {gamma}, vals)
    graph.write_leaf(p.head, p.side, pd)
    p.marg = None
    p.vals = None


def fork_cost_probe(spec, prior, chain, steps_before_fork, L=2,
                    convention=TransformConvention()):
    """Advance a single path partway through a decode, fork it, and report
    the instrumented record-touch count of the fork (plus the data-copy
    counter, which stays zero)."""
    graph, head = init_graph(spec, prior, list_size=L, convention=convention, cow=True)
    from .sc import DecoderState, decode_at  # local import to avoid a cycle

    state = DecoderState(graph, head, chain)
    for t in range(1, steps_before_fork + 1):
        decode_at(state, t, None)
    head2 = graph.fork(head)
    touches = graph.fork_touches[-1]
    data_copies = graph.fork_data_copies
    graph.release_head(head2)
    graph.release_head(head)
    return touches, data_copies
