"""Classical space-optimized list decoder, valid for corner chains only.

A corner chain decodes source 1 completely, then source 2, and so on, so each
pass is a classical successive sweep whose root priors are the joint pmf
conditioned on the components reconstructed by earlier passes. Future
subtrees then carry no in-pass evidence (uniform), and the per-path state
collapses to the classical per-level arrays:

* one down-message tensor array per level on the current root-to-leaf path,
* the pair of child-block up-message arrays per level,
* one flat decided-symbol array and one reconstruction array.

Paths hold a handle table of O(log N) references into a shared array store;
forking copies the handles (instrumented), and a shared array is duplicated
whole on first write after a fork (lazy copy). Because the decided-symbol
array is written at every step, each post-fork step pays an O(N) copy, which
is exactly why this baseline loses to the graph decoder at large N.
"""

from dataclasses import dataclass

import numpy as np

from .batchops import BatchKernels
from .errors import DomainError, UnsupportedChainError
from .sc import NEG_INF, frozen_value_array
from .scl import candidate_logliks, select_survivors
from .tensor import AlphabetSpec, partial_deterministic_entries
from .transform import TransformConvention, inverse

import math


class _ArrayStore:
    """Refcounted array store with whole-array copy-on-write."""

    def __init__(self):
        self._arrays = {}
        self._rc = {}
        self._next = 0
        self.cow_copies = 0
        self.cow_bytes = 0

    def alloc(self, arr):
        h = self._next
        self._next += 1
        self._arrays[h] = arr
        self._rc[h] = 1
        return h

    def get(self, h):
        return self._arrays[h]

    def incref(self, h):
        self._rc[h] += 1

    def decref(self, h):
        self._rc[h] -= 1
        if self._rc[h] == 0:
            del self._arrays[h]
            del self._rc[h]

    def writable(self, h):
        """Handle safe to write through: duplicates the array if shared."""
        if self._rc[h] == 1:
            return h
        arr = self._arrays[h]
        self.cow_copies += 1
        self.cow_bytes += arr.nbytes
        self._rc[h] -= 1
        return self.alloc(arr.copy())


class _LazyPath:
    __slots__ = ("handles", "ll", "path_id", "marg", "contra")

    def __init__(self, handles, ll, path_id):
        self.handles = handles
        self.ll = ll
        self.path_id = path_id
        self.marg = None
        self.contra = False


@dataclass
class LazyResult:
    x_hat: np.ndarray
    u_hat: np.ndarray
    loglik: float
    failed: bool
    candidates: list
    counters: dict


class LazyDecoder:
    def __init__(self, spec, prior, chain, convention=TransformConvention()):
        if not chain.is_corner():
            raise UnsupportedChainError(
                "the per-level lazy-copy layout needs the single-sweep order "
                "of a corner chain; use the graph engine for general chains"
            )
        self.spec = spec
        self.chain = chain
        self.N = chain.N
        self.n = self.N.bit_length() - 1
        self.Q = spec.size
        self.k = BatchKernels(spec, convention)
        self.convention = convention
        self.base_prior = np.asarray(prior, dtype=np.float64)
        if self.base_prior.shape != (self.N, self.Q):
            raise DomainError(f"prior must be ({self.N}, {self.Q})")
        self.store = _ArrayStore()
        self.fork_handle_copies = []
        self.forks = 0

    # -- per-path state ----------------------------------------------------

    def _initial_handles(self):
        st = self.store
        h = {"prior": st.alloc(self.base_prior.copy()),
             "D": st.alloc(np.full((self.N, self.spec.M), -1)),
             "xhat": st.alloc(np.zeros((self.N, self.spec.M), dtype=np.int64))}
        for lev in range(2, self.n + 2):
            h[("P", lev)] = st.alloc(np.empty((self.N >> (lev - 1), self.Q)))
        for lev in range(1, self.n + 1):
            h[("UPL", lev)] = st.alloc(np.empty((self.N >> lev, self.Q)))
            h[("UPR", lev)] = st.alloc(np.empty((self.N >> lev, self.Q)))
        return h

    def _fork(self, path, new_id):
        handles = dict(path.handles)
        for h in handles.values():
            self.store.incref(h)
        self.fork_handle_copies.append(len(handles))
        self.forks += 1
        child = _LazyPath(handles, path.ll, new_id)
        child.contra = path.contra
        return child

    def _release(self, path):
        for h in path.handles.values():
            self.store.decref(h)
        path.handles = None

    def _write(self, path, key):
        """COW guard: returns the writable array for this path's key."""
        h = self.store.writable(path.handles[key])
        path.handles[key] = h
        return self.store.get(h)

    def _read(self, path, key):
        return self.store.get(path.handles[key])

    # -- classical sweep ---------------------------------------------------

    def _cnt(self, lev):
        return self.N >> (lev - 1)

    def _recompute_down(self, path, i):
        """Refresh the down-message arrays whose path block changed at
        phase i, top level first (the classical recomputation set)."""
        if i == 1:
            levels = range(2, self.n + 2)
        else:
            a = ((i - 1) & -(i - 1)).bit_length() - 1  # trailing zeros of i-1
            levels = range(self.n + 1 - a, self.n + 2)
        for lev in levels:
            parent = (self._read(path, ("P", lev - 1))
                      if lev > 2 else self._read(path, "prior"))
            b = (i + self._cnt(lev) - 1) // self._cnt(lev)
            out = self._write(path, ("P", lev))
            if b % 2 == 1:
                uniform = np.full((self._cnt(lev), self.Q), 1.0 / self.Q)
                out[:] = self.k.calc_left_rows(parent, uniform)
            else:
                out[:] = self.k.calc_right_rows(parent, self._read(path, ("UPL", lev - 1)))

    def _propagate_up(self, path, i, g, symbol):
        self.k.tensor_ops += 1  # leaf partial-decision materialization
        carry = partial_deterministic_entries(self.spec, {g}, {g: symbol})[None, :]
        lev = self.n + 1
        while lev >= 2:
            b = (i + self._cnt(lev) - 1) // self._cnt(lev)
            key = ("UPL", lev - 1) if b % 2 == 1 else ("UPR", lev - 1)
            arr = self._write(path, key)
            arr[:] = carry
            if b % 2 == 1 or lev == 2:
                break
            nxt = np.empty((self._cnt(lev - 1), self.Q))
            self.k.calc_parent_rows(self._read(path, ("UPL", lev - 1)),
                                    self._read(path, ("UPR", lev - 1)), nxt)
            carry = nxt
            lev -= 1

    def _finish_pass(self, path, g):
        D = self._read(path, "D")
        col_spec = AlphabetSpec((self.spec.q[g - 1],))
        xg = inverse(col_spec, D[:, g - 1].astype(np.int64)[:, None], self.convention)
        xh = self._write(path, "xhat")
        xh[:, g - 1] = xg[:, 0]
        if g < self.spec.M:
            from .batchops import sequential_row_sums

            comp = self.k.comp
            prior = self._write(path, "prior")
            prior[:] = self.base_prior
            for c in range(g):
                mask = comp[c][None, :] == xh[:, c].astype(np.int64)[:, None]
                prior[~mask] = 0.0
            s = sequential_row_sums(prior)
            dead = s == 0.0
            if dead.any():
                prior[dead] = 1.0 / self.Q
                s[dead] = 1.0
                path.ll = NEG_INF
                path.contra = True
            prior /= s[:, None]
            self.k.tensor_ops += self.N  # conditioned-prior rebuild

    # -- decode ------------------------------------------------------------

    def decode(self, frozen=(), codeword=(), L=1, want_candidates=False):
        if L < 1:
            raise DomainError("list size must be >= 1")
        vals_frozen = frozen_value_array(self.chain, frozen, codeword)
        paths = [_LazyPath(self._initial_handles(), 0.0, 0)]
        next_id = 1
        uniform1 = np.full((1, self.Q), 1.0 / self.Q)
        for t in range(1, len(self.chain) + 1):
            g = self.chain.gamma[t - 1]
            i = self.chain.idx[t - 1]
            q = self.spec.q[g - 1]
            for p in paths:
                self.k.contradiction = False
                self._recompute_down(p, i)
                cond = self.k.combine_rows(self._read(p, ("P", self.n + 1)).copy(),
                                           uniform1)[0]
                p.contra = self.k.contradiction
                p.marg = self.k.marginal(cond, g)
            fv = vals_frozen[t - 1]
            if fv >= 0:
                for p in paths:
                    self._settle(p, t, g, i, int(fv))
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
                        child = self._fork(parent, -1)
                        child.marg = parent.marg
                    child.ll = cand_ll[c]
                    child.path_id = next_id
                    next_id += 1
                    new_paths.append((child, s))
                for pos, p in enumerate(paths):
                    if pos not in reused:
                        self._release(p)
                paths = []
                for child, s in new_paths:
                    self._settle(child, t, g, i, s, ll_done=True)
                    paths.append(child)
        best = max(paths, key=lambda p: (p.ll, -p.path_id))
        failed = best.ll == NEG_INF
        candidates = []
        if want_candidates:
            from .scl import Candidate

            for p in sorted(paths, key=lambda p: (-p.ll, p.path_id)):
                candidates.append(
                    Candidate(p.path_id, p.ll,
                              self._read(p, "D").astype(np.int64).copy()))
        x_hat = self._read(best, "xhat").astype(np.int64).copy()
        u_hat = self._read(best, "D").astype(np.int64).copy()
        loglik = best.ll
        for p in paths:
            self._release(p)
        counters = {
            "tensor_ops": self.k.tensor_ops,
            "forks": self.forks,
            "handle_copies": list(self.fork_handle_copies),
            "cow_copies": self.store.cow_copies,
            "cow_bytes": self.store.cow_bytes,
        }
        return LazyResult(x_hat, u_hat, loglik, failed, candidates, counters)

    def _settle(self, p, t, g, i, symbol, ll_done=False):
        if not ll_done:
            ps = float(p.marg[symbol])
            if p.contra or ps <= 0.0 or p.ll == NEG_INF:
                p.ll = NEG_INF
            else:
                p.ll += math.log(ps)
        D = self._write(p, "D")
        D[i - 1, g - 1] = symbol
        self._propagate_up(p, i, g, symbol)
        if i == self.N:
            self._finish_pass(p, g)
        p.marg = None


def lazy_scl_decode(spec, prior, chain, frozen=(), codeword=(), L=1,
                    convention=TransformConvention(), want_candidates=False):
    """Corner-chain list decode with the classical per-level lazy-copy
    layout. Same decode contract as scl_decode; rejects non-corner chains."""
    dec = LazyDecoder(spec, prior, chain, convention)
    return dec.decode(frozen, codeword, L=L, want_candidates=want_candidates)
