# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled decode engines: the shared-graph list decoder and the classical
lazy-copy baseline.

Twin of the pure-Python engines (graph.py / sc.py / scl.py / lazycopy.py):
same record structure, same kernel op order, same candidate selection and
tie-breaks, same instrumentation counters. The Python side builds the plan
arrays (index tables, chain arrays, frozen symbols); everything per-step
runs in C. Engine instances own preallocated pools and are cached per
(alphabets, N, L, permutation) so benchmark rounds reuse them.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, log
from libc.string cimport memcpy

cnp.import_array()

CORE_READY = True

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# row kernels (renormalize every output; all-zero rows turn uniform + flag)
# ---------------------------------------------------------------------------

cdef inline int row_norm(double* out, int Q) noexcept nogil:
    cdef double s = 0.0
    cdef int k
    for k in range(Q):
        s += out[k]
    if s == 0.0:
        for k in range(Q):
            out[k] = 1.0 / Q
        return 1
    # true division, matching the numpy backend bit for bit
    for k in range(Q):
        out[k] = out[k] / s
    return 0


cdef inline int row_conv(double* a, double* b, double* out, i32* tab, int Q) noexcept nogil:
    cdef int k, i
    cdef double acc
    cdef i32* row
    for k in range(Q):
        acc = 0.0
        row = tab + k * Q
        for i in range(Q):
            acc += a[row[i]] * b[i]
        out[k] = acc
    return row_norm(out, Q)


cdef inline int row_combine(double* a, double* b, double* out, i32* pull, int Q) noexcept nogil:
    cdef int k
    if pull == NULL:
        for k in range(Q):
            out[k] = a[k] * b[k]
    else:
        for k in range(Q):
            out[k] = a[pull[k]] * b[k]
    return row_norm(out, Q)


cdef struct Tables:
    i32* sub
    i32* add
    i32* comp      # M x Q
    i32* pull      # NULL = identity
    i32* push
    i32* q
    int Q
    int M


cdef int calc_left_c(Tables* tb, double* parent, double* right, double* out,
                     int l, double* tmp) noexcept nogil:
    cdef int s, contra = 0
    cdef int Q = tb.Q
    for s in range(l):
        contra |= row_combine(parent + (l + s) * Q, right + s * Q, tmp, tb.pull, Q)
        contra |= row_conv(parent + s * Q, tmp, out + s * Q, tb.add, Q)
    return contra


cdef int calc_right_c(Tables* tb, double* parent, double* left, double* out,
                      int l, double* tmp) noexcept nogil:
    cdef int s, contra = 0
    cdef int Q = tb.Q
    for s in range(l):
        contra |= row_conv(parent + s * Q, left + s * Q, tmp, tb.add, Q)
        contra |= row_combine(parent + (l + s) * Q, tmp, out + s * Q, tb.pull, Q)
    return contra


cdef int calc_parent_c(Tables* tb, double* left, double* right, double* out,
                       int l) noexcept nogil:
    cdef int s, k, contra = 0
    cdef int Q = tb.Q
    for s in range(l):
        contra |= row_conv(left + s * Q, right + s * Q, out + s * Q, tb.sub, Q)
    if tb.push == NULL:
        memcpy(out + l * Q, right, <size_t> l * Q * sizeof(double))
    else:
        for s in range(l):
            for k in range(Q):
                out[(l + s) * Q + k] = right[s * Q + tb.push[k]]
    return contra


cdef void row_marginal(Tables* tb, double* row, int comp0, double* marg) noexcept nogil:
    cdef int k
    cdef i32* cr = tb.comp + comp0 * tb.Q
    for k in range(tb.q[comp0]):
        marg[k] = 0.0
    for k in range(tb.Q):
        marg[cr[k]] += row[k]


cdef void row_pinned(Tables* tb, double* row, int known_mask, i32* vals) noexcept nogil:
    cdef int m, k
    for m in range(tb.M):
        vals[m] = -1
        if not (known_mask >> m) & 1:
            continue
        for k in range(tb.Q):
            if row[k] > 0.0:
                vals[m] = tb.comp[m * tb.Q + k]
                break


cdef void row_pd(Tables* tb, int known_mask, i32* vals, double* out) noexcept nogil:
    cdef int m, k, ok
    cdef long count = tb.Q
    cdef double v
    for m in range(tb.M):
        if (known_mask >> m) & 1:
            count //= tb.q[m]
    v = 1.0 / count
    for k in range(tb.Q):
        ok = 1
        for m in range(tb.M):
            if (known_mask >> m) & 1 and tb.comp[m * tb.Q + k] != vals[m]:
                ok = 0
                break
        out[k] = v if ok else 0.0


cdef int select_top(double* cand_ll, double* cand_ps, int C, int L,
                    i32* picked, i32* keep) noexcept nogil:
    """Top-L candidate ids by (loglik desc, symbol probability desc, id asc),
    returned in ascending id order. Returns the number kept. Scanning ids
    upward with strict comparisons makes the earlier-created candidate win
    full ties; the probability key only separates candidates of already
    impossible paths, keeping their continuation greedy."""
    cdef int K = C if C < L else L
    cdef int r, c, best, j, cur
    for c in range(C):
        picked[c] = 0
    for r in range(K):
        best = -1
        for c in range(C):
            if picked[c]:
                continue
            if (best < 0 or cand_ll[c] > cand_ll[best] or
                    (cand_ll[c] == cand_ll[best] and cand_ps[c] > cand_ps[best])):
                best = c
        picked[best] = 1
        keep[r] = best
    for c in range(1, K):
        cur = keep[c]
        j = c - 1
        while j >= 0 and keep[j] > cur:
            keep[j + 1] = keep[j]
            j -= 1
        keep[j + 1] = cur
    return K


cdef int bitlen(long x) noexcept nogil:
    cdef int n = 0
    while x:
        n += 1
        x >>= 1
    return n


# ---------------------------------------------------------------------------
# table holder
# ---------------------------------------------------------------------------

cdef class _TableHolder:
    cdef Tables tb
    cdef object refs

    def __init__(self, spec, convention):
        from .batchops import BatchKernels

        k = BatchKernels(spec, convention)
        sub = np.ascontiguousarray(k.sub, dtype=np.int32)
        add = np.ascontiguousarray(k.add, dtype=np.int32)
        comp = np.ascontiguousarray(k.comp, dtype=np.int32)
        q = np.asarray(spec.q, dtype=np.int32)
        self.refs = [sub, add, comp, q]
        self.tb.sub = <i32*> cnp.PyArray_DATA(<cnp.ndarray> sub)
        self.tb.add = <i32*> cnp.PyArray_DATA(<cnp.ndarray> add)
        self.tb.comp = <i32*> cnp.PyArray_DATA(<cnp.ndarray> comp)
        self.tb.q = <i32*> cnp.PyArray_DATA(<cnp.ndarray> q)
        self.tb.Q = spec.size
        self.tb.M = spec.M
        if k.pull is None:
            self.tb.pull = NULL
            self.tb.push = NULL
        else:
            pull = np.ascontiguousarray(k.pull, dtype=np.int32)
            push = np.ascontiguousarray(k.push, dtype=np.int32)
            self.refs += [pull, push]
            self.tb.pull = <i32*> cnp.PyArray_DATA(<cnp.ndarray> pull)
            self.tb.push = <i32*> cnp.PyArray_DATA(<cnp.ndarray> push)


cdef class _Scratch:
    """Keeps numpy buffers alive and hands out raw pointers."""
    cdef list refs

    def __cinit__(self):
        self.refs = []

    cdef double* f64buf(self, long count):
        arr = np.zeros(count, dtype=np.float64)
        self.refs.append(arr)
        return <double*> cnp.PyArray_DATA(<cnp.ndarray> arr)

    cdef i32* i32buf(self, long count):
        arr = np.zeros(count, dtype=np.int32)
        self.refs.append(arr)
        return <i32*> cnp.PyArray_DATA(<cnp.ndarray> arr)

    cdef i64* i64buf(self, long count):
        arr = np.zeros(count, dtype=np.int64)
        self.refs.append(arr)
        return <i64*> cnp.PyArray_DATA(<cnp.ndarray> arr)


# ---------------------------------------------------------------------------
# graph engine
# ---------------------------------------------------------------------------

cdef class GraphEngine:
    cdef _TableHolder th
    cdef Tables* tb
    cdef _Scratch mem
    cdef public int N, L
    cdef int n, Q, M, qmax, maxpaths, levels
    cdef i64 tensor_ops
    cdef i64 fork_count
    cdef i64 data_copies_at_fork

    cdef double** slab_base
    cdef i32* slab_width
    cdef i32** lev_free
    cdef i32* lev_free_top
    cdef i32* lev_in_use
    cdef i32* lev_high
    cdef i32* lev_cnt
    cdef i32* lev_cap

    cdef i32* e_from
    cdef i32* e_buf
    cdef i32* e_lev
    cdef i32* e_usage
    cdef i32* e_index
    cdef i32* e_free
    cdef int e_free_top
    cdef int E_cap

    cdef i32* v_par
    cdef i32* v_left
    cdef i32* v_right
    cdef i32* v_beta
    cdef i32* v_usage
    cdef i32* v_free
    cdef int v_free_top
    cdef int V_cap
    cdef i32 v_in_use
    cdef i32 v_high

    cdef double* s_tmp
    cdef double* s_msg
    cdef double* s_comb
    cdef i32* s_vals
    cdef i32* emap
    cdef i32* vstack
    cdef i32* vstamp
    cdef i32* estamp
    cdef i32 stamp

    # path state
    cdef i32* hv
    cdef i32* hb
    cdef double* pll
    cdef i64* pid
    cdef i32* pcontra
    cdef i32* pside
    cdef double* pmarg
    cdef i32* pvals
    cdef double* cand_ll
    cdef double* cand_ps
    cdef i32* sel_order
    cdef i32* sel_keep
    cdef i32* reused
    cdef i32* nhv
    cdef i32* nhb
    cdef double* nll
    cdef i32* nsym
    cdef i32* nparent

    def __init__(self, spec, convention, int N, int L):
        self.th = _TableHolder(spec, convention)
        self.tb = &self.th.tb
        self.mem = _Scratch()
        self.N = N
        self.n = bitlen(N) - 1
        self.Q = self.tb.Q
        self.M = self.tb.M
        self.L = L
        cdef int m, qmax = 0
        for m in range(self.M):
            if self.tb.q[m] > qmax:
                qmax = self.tb.q[m]
        self.qmax = qmax
        self.maxpaths = qmax * L + 4
        cdef int slack = (qmax + 2) * L + 4
        cdef int levels = self.n + 1
        self.levels = levels
        self.slab_base = <double**> self.mem.i64buf(levels)  # pointer-sized slots
        self.slab_width = self.mem.i32buf(levels)
        self.lev_free = <i32**> self.mem.i64buf(levels)
        self.lev_free_top = self.mem.i32buf(levels)
        self.lev_in_use = self.mem.i32buf(levels)
        self.lev_high = self.mem.i32buf(levels)
        self.lev_cnt = self.mem.i32buf(levels)
        self.lev_cap = self.mem.i32buf(levels)
        cdef int lev, cap
        cdef int E_cap = 0
        for lev in range(levels):
            cap = L * (1 << lev) + slack
            self.lev_cap[lev] = cap
            E_cap += cap
            self.lev_cnt[lev] = N >> lev
            self.slab_width[lev] = (N >> lev) * self.Q
            self.slab_base[lev] = self.mem.f64buf(<long> cap * self.slab_width[lev])
            self.lev_free[lev] = self.mem.i32buf(cap)
        self.E_cap = E_cap
        self.e_from = self.mem.i32buf(E_cap)
        self.e_buf = self.mem.i32buf(E_cap)
        self.e_lev = self.mem.i32buf(E_cap)
        self.e_usage = self.mem.i32buf(E_cap)
        self.e_index = self.mem.i32buf(E_cap)
        self.e_free = self.mem.i32buf(E_cap)
        cdef int V_cap = L * (N - 1) + slack + 4
        self.V_cap = V_cap
        self.v_par = self.mem.i32buf(V_cap)
        self.v_left = self.mem.i32buf(V_cap)
        self.v_right = self.mem.i32buf(V_cap)
        self.v_beta = self.mem.i32buf(V_cap)
        self.v_usage = self.mem.i32buf(V_cap)
        self.v_free = self.mem.i32buf(V_cap)
        self.s_tmp = self.mem.f64buf(self.Q)
        self.s_msg = self.mem.f64buf(self.Q)
        self.s_comb = self.mem.f64buf(self.Q)
        self.s_vals = self.mem.i32buf(self.M)
        self.emap = self.mem.i32buf(2 * N)
        self.vstack = self.mem.i32buf(V_cap + 4)
        self.vstamp = self.mem.i32buf(V_cap)
        self.estamp = self.mem.i32buf(E_cap)
        self.stamp = 0
        cdef int mp = self.maxpaths
        self.hv = self.mem.i32buf(mp)
        self.hb = self.mem.i32buf(mp)
        self.pll = self.mem.f64buf(mp)
        self.pid = self.mem.i64buf(mp)
        self.pcontra = self.mem.i32buf(mp)
        self.pside = self.mem.i32buf(mp)
        self.pmarg = self.mem.f64buf(<long> mp * qmax)
        self.pvals = self.mem.i32buf(<long> mp * self.M)
        self.cand_ll = self.mem.f64buf(<long> mp * qmax)
        self.cand_ps = self.mem.f64buf(<long> mp * qmax)
        self.sel_order = self.mem.i32buf(<long> mp * qmax)
        self.sel_keep = self.mem.i32buf(<long> mp * qmax)
        self.reused = self.mem.i32buf(mp)
        self.nhv = self.mem.i32buf(mp)
        self.nhb = self.mem.i32buf(mp)
        self.nll = self.mem.f64buf(mp)
        self.nsym = self.mem.i32buf(mp)
        self.nparent = self.mem.i32buf(mp)

    # -- pools --------------------------------------------------------------

    cdef void reset(self) noexcept nogil:
        cdef int lev, j
        for lev in range(self.levels):
            for j in range(self.lev_cap[lev]):
                self.lev_free[lev][j] = self.lev_cap[lev] - 1 - j
            self.lev_free_top[lev] = self.lev_cap[lev]
            self.lev_in_use[lev] = 0
            self.lev_high[lev] = 0
        for j in range(self.E_cap):
            self.e_free[j] = self.E_cap - 1 - j
        self.e_free_top = self.E_cap
        for j in range(self.V_cap):
            self.v_free[j] = self.V_cap - 1 - j
            self.vstamp[j] = 0
        for j in range(self.E_cap):
            self.estamp[j] = 0
        self.v_free_top = self.V_cap
        self.v_in_use = 0
        self.v_high = 0
        self.stamp = 0
        self.tensor_ops = 0
        self.fork_count = 0
        self.data_copies_at_fork = 0

    cdef int alloc_edge(self, int lev) except -1:
        if self.e_free_top == 0 or self.lev_free_top[lev] == 0:
            raise MemoryError("edge pool exhausted (capacity bug)")
        self.e_free_top -= 1
        cdef int e = self.e_free[self.e_free_top]
        self.lev_free_top[lev] -= 1
        self.e_buf[e] = self.lev_free[lev][self.lev_free_top[lev]]
        self.e_lev[e] = lev
        self.e_from[e] = -1
        self.e_usage[e] = 0
        self.lev_in_use[lev] += 1
        if self.lev_in_use[lev] > self.lev_high[lev]:
            self.lev_high[lev] = self.lev_in_use[lev]
        return e

    cdef void free_edge_record(self, int e) noexcept nogil:
        cdef int lev = self.e_lev[e]
        self.lev_free[lev][self.lev_free_top[lev]] = self.e_buf[e]
        self.lev_free_top[lev] += 1
        self.lev_in_use[lev] -= 1
        self.e_free[self.e_free_top] = e
        self.e_free_top += 1

    cdef int alloc_vertex(self) except -1:
        if self.v_free_top == 0:
            raise MemoryError("vertex pool exhausted (capacity bug)")
        self.v_free_top -= 1
        self.v_in_use += 1
        if self.v_in_use > self.v_high:
            self.v_high = self.v_in_use
        return self.v_free[self.v_free_top]

    cdef void free_vertex_record(self, int v) noexcept nogil:
        self.v_free[self.v_free_top] = v
        self.v_free_top += 1
        self.v_in_use -= 1

    cdef inline double* edata(self, int e) noexcept nogil:
        return self.slab_base[self.e_lev[e]] + <long> self.e_buf[e] * self.slab_width[self.e_lev[e]]

    cdef void drop_edge(self, int e) noexcept nogil:
        self.e_usage[e] -= 1
        if self.e_usage[e] > 0:
            return
        cdef int w = self.e_from[e]
        self.free_edge_record(e)
        if w >= 0:
            self.drop_vertex(w)

    cdef void drop_vertex(self, int w) noexcept nogil:
        self.v_usage[w] -= 1
        if self.v_usage[w] > 0:
            return
        cdef int c
        c = self.v_par[w]
        if self.e_from[c] != w:
            self.drop_edge(c)
        c = self.v_left[w]
        if self.e_from[c] != w:
            self.drop_edge(c)
        c = self.v_right[w]
        if self.e_from[c] != w:
            self.drop_edge(c)
        self.free_vertex_record(w)

    # -- wiring ---------------------------------------------------------------

    cdef int build_initial(self, double[:, ::1] prior) except -1:
        cdef int N = self.N
        cdef int Q = self.Q
        cdef int b, e, v, k, lev
        cdef double* d
        for b in range(1, 2 * N):
            lev = bitlen(b) - 1
            e = self.alloc_edge(lev)
            self.e_index[e] = b
            self.e_usage[e] = 1
            self.emap[b] = e
        d = self.edata(self.emap[1])
        memcpy(d, &prior[0, 0], <size_t> N * Q * sizeof(double))
        for b in range(2, 2 * N):
            e = self.emap[b]
            d = self.edata(e)
            for k in range(self.slab_width[self.e_lev[e]]):
                d[k] = 1.0 / Q
        # vertex ids: reuse emap[1..N-1] region of a second sweep
        cdef int head = -1
        cdef i32* vmap = self.vstack  # borrow as temp (rewired before use)
        for b in range(1, N):
            v = self.alloc_vertex()
            self.v_beta[v] = b
            self.v_par[v] = self.emap[b]
            self.v_left[v] = self.emap[2 * b]
            self.v_right[v] = self.emap[2 * b + 1]
            self.v_usage[v] = 1
            vmap[b] = v
        for b in range(2, N):
            self.e_from[self.emap[b]] = vmap[b]
        self.e_from[self.emap[1]] = -1
        head = vmap[1]
        return head

    # -- stepping ---------------------------------------------------------------

    cdef int compute_step(self, int v, int kind, double* out, int l) noexcept nogil:
        cdef int contra
        if kind == 0:
            contra = calc_left_c(self.tb, self.edata(self.v_par[v]),
                                 self.edata(self.v_right[v]), out, l, self.s_tmp)
        elif kind == 1:
            contra = calc_right_c(self.tb, self.edata(self.v_par[v]),
                                  self.edata(self.v_left[v]), out, l, self.s_tmp)
        else:
            contra = calc_parent_c(self.tb, self.edata(self.v_left[v]),
                                   self.edata(self.v_right[v]), out, l)
        self.tensor_ops += 2 * l
        return contra

    cdef int do_step(self, int p, int target) except -2:
        cdef int v = self.hv[p]
        cdef int beta = self.hb[p]
        cdef int edge, kind
        if target == 2 * beta:
            edge = self.v_left[v]
            kind = 0
        elif target == 2 * beta + 1:
            edge = self.v_right[v]
            kind = 1
        elif beta > 1 and target == beta // 2:
            edge = self.v_par[v]
            kind = 2
        else:
            return 0
        cdef int far = self.e_from[edge]
        cdef int lev = self.e_lev[edge]
        # batch length of the calc: child-row count (a parent write covers
        # 2l rows built from l child rows)
        cdef int l = self.lev_cnt[lev] if kind != 2 else self.lev_cnt[lev + 1]
        cdef int contra
        cdef double* out
        cdef int new_edge, far2
        if self.e_usage[edge] == 1 and self.v_usage[far] == 1:
            out = self.edata(edge)
            contra = self.compute_step(v, kind, out, l)
            self.e_from[edge] = v
            self.hv[p] = far
            self.hb[p] = target
            return contra
        new_edge = self.alloc_edge(lev)
        self.e_index[new_edge] = self.e_index[edge]
        far2 = self.alloc_vertex()
        self.v_beta[far2] = self.v_beta[far]
        self.v_par[far2] = self.v_par[far]
        self.v_left[far2] = self.v_left[far]
        self.v_right[far2] = self.v_right[far]
        if kind == 0 or kind == 1:
            self.v_par[far2] = new_edge
        elif beta % 2 == 0:
            self.v_left[far2] = new_edge
        else:
            self.v_right[far2] = new_edge
        if self.v_par[far2] != new_edge:
            self.e_usage[self.v_par[far2]] += 1
        if self.v_left[far2] != new_edge:
            self.e_usage[self.v_left[far2]] += 1
        if self.v_right[far2] != new_edge:
            self.e_usage[self.v_right[far2]] += 1
        out = self.edata(new_edge)
        contra = self.compute_step(v, kind, out, l)
        self.e_from[new_edge] = v
        self.v_usage[v] += 1
        self.e_usage[new_edge] = 1
        if kind == 0:
            self.v_left[v] = new_edge
        elif kind == 1:
            self.v_right[v] = new_edge
        else:
            self.v_par[v] = new_edge
        self.drop_edge(edge)
        self.v_usage[far2] = 1
        self.v_usage[v] -= 1
        self.hv[p] = far2
        self.hb[p] = target
        return contra

    cdef int walk_to(self, int p, int target) except -2:
        """Walk path p's head to the target vertex (ascend to the common
        ancestor, then descend); returns accumulated contradiction flags."""
        cdef int a = self.hb[p]
        cdef int b = target
        cdef int contra = 0
        cdef int nu = 0, nd = 0
        cdef i32* ups = self.sel_order     # borrow two step-local buffers
        cdef i32* downs = self.sel_keep
        while a != b:
            if a > b:
                a //= 2
                ups[nu] = a
                nu += 1
            else:
                downs[nd] = b
                nd += 1
                b //= 2
        cdef int j
        for j in range(nu):
            contra |= self.do_step(p, ups[j])
        for j in range(nd - 1, -1, -1):
            contra |= self.do_step(p, downs[j])
        return contra

    cdef int fork_path(self, int src, int dst) except -1:
        cdef int v = self.hv[src]
        cdef int v2 = self.alloc_vertex()
        self.v_beta[v2] = self.v_beta[v]
        self.v_par[v2] = self.v_par[v]
        self.v_left[v2] = self.v_left[v]
        self.v_right[v2] = self.v_right[v]
        self.e_usage[self.v_par[v]] += 1
        self.e_usage[self.v_left[v]] += 1
        self.e_usage[self.v_right[v]] += 1
        self.v_usage[v2] = 1
        self.fork_count += 1
        self.nhv[dst] = v2
        self.nhb[dst] = self.hb[src]
        return 0

    cdef int write_leaf_pd(self, int v, int side, int known_mask, i32* vals) except -1:
        cdef int edge = self.v_left[v] if side == 0 else self.v_right[v]
        cdef int new_edge
        cdef double* d
        if self.e_usage[edge] == 1:
            d = self.edata(edge)
        else:
            new_edge = self.alloc_edge(self.e_lev[edge])
            self.e_index[new_edge] = self.e_index[edge]
            self.e_usage[new_edge] = 1
            if side == 0:
                self.v_left[v] = new_edge
            else:
                self.v_right[v] = new_edge
            self.drop_edge(edge)
            edge = new_edge
            d = self.edata(edge)
        row_pd(self.tb, known_mask, vals, d)
        self.tensor_ops += 1
        return 0

    cdef int extract_block(self, int p, i64[:, ::1] x_out) except -1:
        while self.hb[p] > 1:
            self.do_step(p, self.hb[p] // 2)
        cdef int v = self.hv[p]
        cdef int edge = self.v_par[v]
        cdef int l = self.N // 2
        cdef double* out
        cdef int new_edge
        if self.e_usage[edge] == 1:
            out = self.edata(edge)
        else:
            new_edge = self.alloc_edge(0)
            self.e_index[new_edge] = 1
            self.e_usage[new_edge] = 1
            self.v_par[v] = new_edge
            self.drop_edge(edge)
            edge = new_edge
            out = self.edata(edge)
        calc_parent_c(self.tb, self.edata(self.v_left[v]),
                      self.edata(self.v_right[v]), out, l)
        self.tensor_ops += 2 * l
        cdef int i, k, best, m
        cdef double mx
        for i in range(self.N):
            best = 0
            mx = out[i * self.Q]
            for k in range(1, self.Q):
                if out[i * self.Q + k] > mx:
                    mx = out[i * self.Q + k]
                    best = k
            if mx < 1.0 - 1e-6:
                raise RuntimeError("root tensors are not deterministic")
            for m in range(self.M):
                x_out[i, m] = self.tb.comp[m * self.Q + best]
        return 0

    cdef int recover_ublock(self, int p, i64[:, ::1] u_out) except -1:
        self.stamp += 1
        cdef i32 st = self.stamp
        cdef int top = 0
        cdef int v, e, w, k, m, best, si, i
        cdef double mx
        cdef double* d
        self.vstack[top] = self.hv[p]
        top += 1
        self.vstamp[self.hv[p]] = st
        while top > 0:
            top -= 1
            v = self.vstack[top]
            for si in range(3):
                e = self.v_par[v] if si == 0 else (self.v_left[v] if si == 1 else self.v_right[v])
                if self.estamp[e] == st:
                    continue
                self.estamp[e] = st
                if self.e_lev[e] == self.n:
                    i = self.e_index[e] - (self.N - 1)
                    d = self.edata(e)
                    best = 0
                    mx = d[0]
                    for k in range(1, self.Q):
                        if d[k] > mx:
                            mx = d[k]
                            best = k
                    for m in range(self.M):
                        u_out[i - 1, m] = self.tb.comp[m * self.Q + best]
                w = self.e_from[e]
                if w >= 0 and self.vstamp[w] != st:
                    self.vstamp[w] = st
                    self.vstack[top] = w
                    top += 1
        return 0

    # -- full decode -----------------------------------------------------------

    def decode(self, double[:, ::1] prior, i32[::1] gamma0, i32[::1] idx0,
               i64[::1] frozen_sym, i32[::1] known_before,
               bint want_conditionals, bint want_candidates):
        self.reset()
        cdef int MN = gamma0.shape[0]
        cdef int N = self.N
        cdef int Q = self.Q
        cdef int M = self.M
        cdef int L = self.L
        cdef int npaths = 1
        self.hv[0] = self.build_initial(prior)
        self.hb[0] = 1
        self.pll[0] = 0.0
        self.pid[0] = 0
        conds = np.empty((MN, Q)) if want_conditionals else None
        cdef double[:, ::1] conds_mv
        cdef bint have_conds = want_conditionals
        if have_conds:
            conds_mv = conds
        cdef i64 next_id = 1
        cdef int t, p, g0, i1, qt, beta_t, km, side, leafe, v, contra
        cdef int C, K, c, j, pos, s, new_k
        cdef long fs
        cdef double ps
        cdef double* leafd
        for t in range(MN):
            g0 = gamma0[t]
            i1 = idx0[t] + 1
            qt = self.tb.q[g0]
            beta_t = (i1 + N - 1) >> 1
            km = known_before[t]
            for p in range(npaths):
                contra = self.walk_to(p, beta_t)
                v = self.hv[p]
                side = 0 if i1 % 2 == 1 else 1
                if side == 0:
                    leafe = self.v_left[v]
                    contra |= calc_left_c(self.tb, self.edata(self.v_par[v]),
                                          self.edata(self.v_right[v]),
                                          self.s_msg, 1, self.s_tmp)
                else:
                    leafe = self.v_right[v]
                    contra |= calc_right_c(self.tb, self.edata(self.v_par[v]),
                                           self.edata(self.v_left[v]),
                                           self.s_msg, 1, self.s_tmp)
                self.tensor_ops += 2
                leafd = self.edata(leafe)
                contra |= row_combine(self.s_msg, leafd, self.s_comb, NULL, Q)
                self.tensor_ops += 1
                row_marginal(self.tb, self.s_comb, g0, self.pmarg + <long> p * self.qmax)
                row_pinned(self.tb, leafd, km, self.pvals + <long> p * M)
                self.pside[p] = side
                self.pcontra[p] = contra
                if have_conds:
                    memcpy(&conds_mv[t, 0], self.s_comb, Q * sizeof(double))
            fs = frozen_sym[t]
            if fs >= 0:
                for p in range(npaths):
                    ps = self.pmarg[<long> p * self.qmax + fs]
                    if self.pcontra[p] or ps <= 0.0 or self.pll[p] == -INFINITY:
                        self.pll[p] = -INFINITY
                    else:
                        self.pll[p] += log(ps)
                    self.s_vals_from(p, g0, <int> fs)
                    self.write_leaf_pd(self.hv[p], self.pside[p],
                                       km | (1 << g0), self.s_vals)
            else:
                C = npaths * qt
                for p in range(npaths):
                    for s in range(qt):
                        ps = self.pmarg[<long> p * self.qmax + s]
                        self.cand_ps[p * qt + s] = 0.0 if self.pcontra[p] else ps
                        if self.pcontra[p] or ps <= 0.0 or self.pll[p] == -INFINITY:
                            self.cand_ll[p * qt + s] = -INFINITY
                        else:
                            self.cand_ll[p * qt + s] = self.pll[p] + log(ps)
                K = select_top(self.cand_ll, self.cand_ps, C, L,
                               self.sel_order, self.sel_keep)
                for p in range(npaths):
                    self.reused[p] = 0
                new_k = 0
                for j in range(K):
                    c = self.sel_keep[j]
                    pos = c // qt
                    s = c % qt
                    if not self.reused[pos]:
                        self.reused[pos] = 1
                        self.nhv[new_k] = self.hv[pos]
                        self.nhb[new_k] = self.hb[pos]
                    else:
                        self.fork_path(pos, new_k)
                    self.nll[new_k] = self.cand_ll[c]
                    self.nsym[new_k] = s
                    self.nparent[new_k] = pos
                    new_k += 1
                for p in range(npaths):
                    if not self.reused[p]:
                        self.drop_vertex(self.hv[p])
                for j in range(new_k):
                    pos = self.nparent[j]
                    self.s_vals_from(pos, g0, self.nsym[j])
                    self.write_leaf_pd(self.nhv[j], self.pside[pos],
                                       km | (1 << g0), self.s_vals)
                for j in range(new_k):
                    self.hv[j] = self.nhv[j]
                    self.hb[j] = self.nhb[j]
                    self.pll[j] = self.nll[j]
                    self.pid[j] = next_id
                    next_id += 1
                npaths = new_k
        # best path: max loglik, ties to the smaller path id
        cdef int best = 0
        for p in range(1, npaths):
            if (self.pll[p] > self.pll[best] or
                    (self.pll[p] == self.pll[best] and self.pid[p] < self.pid[best])):
                best = p
        failed = bool(self.pll[best] == -INFINITY)
        cands = None
        u_tmp = np.empty((N, M), dtype=np.int64)
        cdef i64[:, ::1] u_mv = u_tmp
        if want_candidates:
            order = sorted(range(npaths),
                           key=lambda pp: (-self.pll[pp], self.pid[pp]))
            cands = []
            for p in order:
                self.recover_ublock(p, u_mv)
                cands.append((int(self.pid[p]), float(self.pll[p]),
                              u_tmp.copy()))
        u_hat = np.empty((N, M), dtype=np.int64)
        cdef i64[:, ::1] uh = u_hat
        self.recover_ublock(best, uh)
        x_hat = np.empty((N, M), dtype=np.int64)
        cdef i64[:, ::1] xh = x_hat
        self.extract_block(best, xh)
        loglik = float(self.pll[best])
        for p in range(npaths):
            self.drop_vertex(self.hv[p])
        cdef long highwater = 0
        cdef int lev
        for lev in range(self.levels):
            highwater += self.lev_high[lev]
        counters = {
            "tensor_ops": int(self.tensor_ops),
            "forks": int(self.fork_count),
            "fork_touches": int(self.fork_count) * 5,
            "fork_touch_each": 5,
            "data_copies_at_fork": int(self.data_copies_at_fork),
            "pool_highwater": int(highwater),
            "vertex_highwater": int(self.v_high),
        }
        return x_hat, u_hat, loglik, failed, conds, cands, counters

    cdef void s_vals_from(self, int p, int g0, int sym) noexcept nogil:
        cdef int m
        for m in range(self.M):
            self.s_vals[m] = self.pvals[<long> p * self.M + m]
        self.s_vals[g0] = sym


# ---------------------------------------------------------------------------
# lazy-copy engine
# ---------------------------------------------------------------------------

cdef class LazyEngine:
    cdef _TableHolder th
    cdef Tables* tb
    cdef _Scratch mem
    cdef public int N, L
    cdef int n, Q, M, qmax, maxpaths, nkinds, shift
    cdef i64 tensor_ops
    cdef i64 fork_count
    cdef i64 handle_copies
    cdef i64 cow_copies
    cdef i64 cow_bytes

    # tensor kinds: 0 = prior; 1..n = P levels 2..n+1; n+1..2n = up-left
    # (levels 1..n); 2n+1..3n = up-right
    cdef double** kind_base
    cdef i32* kind_width     # doubles per slot
    cdef i32** kind_free
    cdef i32* kind_free_top
    cdef i32** kind_rc
    cdef int kind_cap
    # int kinds: decided symbols and reconstruction, width N*M
    cdef i64* int_base0
    cdef i64* int_base1
    cdef i32* int_rc0
    cdef i32* int_rc1
    cdef i32* int_free0
    cdef i32* int_free1
    cdef int int_free_top0
    cdef int int_free_top1

    cdef i32* th_tensor      # path x nkinds handles
    cdef i32* th_int         # path x 2
    cdef double* pll
    cdef i64* pid
    cdef i32* pcontra
    cdef double* pmarg
    cdef double* cand_ll
    cdef double* cand_ps
    cdef i32* sel_order
    cdef i32* sel_keep
    cdef i32* reused
    cdef i32* nslot
    cdef double* nll
    cdef i32* nsym
    cdef i32* nparent
    cdef i32* alive          # path slot -> active flag
    cdef i32* slots          # current path slots (ordered)
    cdef i32* nslots
    cdef i32* s_ivals
    cdef double* s_tmp
    cdef double* s_cond
    cdef double* s_carry
    cdef double* s_uniform   # N/2 * Q uniform rows (largest batch needed)
    cdef double* base_prior
    cdef i64* s_col

    def __init__(self, spec, convention, int N, int L):
        self.th = _TableHolder(spec, convention)
        self.tb = &self.th.tb
        self.mem = _Scratch()
        self.N = N
        self.n = bitlen(N) - 1
        self.Q = self.tb.Q
        self.M = self.tb.M
        self.L = L
        self.shift = convention.shift
        cdef int m, qmax = 0
        for m in range(self.M):
            if self.tb.q[m] > qmax:
                qmax = self.tb.q[m]
        self.qmax = qmax
        self.maxpaths = qmax * L + 4
        self.nkinds = 3 * self.n + 1
        self.kind_cap = self.maxpaths + 2
        cdef int K = self.nkinds
        self.kind_base = <double**> self.mem.i64buf(K)
        self.kind_width = self.mem.i32buf(K)
        self.kind_free = <i32**> self.mem.i64buf(K)
        self.kind_free_top = self.mem.i32buf(K)
        self.kind_rc = <i32**> self.mem.i64buf(K)
        cdef int kind, rows
        for kind in range(K):
            rows = self.kind_rows(kind)
            self.kind_width[kind] = rows * self.Q
            self.kind_base[kind] = self.mem.f64buf(<long> self.kind_cap * rows * self.Q)
            self.kind_free[kind] = self.mem.i32buf(self.kind_cap)
            self.kind_rc[kind] = self.mem.i32buf(self.kind_cap)
        self.int_base0 = self.mem.i64buf(<long> self.kind_cap * N * self.M)
        self.int_base1 = self.mem.i64buf(<long> self.kind_cap * N * self.M)
        self.int_rc0 = self.mem.i32buf(self.kind_cap)
        self.int_rc1 = self.mem.i32buf(self.kind_cap)
        self.int_free0 = self.mem.i32buf(self.kind_cap)
        self.int_free1 = self.mem.i32buf(self.kind_cap)
        cdef int mp = self.maxpaths
        self.th_tensor = self.mem.i32buf(<long> mp * K)
        self.th_int = self.mem.i32buf(<long> mp * 2)
        self.pll = self.mem.f64buf(mp)
        self.pid = self.mem.i64buf(mp)
        self.pcontra = self.mem.i32buf(mp)
        self.pmarg = self.mem.f64buf(<long> mp * qmax)
        self.cand_ll = self.mem.f64buf(<long> mp * qmax)
        self.cand_ps = self.mem.f64buf(<long> mp * qmax)
        self.sel_order = self.mem.i32buf(<long> mp * qmax)
        self.sel_keep = self.mem.i32buf(<long> mp * qmax)
        self.reused = self.mem.i32buf(mp)
        self.nslot = self.mem.i32buf(mp)
        self.nll = self.mem.f64buf(mp)
        self.nsym = self.mem.i32buf(mp)
        self.nparent = self.mem.i32buf(mp)
        self.alive = self.mem.i32buf(mp)
        self.slots = self.mem.i32buf(mp)
        self.nslots = self.mem.i32buf(mp)
        self.s_ivals = self.mem.i32buf(self.M)
        self.s_tmp = self.mem.f64buf(self.Q)
        self.s_cond = self.mem.f64buf(self.Q)
        self.s_carry = self.mem.f64buf(<long> (N // 2 if N > 1 else 1) * self.Q)
        cdef long urows = N // 2 if N >= 2 else 1
        self.s_uniform = self.mem.f64buf(urows * self.Q)
        cdef long j
        for j in range(urows * self.Q):
            self.s_uniform[j] = 1.0 / self.Q
        self.base_prior = self.mem.f64buf(<long> N * self.Q)
        self.s_col = self.mem.i64buf(N)

    cdef int kind_rows(self, int kind) noexcept nogil:
        if kind == 0:
            return self.N
        if kind <= self.n:                       # P level = kind + 1
            return self.N >> kind
        if kind <= 2 * self.n:                   # up-left level = kind - n
            return self.N >> (kind - self.n)
        return self.N >> (kind - 2 * self.n)     # up-right

    cdef void reset(self) noexcept nogil:
        cdef int kind, j
        for kind in range(self.nkinds):
            for j in range(self.kind_cap):
                self.kind_free[kind][j] = self.kind_cap - 1 - j
                self.kind_rc[kind][j] = 0
            self.kind_free_top[kind] = self.kind_cap
        for j in range(self.kind_cap):
            self.int_free0[j] = self.kind_cap - 1 - j
            self.int_free1[j] = self.kind_cap - 1 - j
            self.int_rc0[j] = 0
            self.int_rc1[j] = 0
        self.int_free_top0 = self.kind_cap
        self.int_free_top1 = self.kind_cap
        cdef int p
        for p in range(self.maxpaths):
            self.alive[p] = 0
        self.tensor_ops = 0
        self.fork_count = 0
        self.handle_copies = 0
        self.cow_copies = 0
        self.cow_bytes = 0

    cdef int kind_alloc(self, int kind) except -1:
        if self.kind_free_top[kind] == 0:
            raise MemoryError("lazy slab exhausted")
        self.kind_free_top[kind] -= 1
        cdef int slot = self.kind_free[kind][self.kind_free_top[kind]]
        self.kind_rc[kind][slot] = 1
        return slot

    cdef inline double* kind_ptr(self, int kind, int slot) noexcept nogil:
        return self.kind_base[kind] + <long> slot * self.kind_width[kind]

    cdef double* tensor_writable(self, int p, int kind) except NULL:
        cdef i32* h = self.th_tensor + <long> p * self.nkinds + kind
        cdef int old = h[0]
        cdef int slot
        if self.kind_rc[kind][old] == 1:
            return self.kind_ptr(kind, old)
        slot = self.kind_alloc(kind)
        memcpy(self.kind_ptr(kind, slot), self.kind_ptr(kind, old),
               <size_t> self.kind_width[kind] * sizeof(double))
        self.cow_copies += 1
        self.cow_bytes += <i64> self.kind_width[kind] * sizeof(double)
        self.kind_rc[kind][old] -= 1
        h[0] = slot
        return self.kind_ptr(kind, slot)

    cdef i64* int_writable(self, int p, int which) except NULL:
        cdef i32* h = self.th_int + <long> p * 2 + which
        cdef int old = h[0]
        cdef i32* rc = self.int_rc0 if which == 0 else self.int_rc1
        cdef i64* base = self.int_base0 if which == 0 else self.int_base1
        cdef int slot
        if rc[old] == 1:
            return base + <long> old * self.N * self.M
        slot = self.int_alloc(which)
        memcpy(base + <long> slot * self.N * self.M,
               base + <long> old * self.N * self.M,
               <size_t> self.N * self.M * sizeof(i64))
        self.cow_copies += 1
        self.cow_bytes += <i64> self.N * self.M * sizeof(i64)
        rc[old] -= 1
        h[0] = slot
        return base + <long> slot * self.N * self.M

    cdef int int_alloc(self, int which) except -1:
        cdef i32* fr = self.int_free0 if which == 0 else self.int_free1
        cdef i32* rc = self.int_rc0 if which == 0 else self.int_rc1
        cdef int slot
        if which == 0:
            if self.int_free_top0 == 0:
                raise MemoryError("lazy int slab exhausted")
            self.int_free_top0 -= 1
            slot = fr[self.int_free_top0]
        else:
            if self.int_free_top1 == 0:
                raise MemoryError("lazy int slab exhausted")
            self.int_free_top1 -= 1
            slot = fr[self.int_free_top1]
        rc[slot] = 1
        return slot

    cdef void int_release(self, int which, int slot) noexcept nogil:
        cdef i32* rc = self.int_rc0 if which == 0 else self.int_rc1
        cdef i32* fr = self.int_free0 if which == 0 else self.int_free1
        rc[slot] -= 1
        if rc[slot] == 0:
            if which == 0:
                fr[self.int_free_top0] = slot
                self.int_free_top0 += 1
            else:
                fr[self.int_free_top1] = slot
                self.int_free_top1 += 1

    cdef void kind_release(self, int kind, int slot) noexcept nogil:
        self.kind_rc[kind][slot] -= 1
        if self.kind_rc[kind][slot] == 0:
            self.kind_free[kind][self.kind_free_top[kind]] = slot
            self.kind_free_top[kind] += 1

    cdef int init_path(self, double[:, ::1] prior) except -1:
        cdef int p = 0
        cdef int kind, slot
        for kind in range(self.nkinds):
            slot = self.kind_alloc(kind)
            self.th_tensor[<long> p * self.nkinds + kind] = slot
        memcpy(self.kind_ptr(0, self.th_tensor[0]), &prior[0, 0],
               <size_t> self.N * self.Q * sizeof(double))
        memcpy(self.base_prior, &prior[0, 0],
               <size_t> self.N * self.Q * sizeof(double))
        cdef int s0 = self.int_alloc(0)
        cdef int s1 = self.int_alloc(1)
        self.th_int[0] = s0
        self.th_int[1] = s1
        cdef long j
        for j in range(<long> self.N * self.M):
            self.int_base0[<long> s0 * self.N * self.M + j] = -1
            self.int_base1[<long> s1 * self.N * self.M + j] = 0
        self.alive[p] = 1
        self.pll[p] = 0.0
        self.pid[p] = 0
        return p

    cdef int fork_path(self, int src) except -1:
        cdef int dst = -1
        cdef int p
        for p in range(self.maxpaths):
            if not self.alive[p]:
                dst = p
                break
        if dst < 0:
            raise MemoryError("path slots exhausted")
        cdef int kind, h
        for kind in range(self.nkinds):
            h = self.th_tensor[<long> src * self.nkinds + kind]
            self.kind_rc[kind][h] += 1
            self.th_tensor[<long> dst * self.nkinds + kind] = h
        cdef i32* rc
        for kind in range(2):
            h = self.th_int[<long> src * 2 + kind]
            rc = self.int_rc0 if kind == 0 else self.int_rc1
            rc[h] += 1
            self.th_int[<long> dst * 2 + kind] = h
        self.handle_copies += self.nkinds + 2
        self.fork_count += 1
        self.alive[dst] = 1
        self.pll[dst] = self.pll[src]
        self.pcontra[dst] = self.pcontra[src]
        return dst

    cdef void release_path(self, int p) noexcept nogil:
        cdef int kind
        for kind in range(self.nkinds):
            self.kind_release(kind, self.th_tensor[<long> p * self.nkinds + kind])
        self.int_release(0, self.th_int[<long> p * 2])
        self.int_release(1, self.th_int[<long> p * 2 + 1])
        self.alive[p] = 0

    cdef inline double* tensor_ro(self, int p, int kind) noexcept nogil:
        return self.kind_ptr(kind, self.th_tensor[<long> p * self.nkinds + kind])

    cdef int recompute_down(self, int p, int i1) except -2:
        """Classical per-phase refresh of the down-message path arrays."""
        cdef int start_lev, lev, a, b, cnt, contra = 0
        cdef double* parent
        cdef double* out
        if i1 == 1:
            start_lev = 2
        else:
            a = (i1 - 1) & -(i1 - 1)
            start_lev = self.n + 1 - (bitlen(a) - 1)
        for lev in range(start_lev, self.n + 2):
            cnt = self.N >> (lev - 1)
            parent = (self.tensor_ro(p, lev - 2) if lev > 2
                      else self.tensor_ro(p, 0))
            out = self.tensor_writable(p, lev - 1)
            b = (i1 + cnt - 1) // cnt
            if b % 2 == 1:
                contra |= calc_left_c(self.tb, parent, self.s_uniform, out,
                                      cnt, self.s_tmp)
            else:
                contra |= calc_right_c(self.tb, parent,
                                       self.tensor_ro(p, self.n + lev - 1),
                                       out, cnt, self.s_tmp)
            self.tensor_ops += 2 * cnt
        return contra

    cdef int propagate_up(self, int p, int i1, int g0, int sym) except -1:
        cdef int lev = self.n + 1
        cdef int cnt, b, kind, carry_rows
        cdef double* dst
        self.s_vals_one(g0, sym)
        row_pd(self.tb, 1 << g0, self.s_ivals, self.s_carry)
        self.tensor_ops += 1
        carry_rows = 1
        while lev >= 2:
            cnt = self.N >> (lev - 1)
            b = (i1 + cnt - 1) // cnt
            if b % 2 == 1:
                kind = self.n + (lev - 1)           # up-left at level lev-1
            else:
                kind = 2 * self.n + (lev - 1)       # up-right
            dst = self.tensor_writable(p, kind)
            memcpy(dst, self.s_carry, <size_t> carry_rows * self.Q * sizeof(double))
            if b % 2 == 1 or lev == 2:
                break
            calc_parent_c(self.tb, self.tensor_ro(p, self.n + lev - 1),
                          self.tensor_ro(p, 2 * self.n + lev - 1),
                          self.s_carry, carry_rows)
            self.tensor_ops += 2 * carry_rows
            carry_rows *= 2
            lev -= 1
        return 0

    cdef void s_vals_one(self, int g0, int sym) noexcept nogil:
        cdef int m
        for m in range(self.M):
            self.s_ivals[m] = -1
        self.s_ivals[g0] = sym

    cdef int finish_pass(self, int p, int g0) except -1:
        """End of a source sweep: reconstruct the finished component and
        condition the prior for the next pass."""
        cdef i64* D = self.int_writable(p, 0)
        cdef i64* xh = self.int_writable(p, 1)
        cdef int i, half, off, j, q
        q = self.tb.q[g0]
        for i in range(self.N):
            self.s_col[i] = D[<long> i * self.M + g0]
        # invert the single-component butterfly (bottom-up)
        half = 1
        while half < self.N:
            off = 0
            while off < self.N:
                for j in range(half):
                    self.s_col[off + j] = (self.s_col[off + j] +
                                           self.s_col[off + half + j]) % q
                    self.s_col[off + half + j] = (self.s_col[off + half + j] +
                                                  self.shift) % q
                off += 2 * half
            half *= 2
        for i in range(self.N):
            xh[<long> i * self.M + g0] = self.s_col[i]
        if g0 + 1 >= self.M:
            return 0
        cdef double* prior = self.tensor_writable(p, 0)
        cdef int k, c, ok
        cdef double ssum
        cdef int dead
        for i in range(self.N):
            ssum = 0.0
            for k in range(self.Q):
                ok = 1
                for c in range(g0 + 1):
                    if self.tb.comp[c * self.Q + k] != xh[<long> i * self.M + c]:
                        ok = 0
                        break
                prior[<long> i * self.Q + k] = self.base_prior[<long> i * self.Q + k] if ok else 0.0
                ssum += prior[<long> i * self.Q + k]
            if ssum == 0.0:
                for k in range(self.Q):
                    prior[<long> i * self.Q + k] = 1.0 / self.Q
                self.pll[p] = -INFINITY
                self.pcontra[p] = 1
            else:
                for k in range(self.Q):
                    prior[<long> i * self.Q + k] /= ssum
        self.tensor_ops += self.N
        return 0

    def decode(self, double[:, ::1] prior, i32[::1] gamma0, i32[::1] idx0,
               i64[::1] frozen_sym, bint want_candidates):
        self.reset()
        cdef int MN = gamma0.shape[0]
        cdef int N = self.N
        cdef int Q = self.Q
        cdef int M = self.M
        cdef int L = self.L
        cdef int npaths = 1
        self.slots[0] = self.init_path(prior)
        self.pcontra[self.slots[0]] = 0
        cdef i64 next_id = 1
        cdef int t, j, p, slot, g0, i1, qt, contra
        cdef int C, K, c, pos, s, new_k
        cdef long fs
        cdef double ps
        for t in range(MN):
            g0 = gamma0[t]
            i1 = idx0[t] + 1
            qt = self.tb.q[g0]
            for j in range(npaths):
                slot = self.slots[j]
                contra = self.recompute_down(slot, i1)
                contra |= row_combine(self.tensor_ro(slot, self.n), self.s_uniform,
                                      self.s_cond, NULL, Q)
                self.tensor_ops += 1
                self.pcontra[slot] |= contra
                row_marginal(self.tb, self.s_cond, g0,
                             self.pmarg + <long> slot * self.qmax)
            fs = frozen_sym[t]
            if fs >= 0:
                for j in range(npaths):
                    slot = self.slots[j]
                    ps = self.pmarg[<long> slot * self.qmax + fs]
                    if self.pcontra[slot] or ps <= 0.0 or self.pll[slot] == -INFINITY:
                        self.pll[slot] = -INFINITY
                    else:
                        self.pll[slot] += log(ps)
                    self.settle(slot, t, g0, i1, <int> fs)
                # per-step contradiction flags are step local
                for j in range(npaths):
                    self.pcontra[self.slots[j]] = 0
            else:
                C = npaths * qt
                for j in range(npaths):
                    slot = self.slots[j]
                    for s in range(qt):
                        ps = self.pmarg[<long> slot * self.qmax + s]
                        self.cand_ps[j * qt + s] = 0.0 if self.pcontra[slot] else ps
                        if self.pcontra[slot] or ps <= 0.0 or self.pll[slot] == -INFINITY:
                            self.cand_ll[j * qt + s] = -INFINITY
                        else:
                            self.cand_ll[j * qt + s] = self.pll[slot] + log(ps)
                K = select_top(self.cand_ll, self.cand_ps, C, L,
                               self.sel_order, self.sel_keep)
                for j in range(npaths):
                    self.reused[j] = 0
                new_k = 0
                for j in range(K):
                    c = self.sel_keep[j]
                    pos = c // qt
                    s = c % qt
                    if not self.reused[pos]:
                        self.reused[pos] = 1
                        slot = self.slots[pos]
                    else:
                        slot = self.fork_path(self.slots[pos])
                    self.nslot[new_k] = slot
                    self.nll[new_k] = self.cand_ll[c]
                    self.nsym[new_k] = s
                    new_k += 1
                for j in range(npaths):
                    if not self.reused[j]:
                        self.release_path(self.slots[j])
                for j in range(new_k):
                    slot = self.nslot[j]
                    self.pll[slot] = self.nll[j]
                    self.pid[slot] = next_id
                    next_id += 1
                    self.settle(slot, t, g0, i1, self.nsym[j])
                    self.pcontra[slot] = 0
                    self.nslots[j] = slot
                for j in range(new_k):
                    self.slots[j] = self.nslots[j]
                npaths = new_k
        cdef int best = self.slots[0]
        for j in range(1, npaths):
            slot = self.slots[j]
            if (self.pll[slot] > self.pll[best] or
                    (self.pll[slot] == self.pll[best] and self.pid[slot] < self.pid[best])):
                best = slot
        failed = bool(self.pll[best] == -INFINITY)
        cands = None
        if want_candidates:
            order = sorted([self.slots[j] for j in range(npaths)],
                           key=lambda ss: (-self.pll[ss], self.pid[ss]))
            cands = []
            for slot in order:
                cands.append((int(self.pid[slot]), float(self.pll[slot]),
                              self.read_int(slot, 0)))
        u_hat = self.read_int(best, 0)
        x_hat = self.read_int(best, 1)
        loglik = float(self.pll[best])
        for j in range(npaths):
            self.release_path(self.slots[j])
        counters = {
            "tensor_ops": int(self.tensor_ops),
            "forks": int(self.fork_count),
            "handle_copies": ([self.nkinds + 2] * int(self.fork_count)),
            "fork_touches": int(self.handle_copies),
            "cow_copies": int(self.cow_copies),
            "cow_bytes": int(self.cow_bytes),
            "pool_highwater": 0,
        }
        return x_hat, u_hat, loglik, failed, None, cands, counters

    cdef int settle(self, int slot, int t, int g0, int i1, int sym) except -1:
        cdef i64* D = self.int_writable(slot, 0)
        D[<long> (i1 - 1) * self.M + g0] = sym
        self.propagate_up(slot, i1, g0, sym)
        if i1 == self.N:
            self.finish_pass(slot, g0)
        return 0

    cdef object read_int(self, int slot, int which):
        out = np.empty((self.N, self.M), dtype=np.int64)
        cdef i64[:, ::1] mv = out
        cdef i64* base = self.int_base0 if which == 0 else self.int_base1
        cdef i64* src = base + <long> self.th_int[<long> slot * 2 + which] * self.N * self.M
        cdef int i, m
        for i in range(self.N):
            for m in range(self.M):
                mv[i, m] = src[<long> i * self.M + m]
        return out


# ---------------------------------------------------------------------------
# python entry points (engine caching + plan building)
# ---------------------------------------------------------------------------

_ENGINE_CACHE = {}
_CACHE_LIMIT = 6


def _get_engine(cls, spec, convention, N, L):
    key = (cls.__name__, tuple(spec.q), convention.permutation, N, L)
    eng = _ENGINE_CACHE.get(key)
    if eng is None:
        if len(_ENGINE_CACHE) >= _CACHE_LIMIT:
            _ENGINE_CACHE.clear()
        eng = cls(spec, convention, N, L)
        _ENGINE_CACHE[key] = eng
    return eng


def _plan(spec, chain, frozen, codeword, forced_u):
    from .chain import step_arrays
    from .sc import frozen_value_array

    gamma0, idx0 = step_arrays(chain)
    vals = frozen_value_array(chain, frozen, codeword)
    if forced_u is not None:
        fu = np.asarray(forced_u)
        for t in range(len(chain)):
            vals[t] = fu[idx0[t], gamma0[t]]
    MN = len(chain)
    known_before = np.zeros(MN, dtype=np.int32)
    copymask = np.zeros(chain.N, dtype=np.int32)
    for t in range(MN):
        known_before[t] = copymask[idx0[t]]
        copymask[idx0[t]] |= 1 << gamma0[t]
    return (np.ascontiguousarray(gamma0), np.ascontiguousarray(idx0),
            np.ascontiguousarray(vals), known_before)


def graph_decode_entry(spec, prior, chain, frozen, codeword, L, convention,
                       want_conditionals, forced_u, want_candidates):
    gamma0, idx0, vals, known = _plan(spec, chain, frozen, codeword, forced_u)
    eng = _get_engine(GraphEngine, spec, convention, chain.N, L)
    return eng.decode(prior, gamma0, idx0, vals, known,
                      bool(want_conditionals), bool(want_candidates))


def lazy_decode_entry(spec, prior, chain, frozen, codeword, L, convention,
                      want_candidates):
    from .errors import UnsupportedChainError

    if not chain.is_corner():
        raise UnsupportedChainError(
            "the per-level lazy-copy layout needs the single-sweep order of "
            "a corner chain; use the graph engine for general chains")
    gamma0, idx0, vals, _ = _plan(spec, chain, frozen, codeword, None)
    eng = _get_engine(LazyEngine, spec, convention, chain.N, L)
    return eng.decode(prior, gamma0, idx0, vals, bool(want_candidates))
