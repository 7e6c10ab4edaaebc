"""Batched tensor kernels shared by the decode engines (pure-Python backend).

Operates on (batch, Q) float64 slabs; one row is one joint tensor. Every
kernel renormalizes its output rows; all-zero rows (incompatible evidence)
become uniform and raise the sticky ``contradiction`` flag, which callers
sample per decoding step and map to a path log-likelihood of -inf.
"""

import numpy as np

from .tensor import _tables


def sequential_row_sums(C):
    """Row sums accumulated left to right (bit-compatible with a C loop)."""
    s = C[:, 0].copy()
    for k in range(1, C.shape[1]):
        s += C[:, k]
    return s


class BatchKernels:
    def __init__(self, spec, convention):
        self.spec = spec
        self.Q = spec.size
        sub, add, comp = _tables(spec.q)
        self.sub = sub
        self.add = add
        self.comp = comp
        shift = convention.shift
        if shift:
            pull = np.zeros(self.Q, dtype=np.int64)
            for m in range(spec.M):
                place = 1
                for qv in spec.q[m + 1:]:
                    place *= qv
                pull += place * ((comp[m] + shift) % spec.q[m])
            # pull[r] = flat(pi(r)): reindexes a second-parent-slot message as
            # evidence on the child; push is its inverse permutation.
            self.pull = pull
            self.push = np.argsort(pull)
        else:
            self.pull = None
            self.push = None
        self.tensor_ops = 0
        self.contradiction = False

    def _norm_rows(self, C):
        s = sequential_row_sums(C)[:, None]
        bad = s[:, 0] == 0.0
        if bad.any():
            C[bad] = 1.0 / self.Q
            s[bad] = 1.0
            self.contradiction = True
        C /= s
        return C

    def _gather_dot(self, A, B, tab):
        # accumulate the convolution sum in ascending symbol order (numpy
        # reductions use partial sums above length 8, which would drift from
        # the compiled core by ulps; exact ties in unpolarized marginals are
        # structural, so decisions must not depend on summation order)
        out = A[:, tab[:, 0]] * B[:, 0:1]
        for i in range(1, self.Q):
            out += A[:, tab[:, i]] * B[:, i:i + 1]
        return out

    def conv_rows(self, A, B):
        """Row-wise distribution of the modular sum."""
        self.tensor_ops += A.shape[0]
        return self._norm_rows(self._gather_dot(A, B, self.sub))

    def dconv_rows(self, A, B):
        """Row-wise distribution of the modular difference A - B."""
        self.tensor_ops += A.shape[0]
        return self._norm_rows(self._gather_dot(A, B, self.add))

    def combine_rows(self, A, B):
        """Row-wise normalized elementwise product."""
        self.tensor_ops += A.shape[0]
        return self._norm_rows(A * B)

    def _pulled(self, rows):
        return rows if self.pull is None else rows[:, self.pull]

    def calc_left_rows(self, parent, right):
        """Left-child messages from a parent edge and the right edge."""
        l = right.shape[0]
        tmp = self.combine_rows(self._pulled(parent[l:]), right)
        return self.dconv_rows(parent[:l], tmp)

    def calc_right_rows(self, parent, left):
        """Right-child messages from a parent edge and the left edge."""
        l = left.shape[0]
        tmp = self.dconv_rows(parent[:l], left)
        return self.combine_rows(self._pulled(parent[l:]), tmp)

    def calc_parent_rows(self, left, right, out):
        """Both parent slot groups from the two child edges."""
        l = left.shape[0]
        out[:l] = self.conv_rows(left, right)
        out[l:] = right if self.push is None else right[:, self.push]
        self.tensor_ops += l  # the copy into the second slot group

    def marginal(self, entries, component):
        q = self.spec.q[component - 1]
        return np.bincount(self.comp[component - 1], weights=entries, minlength=q)
