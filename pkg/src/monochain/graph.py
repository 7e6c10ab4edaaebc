"""The computational graph: shared vertex/edge records plus a head handle.

One decoder state is a ``GraphHead`` plus everything reachable from it. The
structure is linked through handles only: a vertex knows its three adjacent
edges, an edge knows the vertex it currently points away from
(``from_vertex``). All edges point toward the head, so the head alone
captures the full decoder state, heads can be forked in O(1), and records can
be shared between forked decoders with copy-on-write stepping.

Indexing follows heap numbering on the underlying binary tree: vertex 1 is
the root, vertex b has children 2b and 2b+1; edge b joins vertex b//2 to
vertex b; edges N..2N-1 are the leaf edges (copy i sits at edge i+N-1). A
level-j edge carries N/2^(j-1) probability tensors, stored as a (count, Q)
float64 block from a per-level buffer pool.

Reference counting: an edge's ``usage`` is the number of vertex slots
referencing it from its non-``from`` side; a vertex's ``usage`` is the number
of edges pointing away from it plus resident heads. Counted references always
point away from heads, so the counted graph is acyclic and a prune/supersede
cascade reclaims exactly the records no head can reach.
"""

import numpy as np

from .batchops import BatchKernels
from .errors import CapacityError, DomainError, InternalStateError
from .transform import TransformConvention

LEFT, RIGHT, UP = 0, 1, 2


class EdgeRecord:
    __slots__ = ("data", "from_vertex", "level", "usage", "index")

    def __init__(self):
        self.data = None
        self.from_vertex = None
        self.level = 0
        self.usage = 0
        self.index = 0


class VertexRecord:
    __slots__ = ("parent_edge", "left_edge", "right_edge", "beta", "usage")

    def __init__(self):
        self.parent_edge = None
        self.left_edge = None
        self.right_edge = None
        self.beta = 0
        self.usage = 0

    def slots(self):
        return (self.parent_edge, self.left_edge, self.right_edge)


class GraphHead:
    """Handle to one logical decoder: current vertex record and its index."""

    __slots__ = ("vertex", "beta")

    def __init__(self, vertex, beta):
        self.vertex = vertex
        self.beta = beta


class BufferPool:
    """Preallocated per-level edge buffers and vertex records.

    Capacity at level j is list_size * (edges at level j) plus slack for the
    transient fork candidates; exceeding it is a hard error, not a growth
    trigger, because a compliant decode never needs more.
    """

    def __init__(self, N, Q, list_size, slack):
        self.N = N
        self.levels = N.bit_length()  # levels 1..n+1
        self.caps = []
        self.free = []
        self.in_use = []
        self.highwater = []
        for lev in range(self.levels):
            cnt = N >> lev
            cap = list_size * (1 << lev) + slack
            self.caps.append(cap)
            self.free.append([np.empty((cnt, Q)) for _ in range(cap)])
            self.in_use.append(0)
            self.highwater.append(0)
        vcap = list_size * (N - 1) + slack
        self.vfree = [VertexRecord() for _ in range(vcap)]
        self.vcap = vcap
        self.v_in_use = 0
        self.v_highwater = 0
        self.efree = [EdgeRecord() for _ in range(sum(self.caps))]

    def alloc_buffer(self, lev):
        if not self.free[lev]:
            raise CapacityError(f"edge buffer pool exhausted at level {lev + 1}")
        self.in_use[lev] += 1
        if self.in_use[lev] > self.highwater[lev]:
            self.highwater[lev] = self.in_use[lev]
        return self.free[lev].pop()

    def release_buffer(self, lev, buf):
        self.in_use[lev] -= 1
        self.free[lev].append(buf)

    def alloc_edge(self, level):
        e = self.efree.pop() if self.efree else EdgeRecord()
        e.data = self.alloc_buffer(level - 1)
        e.level = level
        e.from_vertex = None
        e.usage = 0
        return e

    def release_edge_record(self, e):
        self.release_buffer(e.level - 1, e.data)
        e.data = None
        e.from_vertex = None
        self.efree.append(e)

    def alloc_vertex(self):
        if not self.vfree:
            raise CapacityError("vertex pool exhausted")
        self.v_in_use += 1
        if self.v_in_use > self.v_highwater:
            self.v_highwater = self.v_in_use
        return self.vfree.pop()

    def release_vertex_record(self, v):
        v.parent_edge = v.left_edge = v.right_edge = None
        self.v_in_use -= 1
        self.vfree.append(v)

    @property
    def total_highwater(self):
        return sum(self.highwater)


class CompGraph:
    """Record store, kernels and instrumentation for one decoder family.

    Create with ``init_graph``. The ``cow`` flag selects copy-on-write
    stepping (list decoding) versus in-place stepping (single decoder).
    """

    def __init__(self, spec, N, list_size=1, convention=TransformConvention(), cow=False):
        if N < 2 or N & (N - 1):
            raise DomainError(f"N must be a power of two >= 2, got {N}")
        self.spec = spec
        self.N = N
        self.n = N.bit_length() - 1
        self.Q = spec.size
        self.cow = cow
        self.convention = convention
        self.k = BatchKernels(spec, convention)
        self.comp = self.k.comp
        self.pool = BufferPool(N, self.Q, list_size, slack=(max(spec.q) + 2) * list_size + 4)
        # instrumentation
        self.edge_updates = {}
        self.fork_touches = []
        self.fork_data_copies = 0

    # -- kernels (delegated to the shared batch ops) -----------------------

    @property
    def tensor_ops(self):
        return self.k.tensor_ops

    @property
    def contradiction(self):
        return self.k.contradiction

    @contradiction.setter
    def contradiction(self, value):
        self.k.contradiction = value

    def conv_rows(self, A, B):
        return self.k.conv_rows(A, B)

    def dconv_rows(self, A, B):
        return self.k.dconv_rows(A, B)

    def combine_rows(self, A, B):
        return self.k.combine_rows(A, B)

    def calc_left_rows(self, parent, right):
        return self.k.calc_left_rows(parent, right)

    def calc_right_rows(self, parent, left):
        return self.k.calc_right_rows(parent, left)

    def calc_parent_rows(self, left, right, out):
        self.k.calc_parent_rows(left, right, out)

    def _count_update(self, index):
        self.edge_updates[index] = self.edge_updates.get(index, 0) + 1

    # -- construction ------------------------------------------------------

    def build_initial(self, prior):
        """Wire the full graph: root edge holds the prior, everything else
        uniform, head at vertex 1."""
        N, Q = self.N, self.Q
        prior = np.asarray(prior, dtype=np.float64)
        if prior.shape != (N, Q):
            raise DomainError(f"prior must be ({N}, {Q})")
        edges = [None] * (2 * N)
        for b in range(1, 2 * N):
            level = b.bit_length()
            e = self.pool.alloc_edge(level)
            e.index = b
            e.usage = 1
            edges[b] = e
        edges[1].data[:] = prior
        for b in range(2, 2 * N):
            edges[b].data[:] = 1.0 / Q
        vertices = [None] * N
        for b in range(1, N):
            v = self.pool.alloc_vertex()
            v.beta = b
            v.parent_edge = edges[b]
            v.left_edge = edges[2 * b]
            v.right_edge = edges[2 * b + 1]
            v.usage = 1
            vertices[b] = v
        for b in range(2, N):
            edges[b].from_vertex = vertices[b]
        head = GraphHead(vertices[1], 1)
        return head

    # -- traversal ---------------------------------------------------------

    def get_path(self, head, target):
        """Vertices strictly after the head along the tree path to target:
        up to the lowest common ancestor, then down. Empty if already there."""
        if not 1 <= target <= self.N - 1:
            raise DomainError(f"target vertex {target} out of range")
        a, b = head.beta, target
        ups, downs = [], []
        while a != b:
            if a > b:
                a //= 2
                ups.append(a)
            else:
                downs.append(b)
                b //= 2
        downs.reverse()
        return ups + downs

    def _crossing(self, v, beta_from, beta_to):
        if beta_to == 2 * beta_from:
            return v.left_edge, LEFT
        if beta_to == 2 * beta_from + 1:
            return v.right_edge, RIGHT
        if beta_to == beta_from // 2 and beta_from > 1:
            return v.parent_edge, UP
        return None, None

    def _compute_step(self, v, kind, out):
        """Write the crossed edge's new tensors into ``out``."""
        if kind == LEFT:
            out[:] = self.calc_left_rows(v.parent_edge.data, v.right_edge.data)
        elif kind == RIGHT:
            out[:] = self.calc_right_rows(v.parent_edge.data, v.left_edge.data)
        else:
            self.calc_parent_rows(v.left_edge.data, v.right_edge.data, out)

    def step_to(self, head, beta):
        """In-place step (single-decoder mode): update the crossed edge,
        reorient it, move the head. Non-adjacent targets are a no-op."""
        v = head.vertex
        edge, kind = self._crossing(v, head.beta, beta)
        if edge is None:
            return
        self._compute_step(v, kind, edge.data)
        self._count_update(edge.index)
        far = edge.from_vertex
        # v gains the from-reference and loses the head; far the reverse:
        # usage counts are unchanged on both.
        edge.from_vertex = v
        head.vertex = far
        head.beta = beta

    def step_to_cow(self, head, beta):
        """Copy-on-write step: shared records along the crossing are replaced
        by fresh ones; records whose usage drops to zero return to the pool.
        Falls back to the in-place step when the crossed pair is private."""
        v = head.vertex
        edge, kind = self._crossing(v, head.beta, beta)
        if edge is None:
            return
        far = edge.from_vertex
        if edge.usage == 1 and far.usage == 1:
            self.step_to(head, beta)
            return
        new_edge = self.pool.alloc_edge(edge.level)
        new_edge.index = edge.index
        far2 = self.pool.alloc_vertex()
        far2.beta = far.beta
        far2.parent_edge = far.parent_edge
        far2.left_edge = far.left_edge
        far2.right_edge = far.right_edge
        if kind == LEFT:
            far2.parent_edge = new_edge
        elif kind == RIGHT:
            far2.parent_edge = new_edge
        else:
            if head.beta % 2 == 0:
                far2.left_edge = new_edge
            else:
                far2.right_edge = new_edge
        for e2 in far2.slots():
            if e2 is not new_edge:
                e2.usage += 1
        self._compute_step(v, kind, new_edge.data)
        self._count_update(new_edge.index)
        new_edge.from_vertex = v
        v.usage += 1
        new_edge.usage = 1
        if kind == LEFT:
            v.left_edge = new_edge
        elif kind == RIGHT:
            v.right_edge = new_edge
        else:
            v.parent_edge = new_edge
        self._release_edge(edge)
        far2.usage = 1  # incoming head
        v.usage -= 1  # departing head; stays >= 1 via new_edge.from_vertex
        head.vertex = far2
        head.beta = beta

    def write_leaf(self, head, side, entries):
        """Replace one leaf edge's single tensor (partial decision write).
        Copy-on-write under sharing."""
        v = head.vertex
        edge = v.left_edge if side == LEFT else v.right_edge
        if not self.cow or edge.usage == 1:
            edge.data[0] = entries
        else:
            new_edge = self.pool.alloc_edge(edge.level)
            new_edge.index = edge.index
            new_edge.data[0] = entries
            new_edge.usage = 1
            if side == LEFT:
                v.left_edge = new_edge
            else:
                v.right_edge = new_edge
            self._release_edge(edge)
            edge = new_edge
        self.k.tensor_ops += 1  # partial-decision materialization
        self._count_update(edge.index)

    def write_root(self, head, computed):
        """Final calcParent at vertex 1 (result extraction)."""
        if head.beta != 1:
            raise InternalStateError("root write requires the head at vertex 1")
        v = head.vertex
        edge = v.parent_edge
        if not self.cow or edge.usage == 1:
            self.calc_parent_rows(v.left_edge.data, v.right_edge.data, edge.data)
            self._count_update(edge.index)
            return edge.data
        new_edge = self.pool.alloc_edge(edge.level)
        new_edge.index = edge.index
        self.calc_parent_rows(v.left_edge.data, v.right_edge.data, new_edge.data)
        self._count_update(new_edge.index)
        new_edge.usage = 1
        v.parent_edge = new_edge
        self._release_edge(edge)
        return new_edge.data

    # -- forking and reclamation -------------------------------------------

    def fork(self, head):
        """Clone the head vertex; the new head shares all other structure.
        Touches a constant number of records and copies no tensor data."""
        v = head.vertex
        v2 = self.pool.alloc_vertex()
        v2.beta = v.beta
        v2.parent_edge = v.parent_edge
        v2.left_edge = v.left_edge
        v2.right_edge = v.right_edge
        v.parent_edge.usage += 1
        v.left_edge.usage += 1
        v.right_edge.usage += 1
        v2.usage = 1
        self.fork_touches.append(5)  # source vertex, clone, three edge counters
        return GraphHead(v2, head.beta)

    def release_head(self, head):
        """Drop one decoder; exclusively-owned records cascade to the pool."""
        v = head.vertex
        head.vertex = None
        self._release_vertex(v)

    def _release_edge(self, e):
        e.usage -= 1
        if e.usage == 0:
            w = e.from_vertex
            self.pool.release_edge_record(e)
            if w is not None:
                self._release_vertex(w)

    def _release_vertex(self, w):
        w.usage -= 1
        if w.usage == 0:
            for c in w.slots():
                if c.from_vertex is not w:
                    self._release_edge(c)
            self.pool.release_vertex_record(w)

    # -- whole-state traversal ----------------------------------------------

    def traverse_all(self, head):
        """Yield every vertex and edge of the head's logical graph once."""
        seen_v, seen_e = set(), set()
        vertices, edges = [], []
        stack = [head.vertex]
        seen_v.add(id(head.vertex))
        while stack:
            v = stack.pop()
            vertices.append(v)
            for e in v.slots():
                if id(e) in seen_e:
                    continue
                seen_e.add(id(e))
                edges.append(e)
                w = e.from_vertex
                if w is not None and id(w) not in seen_v and w is not v:
                    seen_v.add(id(w))
                    stack.append(w)
        return vertices, edges

    def check_orientation(self, head):
        """Verify the orientation invariant: every non-head vertex has exactly
        one adjacent edge pointing away from it, the head has none, and the
        traversal reaches the full graph."""
        vertices, edges = self.traverse_all(head)
        if len(vertices) != self.N - 1 or len(edges) != 2 * self.N - 1:
            raise InternalStateError(
                f"reached {len(vertices)} vertices / {len(edges)} edges, "
                f"expected {self.N - 1} / {2 * self.N - 1}"
            )
        for v in vertices:
            away = sum(1 for e in v.slots() if e.from_vertex is v)
            if v is head.vertex:
                if away != 0:
                    raise InternalStateError("head vertex has an outgoing edge")
            elif away != 1:
                raise InternalStateError(
                    f"vertex {v.beta} has {away} outgoing edges, expected 1"
                )
        return True
