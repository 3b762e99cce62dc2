"""Degree-class decomposition of a growing graph.

Only degrees matter to the model, so vertices are tracked through the class
they belong to.  The index keeps

* ``counts[k]``: N(k), the number of vertices of degree k;
* a Fenwick tree over degree values holding N(k) * k^alpha, giving prefix
  weights D(k) and the inverse lookup in O(log max_degree);
* the total weight D, the maximum degree M and L = N(M);
* a registry of vertex ids per class with O(1) moves between classes.

Storage is indexed by raw degree value and grows geometrically.
"""

from __future__ import annotations

import io

import numpy as np

from . import _kernels as K


class IndexStateError(LookupError):
    pass


class DuplicateVertex(IndexStateError):
    pass


class UnknownVertex(IndexStateError):
    pass


class EmptyClass(IndexStateError):
    pass


class WeightOutOfRange(IndexStateError):
    pass


def _grown(a: np.ndarray, size: int, fill=0) -> np.ndarray:
    out = np.full(size, fill, dtype=a.dtype)
    out[: len(a)] = a
    return out


class DegreeClassIndex:
    def __init__(self, alpha: float, degree_capacity: int = 64, vertex_capacity: int = 64):
        self.alpha = float(alpha)
        cap = max(2, int(degree_capacity))
        self.tree = np.zeros(cap + 1)
        self.counts = np.zeros(cap + 2, dtype=np.int64)
        self.start = np.zeros(cap + 2, dtype=np.int64)
        self.powc = self._powers(cap)
        vcap = max(2, int(vertex_capacity))
        self.order = np.zeros(vcap, dtype=np.int64)
        self.pos = np.zeros(vcap, dtype=np.int64)
        self.deg = np.zeros(vcap, dtype=np.int64)
        self.fsc = np.zeros(1)
        self.isc = np.zeros(K.N_ISC, dtype=np.int64)

    def _powers(self, cap: int) -> np.ndarray:
        k = np.arange(cap + 2, dtype=np.float64)
        return k ** self.alpha

    # -- capacity --------------------------------------------------------

    @property
    def degree_capacity(self) -> int:
        return len(self.tree) - 1

    def ensure_degree_capacity(self, k: int) -> None:
        cap = self.degree_capacity
        if k <= cap:
            return
        while cap < k:
            cap *= 2
        self.counts = _grown(self.counts, cap + 2)
        self.start = _grown(self.start, cap + 2)
        self.powc = self._powers(cap)
        self.tree = np.zeros(cap + 1)
        K.rebuild(self.tree, self.counts, self.powc, self.fsc, self.isc)

    def ensure_vertex_capacity(self, n: int) -> None:
        vcap = len(self.deg)
        if n <= vcap:
            return
        while vcap < n:
            vcap *= 2
        self.order = _grown(self.order, vcap)
        self.pos = _grown(self.pos, vcap)
        self.deg = _grown(self.deg, vcap)

    @property
    def arrays(self) -> tuple:
        """The argument bundle shared by the index kernels."""
        return (self.tree, self.counts, self.powc, self.start, self.order,
                self.pos, self.deg, self.fsc, self.isc)

    # -- read access -----------------------------------------------------

    @property
    def total_weight(self) -> float:
        return float(self.fsc[0])

    @property
    def max_degree(self) -> int:
        return int(self.isc[K.I_MAX])

    @property
    def count_at_max(self) -> int:
        return int(self.counts[self.max_degree])

    @property
    def num_vertices(self) -> int:
        return int(self.isc[K.I_NVERT])

    def count(self, k: int) -> int:
        return int(self.counts[k]) if 0 <= k < len(self.counts) else 0

    def class_counts(self) -> dict[int, int]:
        ks = np.flatnonzero(self.counts[: self.max_degree + 1])
        return {int(k): int(self.counts[k]) for k in ks}

    def degree(self, v: int) -> int:
        if not 0 <= v < len(self.deg) or self.deg[v] == 0:
            raise UnknownVertex(v)
        return int(self.deg[v])

    def members(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.max_degree:
            return np.zeros(0, dtype=np.int64)
        return self.order[self.start[k]: self.start[k - 1]].copy()

    def pow(self, k: int) -> float:
        return float(self.powc[k])

    # -- updates ---------------------------------------------------------

    def add_vertex(self, v: int, k: int) -> None:
        if k < 1:
            raise ValueError("degree must be >= 1")
        if 0 <= v < len(self.deg) and self.deg[v] != 0:
            raise DuplicateVertex(v)
        if v < 0:
            raise ValueError("vertex ids are non-negative")
        self.ensure_degree_capacity(k + 1)
        self.ensure_vertex_capacity(max(v, self.num_vertices) + 1)
        K.idx_add_vertex(*self.arrays, v, k)

    def increment_degree(self, v: int) -> None:
        k = self.degree(v)
        self.ensure_degree_capacity(k + 1)
        K.idx_increment(*self.arrays, v)

    def rebuild(self) -> None:
        """Recompute the tree and D exactly from the class counts."""
        K.rebuild(self.tree, self.counts, self.powc, self.fsc, self.isc)

    # -- queries ---------------------------------------------------------

    def _occupied_at_or_below(self, k: int) -> int:
        k = min(k, self.max_degree)
        while k > 0 and self.counts[k] == 0:
            k -= 1
        return k

    def prefix_weight(self, k: int) -> float:
        """D(k), read at the largest occupied class <= k.

        Incremental tree updates leave ulp-level residue in nodes that cover
        emptied classes, so reading at the occupied class keeps the result
        non-decreasing in k and identical across runs of empty classes.
        """
        k = self._occupied_at_or_below(k)
        if k <= 0:
            return 0.0
        if k == self.max_degree:
            return self.total_weight
        return float(K.fenwick_prefix(self.tree, k))

    def find_class_by_weight(self, w: float) -> int:
        """Occupied k with prefix_weight(k - 1) <= w < prefix_weight(k)."""
        if not 0 <= w < self.total_weight:
            raise WeightOutOfRange(w)
        k = int(K.class_at(self.tree, self.counts, self.isc, w))
        # the tree descent and the prefix query round differently at a boundary
        while k > 1 and w < self.prefix_weight(k - 1):
            k = self._occupied_at_or_below(k - 1)
        while k < self.max_degree and w >= self.prefix_weight(k):
            k += 1
            while self.counts[k] == 0:
                k += 1
        return k

    def uniform_vertex_in_class(self, k: int, rng: np.random.Generator) -> int:
        if self.count(k) < 1:
            raise EmptyClass(k)
        return int(K.uniform_in_class(self.start, self.order, k, rng.random()))

    # -- consistency -----------------------------------------------------

    def recompute(self) -> tuple[float, int, int]:
        """(D, M, L) rebuilt from the raw per-vertex degrees."""
        degs = self.deg[self.order[: self.num_vertices]]
        d = float(np.sum(degs.astype(float) ** self.alpha))
        m = int(degs.max()) if len(degs) else 0
        return d, m, int(np.sum(degs == m)) if m else 0

    def check(self) -> None:
        """Assert every structural invariant; for tests and debugging."""
        n = self.num_vertices
        ids = self.order[:n]
        assert len(np.unique(ids)) == n, "registry lists a vertex twice"
        bc = np.bincount(self.deg[ids], minlength=len(self.counts))
        assert np.array_equal(bc[1:], self.counts[1: len(bc)]), "class counts drifted"
        assert int(self.counts[1:].sum()) == n
        mx = self.max_degree
        assert n == 0 or (self.counts[mx] >= 1 and not self.counts[mx + 1:].any())
        for k in range(1, mx + 1):
            block = self.order[self.start[k]: self.start[k - 1]]
            assert len(block) == self.counts[k]
            assert np.all(self.deg[block] == k)
            assert np.all(self.pos[block] == np.arange(self.start[k], self.start[k - 1]))
        d, _, _ = self.recompute()
        assert abs(d - self.total_weight) <= 1e-9 * max(1.0, d)

    # -- snapshots -------------------------------------------------------

    def dumps(self) -> str:
        """Text snapshot: one ``degree,count`` line per occupied class."""
        buf = io.StringIO()
        buf.write(f"# alpha={self.alpha!r}\n")
        for k, c in self.class_counts().items():
            buf.write(f"{k},{c}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str, alpha: float | None = None) -> DegreeClassIndex:
        """Rebuild an index from a snapshot; vertex ids are reassigned 0..n-1."""
        pairs = []
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("# alpha=") and alpha is None:
                alpha = float(line.split("=", 1)[1])
            elif line and not line.startswith("#"):
                k, c = line.split(",")
                pairs.append((int(k), int(c)))
        if alpha is None:
            raise ValueError("snapshot carries no alpha")
        total = sum(c for _, c in pairs)
        kmax = max((k for k, _ in pairs), default=1)
        idx = cls(alpha, degree_capacity=kmax + 1, vertex_capacity=total)
        v = 0
        for k, c in sorted(pairs):
            for _ in range(c):
                K.idx_add_vertex(*idx.arrays, v, k)
                v += 1
        return idx

    @classmethod
    def from_degrees(cls, alpha: float, degrees) -> DegreeClassIndex:
        degrees = list(degrees)
        idx = cls(alpha, degree_capacity=max(degrees) + 1, vertex_capacity=len(degrees))
        for v, k in enumerate(degrees):
            idx.add_vertex(v, k)
        return idx
