"""Explicit regions: the core plus each tail up to a depth horizon, with the
Laplacian stencil stored as CSR over an extended index space.

Rows ``0..n-1`` are explicit vertices ordered core first, then depth-major
(all tails at depth 0, then depth 1, ...), so the rows within a given depth
form a prefix. Columns ``n + t`` stand for "any vertex of tail t beyond its
horizon", whose value is the tail constant.
"""
from __future__ import annotations

import hashlib
import os

import numpy as np

from .errors import ValidationError
from .graph import VertexId


class Region:
    def __init__(self, graph, horizons):
        if len(horizons) != graph.n_tails:
            raise ValidationError("one horizon per tail required")
        if any(h < -1 for h in horizons):
            raise ValidationError("horizons must be >= -1")
        self.graph = graph
        self.horizons = tuple(int(h) for h in horizons)
        nc = graph.n_core
        verts = [VertexId.core(i) for i in range(nc)]
        maxh = max(self.horizons, default=-1)
        depth_end = [nc]
        for d in range(maxh + 1):
            for t, h in enumerate(self.horizons):
                if h >= d:
                    verts.extend(VertexId(t, d, s) for s in range(graph.tails[t].slots))
            depth_end.append(len(verts))
        self.vertices = tuple(verts)
        self.index = {v: i for i, v in enumerate(verts)}
        self.n = len(verts)
        self.n_tails = graph.n_tails
        self.max_depth = maxh
        self.depth_end = np.asarray(depth_end, dtype=np.int64)
        self.row_tail = np.array([v.tail for v in verts], dtype=np.int64)
        self.row_depth = np.array([v.depth for v in verts], dtype=np.int64)
        arrays = _load_spill(graph, self.horizons)
        if arrays is None:
            arrays = self._build_arrays()
            _save_spill(graph, self.horizons, arrays)
        self.indptr, self.indices, self.cond, self.mu = arrays
        for a in arrays:
            a.setflags(write=False)
        self.rowidx = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        self.inv_mu = 1.0 / self.mu
        mask = self.indices > self.rowidx
        self.edge_i = self.rowidx[mask]
        self.edge_j = self.indices[mask]
        self.edge_c = self.cond[mask]

    def _build_arrays(self):
        g = self.graph
        n = self.n
        indptr = [0]
        indices = []
        cond = []
        mu = np.empty(n)
        for i, v in enumerate(self.vertices):
            mu[i] = g.mu(v)
            for u, _, c in g.neighbors(v):
                j = self.index.get(u)
                indices.append(n + u.tail if j is None else j)
                cond.append(c)
            indptr.append(len(indices))
        return (np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
                np.asarray(cond, dtype=np.float64), mu)

    def rows_through_depth(self, depth: int) -> int:
        """Number of rows whose depth is <= ``depth`` (core rows have depth -1)."""
        if depth >= self.max_depth:
            return self.n
        if depth < -1:
            return 0
        return int(self.depth_end[depth + 1])

    def outer_neighbor(self, row: int, t: int):
        """Beyond-horizon neighbors of an explicit row, within tail t."""
        v = self.vertices[row]
        return [u for u, _, _ in self.graph.neighbors(v) if u not in self.index and u.tail == t]

    def embed_index(self, other: "Region") -> np.ndarray:
        """For each row of ``other``, the matching row here, or ``n + tail``
        when that vertex lies beyond this region's horizon."""
        key = ("embed", other.horizons)
        cache = self.__dict__.setdefault("_embed", {})
        out = cache.get(key)
        if out is None:
            out = np.empty(other.n, dtype=np.int64)
            for i, v in enumerate(other.vertices):
                j = self.index.get(v)
                out[i] = self.n + v.tail if j is None else j
            cache[key] = out
        return out

    def __repr__(self):
        return f"Region(horizons={self.horizons}, n={self.n})"


def _spill_path(graph, horizons):
    root = os.environ.get("NETFLAT_CACHE_DIR")
    if not root:
        return None
    key = hashlib.sha256((graph.fingerprint() + repr(horizons)).encode()).hexdigest()
    return os.path.join(root, f"region-{key}.npz")


def _load_spill(graph, horizons):
    path = _spill_path(graph, horizons)
    if path is None or not os.path.exists(path):
        return None
    try:
        with np.load(path) as z:
            return (z["indptr"], z["indices"], z["cond"], z["mu"])
    except (OSError, KeyError, ValueError):
        return None


def _save_spill(graph, horizons, arrays):
    path = _spill_path(graph, horizons)
    if path is None:
        return
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = f"{path}.{os.getpid()}.tmp.npz"
    indptr, indices, cond, mu = arrays
    np.savez(tmp, indptr=indptr, indices=indices, cond=cond, mu=mu)
    os.replace(tmp, path)
