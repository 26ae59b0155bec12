"""Eventually flat functions: explicit values on a finite region plus one
constant vector per tail."""
from __future__ import annotations

import math
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import GraphMismatchError, InconclusiveError, ValidationError
from .graph import GraphModel, VertexId


class BoundarySet(frozenset):
    """A set of tail ids; each tail stands for one clopen end."""

    def __new__(cls, tails: Iterable[int] = ()):
        return super().__new__(cls, (int(t) for t in tails))

    def check(self, graph: GraphModel) -> "BoundarySet":
        bad = [t for t in self if not 0 <= t < graph.n_tails]
        if bad:
            raise ValidationError(f"boundary set references unknown tails {sorted(bad)}")
        return self

    def __repr__(self):
        return f"BoundarySet({sorted(self)})"


class FlatFunction:
    """Immutable element of A^d on ``graph``.

    ``values`` has shape (region.n, d) in region row order; ``tails`` has
    shape (n_tails, d).
    """

    __slots__ = ("graph", "horizons", "values", "tails", "_region")

    def __init__(self, graph: GraphModel, horizons, values, tails):
        self.graph = graph
        self.horizons = tuple(int(h) for h in horizons)
        region = graph.region(self.horizons)
        values = np.array(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        tails = np.array(tails, dtype=np.float64).reshape(graph.n_tails, values.shape[1])
        if values.shape[0] != region.n:
            raise ValidationError(f"expected {region.n} explicit rows, got {values.shape[0]}")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(tails))):
            raise ValidationError("FlatFunction values must be finite")
        values.setflags(write=False)
        tails.setflags(write=False)
        self.values = values
        self.tails = tails
        self._region = region

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, graph, c=1.0, dimension: Optional[int] = None) -> "FlatFunction":
        c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        if dimension is not None and c.size == 1:
            c = np.full(dimension, c[0])
        horizons = (-1,) * graph.n_tails
        n = graph.region(horizons).n
        return cls(graph, horizons, np.tile(c, (n, 1)), np.tile(c, (graph.n_tails, 1)))

    @classmethod
    def zeros(cls, graph, dimension: int = 1) -> "FlatFunction":
        return cls.constant(graph, 0.0, dimension)

    @classmethod
    def from_values(cls, graph, explicit: Mapping, tails: Optional[Mapping] = None,
                    dimension: int = 1, fill=0.0) -> "FlatFunction":
        """Build from {vertex: value} and {tail id: constant}. Explicit core
        or in-horizon vertices that are not listed take ``fill``."""
        tails = dict(tails or {})
        explicit = {graph.parse_vertex(v): np.atleast_1d(np.asarray(x, dtype=np.float64))
                    for v, x in explicit.items()}
        for x in list(explicit.values()) + [np.atleast_1d(np.asarray(x, float)) for x in tails.values()]:
            if x.size != dimension:
                if x.size == 1:
                    continue
                raise ValidationError(f"value {x} does not match dimension {dimension}")
        horizons = [-1] * graph.n_tails
        for v in explicit:
            if not v.is_core:
                horizons[v.tail] = max(horizons[v.tail], v.index)
        for t in tails:
            if not 0 <= int(t) < graph.n_tails:
                raise ValidationError(f"unknown tail {t}")
        region = graph.region(horizons)
        vals = np.empty((region.n, dimension))
        vals[:] = np.broadcast_to(np.atleast_1d(np.asarray(fill, float)), (dimension,))
        for v, x in explicit.items():
            vals[region.index[v]] = np.broadcast_to(x, (dimension,))
        tc = np.zeros((graph.n_tails, dimension))
        for t, x in tails.items():
            tc[int(t)] = np.broadcast_to(np.atleast_1d(np.asarray(x, float)), (dimension,))
        return cls(graph, horizons, vals, tc)

    @classmethod
    def delta(cls, graph, v, dimension: int = 1) -> "FlatFunction":
        """delta_v = indicator of v divided by mu(v)."""
        v = graph.parse_vertex(v)
        return cls.from_values(graph, {v: 1.0 / graph.mu(v)}, dimension=dimension)

    # -- basic accessors ----------------------------------------------------
    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def region(self):
        return self._region

    def evaluate(self, v) -> np.ndarray:
        v = self.graph.parse_vertex(v)
        i = self._region.index.get(v)
        if i is not None:
            return self.values[i].copy()
        return self.tails[v.tail].copy()

    def __call__(self, v):
        out = self.evaluate(v)
        return float(out[0]) if out.size == 1 else out

    def extended(self) -> np.ndarray:
        """Explicit rows followed by tail-constant rows."""
        return np.vstack([self.values, self.tails])

    def expand(self, horizons) -> "FlatFunction":
        """Same function with a larger explicit region."""
        horizons = tuple(int(h) for h in horizons)
        if horizons == self.horizons:
            return self
        if any(a < b for a, b in zip(horizons, self.horizons)):
            raise ValidationError("expand cannot shrink the explicit region")
        target = self.graph.region(horizons)
        idx = self._region.embed_index(target)
        return FlatFunction(self.graph, horizons, self.extended()[idx], self.tails)

    def on_graph(self, graph: GraphModel) -> "FlatFunction":
        """Reinterpret on a graph with the same topology (other weights)."""
        check_topology(self.graph, graph)
        if graph is self.graph:
            return self
        return FlatFunction(graph, self.horizons, self.values, self.tails)

    def trim(self) -> "FlatFunction":
        """Smallest explicit region representing the same function."""
        reg = self._region
        new_h = []
        for t, h in enumerate(self.horizons):
            rows = np.nonzero(reg.row_tail == t)[0]
            diff = np.any(self.values[rows] != self.tails[t], axis=1)
            new_h.append(int(reg.row_depth[rows[diff]].max()) if diff.any() else -1)
        target = self.graph.region(new_h)
        idx = target.embed_index(self._region)
        keep = np.empty(target.n, dtype=np.int64)
        keep[idx[idx < target.n]] = np.nonzero(idx < target.n)[0]
        return FlatFunction(self.graph, new_h, self.values[keep], self.tails)

    def to_dict(self, labels=True) -> dict:
        g = self.graph
        explicit = [[g.label(v) if labels else list(v), [float(x) for x in self.values[i]]]
                    for i, v in sorted(enumerate(self._region.vertices), key=lambda p: p[1])]
        tails = [[t, [float(x) for x in self.tails[t]]] for t in range(g.n_tails)]
        return {"dimension": self.dimension, "explicit": explicit, "tails": tails}

    @classmethod
    def from_dict(cls, graph, obj) -> "FlatFunction":
        d = int(obj.get("dimension", 1))
        explicit = {}
        for item in obj.get("explicit", []):
            v, x = item
            explicit[graph.parse_vertex(v)] = x
        tails = {int(t): x for t, x in obj.get("tails", [])}
        return cls.from_values(graph, explicit, tails, dimension=d, fill=obj.get("fill", 0.0))

    def __repr__(self):
        return f"FlatFunction(dim={self.dimension}, horizons={self.horizons}, tails={self.tails.tolist()})"

    # -- algebra ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(-1.0, other))

    def __mul__(self, other):
        if isinstance(other, FlatFunction):
            return mul(self, other)
        return scale(other, self)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(-1.0, self)


def check_topology(g1: GraphModel, g2: GraphModel):
    if not g1.same_topology(g2):
        raise GraphMismatchError("functions live on different graphs")


def _aligned(f: FlatFunction, g: FlatFunction):
    check_topology(f.graph, g.graph)
    if f.dimension != g.dimension:
        raise ValidationError(f"dimension mismatch: {f.dimension} vs {g.dimension}")
    h = tuple(max(a, b) for a, b in zip(f.horizons, g.horizons))
    return f.expand(h), g.on_graph(f.graph).expand(h), h


def add(f: FlatFunction, g: FlatFunction) -> FlatFunction:
    f2, g2, h = _aligned(f, g)
    return FlatFunction(f.graph, h, f2.values + g2.values, f2.tails + g2.tails)


def mul(f: FlatFunction, g: FlatFunction) -> FlatFunction:
    f2, g2, h = _aligned(f, g)
    return FlatFunction(f.graph, h, f2.values * g2.values, f2.tails * g2.tails)


def scale(c, f: FlatFunction) -> FlatFunction:
    c = np.asarray(c, dtype=np.float64)
    return FlatFunction(f.graph, f.horizons, c * f.values, c * f.tails)


def evaluate(f: FlatFunction, v) -> np.ndarray:
    return f.evaluate(v)


def jump_edges(f: FlatFunction) -> list:
    """Edges [u, v] (u < v) with f(u) != f(v), compared exactly."""
    reg = f.region
    ext = f.extended()
    ne = np.any(ext[reg.edge_i] != ext[reg.edge_j], axis=1)
    out = []
    for i, j in zip(reg.edge_i[ne], reg.edge_j[ne]):
        u = reg.vertices[i]
        if j < reg.n:
            out.append((u, reg.vertices[j]))
        else:
            for w in reg.outer_neighbor(int(i), int(j - reg.n)):
                out.append((u, w) if u < w else (w, u))
    return sorted(set(out))


def value_range(f: FlatFunction) -> set:
    rows = np.vstack([f.values, f.tails]) if f.graph.n_tails else f.values
    return {tuple(r) for r in rows.tolist()}


def lp_norm(f: FlatFunction, p) -> float:
    """||f||_p with the graph's vertex weights; for d > 1 the max over
    components. Returns ``inf`` when a nonzero tail constant meets a
    divergent mu tail sum."""
    if p in (math.inf, "inf", "Inf"):
        a = np.abs(f.values).max(initial=0.0)
        b = np.abs(f.tails).max(initial=0.0)
        return float(max(a, b)) if f.graph.n_tails else float(a)
    p = int(p)
    if p not in (1, 2):
        raise ValidationError("p must be 1, 2 or inf")
    reg = f.region
    g = f.graph
    comps = (np.abs(f.values) ** p * reg.mu[:, None]).sum(axis=0)
    for t in range(g.n_tails):
        c = np.abs(f.tails[t]) ** p
        if np.any(c != 0):
            s = g.tail_mu_sum(t, f.horizons[t] + 1)
            if math.isinf(s):
                return math.inf
            comps = comps + c * s
    return float(np.max(comps ** (1.0 / p)))


def mass(f: FlatFunction) -> np.ndarray | float:
    """sum_v f(v) mu(v), exact over the region plus closed-form tail sums."""
    reg = f.region
    g = f.graph
    total = (f.values * reg.mu[:, None]).sum(axis=0)
    for t in range(g.n_tails):
        if np.any(f.tails[t] != 0):
            s = g.tail_mu_sum(t, f.horizons[t] + 1)
            if math.isinf(s):
                raise InconclusiveError(f"mass diverges on tail {t}")
            total = total + f.tails[t] * s
    return float(total[0]) if total.size == 1 else total


def inner(f: FlatFunction, g: FlatFunction) -> float:
    """<f, g>_mu, summed over components."""
    f2, g2, h = _aligned(f, g)
    reg = f2.region
    total = float((f2.values * g2.values * reg.mu[:, None]).sum())
    gr = f.graph
    for t in range(gr.n_tails):
        c = float(np.dot(f2.tails[t], g2.tails[t]))
        if c != 0:
            s = gr.tail_mu_sum(t, h[t] + 1)
            if math.isinf(s):
                raise InconclusiveError(f"inner product diverges on tail {t}")
            total += c * s
    return total


def vanishes_on(f: FlatFunction, omega) -> bool:
    return all(np.all(f.tails[t] == 0) for t in omega)


def separation_function(graph: GraphModel, omega1, omega2, guard_depth: int = 0) -> FlatFunction:
    """f in A with f = 1 on Omega1 tails and 0 on Omega2 tails beyond the
    guard depth; 0 <= f <= 1 with range {0, 1}.

    A vertex gets 1 when it is strictly closer (combinatorially) to the deep
    part of an Omega1 tail than to the deep part of an Omega2 tail. Tails in
    neither set take the value of their attachment point.
    """
    o1 = BoundarySet(omega1).check(graph)
    o2 = BoundarySet(omega2).check(graph)
    if not o1 or not o2:
        raise ValidationError("separation needs two nonempty boundary sets")
    if o1 & o2:
        raise ValidationError(f"boundary sets overlap on tails {sorted(o1 & o2)}")
    guard = int(guard_depth)
    if guard < 0:
        raise ValidationError("guard depth must be nonnegative")
    H = [guard if t in (o1 | o2) else -1 for t in range(graph.n_tails)]
    region = graph.region(H)
    d1 = _multi_source_bfs(region, [t for t in o1], guard)
    d2 = _multi_source_bfs(region, [t for t in o2], guard)
    vals = np.array([1.0 if a < b else 0.0 for a, b in zip(d1, d2)])
    tails = np.zeros(graph.n_tails)
    for t in range(graph.n_tails):
        if t in o1:
            tails[t] = 1.0
        elif t not in o2:
            spec = graph.tails[t]
            # attachment value; a tail attached nowhere in the core keeps 0
            att = [region.index[VertexId.core(c)] for c, _, _ in spec.attach]
            tails[t] = max((vals[i] for i in att), default=0.0)
    return FlatFunction(graph, H, vals, tails).trim()


def _multi_source_bfs(region, tails, guard):
    """Hop distance within the explicit region from the guard-depth layer of
    the given tails (the deep parts are reached through those layers)."""
    from collections import deque

    INF = math.inf
    dist = [INF] * region.n
    queue = deque()
    for i, v in enumerate(region.vertices):
        if not v.is_core and v.tail in tails and v.index == guard:
            dist[i] = 0
            queue.append(i)
    while queue:
        i = queue.popleft()
        for e in range(region.indptr[i], region.indptr[i + 1]):
            j = region.indices[e]
            if j < region.n and dist[j] == INF:
                dist[j] = dist[i] + 1
                queue.append(j)
    return dist
