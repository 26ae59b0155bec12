"""Infinite locally finite weighted graphs: a finite core plus finitely many
eventually periodic tails, generated on demand.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InconclusiveError, InvalidVertexError, ValidationError
from .schedule import Schedule

DEFAULT_RADIUS_CAP = 1000
SUP_SPOT_CHECK_DEPTH = 1000


class VertexId(NamedTuple):
    """Core vertices have ``tail == -1``; tail vertices carry depth and slot."""

    tail: int
    index: int
    slot: int = 0

    @classmethod
    def core(cls, i: int) -> "VertexId":
        return cls(-1, int(i), 0)

    @classmethod
    def in_tail(cls, t: int, depth: int, slot: int = 0) -> "VertexId":
        return cls(int(t), int(depth), int(slot))

    @property
    def is_core(self) -> bool:
        return self.tail < 0

    @property
    def depth(self) -> int:
        return -1 if self.tail < 0 else self.index


@dataclass(frozen=True)
class TailSpec:
    """One tail. Layer k holds ``slots`` vertices; the period graph is
    described by ``intra`` edges (same layer) and ``links`` (layer k to k+1),
    each with a factor multiplying ``r_schedule(k)``. ``attach`` lists
    (core index, slot, R) edges from the core to layer 0."""

    r_schedule: Schedule = field(default_factory=Schedule)
    mu_schedules: tuple = (Schedule(),)
    slots: int = 1
    intra: tuple = ()
    links: tuple = ((0, 0, 1.0),)
    attach: tuple = ()
    declared_sup: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "intra", tuple((int(a), int(b), float(f)) for a, b, f in self.intra))
        object.__setattr__(self, "links", tuple((int(a), int(b), float(f)) for a, b, f in self.links))
        object.__setattr__(self, "attach", tuple((int(c), int(s), float(r)) for c, s, r in self.attach))
        object.__setattr__(self, "mu_schedules", tuple(self.mu_schedules))

    @property
    def edge_factor(self) -> float:
        return math.fsum(f for _, _, f in self.intra) + math.fsum(f for _, _, f in self.links)

    def structure(self):
        return (self.slots, tuple((a, b) for a, b, _ in self.intra),
                tuple((a, b) for a, b, _ in self.links), tuple((c, s) for c, s, _ in self.attach))


@dataclass(frozen=True)
class FiniteSubgraph:
    vertices: tuple
    edges: tuple  # (u, v, R) with u < v
    cut: frozenset
    center: VertexId
    radius: int

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, v):
        return v in self._index

    @property
    def _index(self):
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {v: i for i, v in enumerate(self.vertices)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def index(self, v) -> int:
        return self._index[v]


def _lcm(*xs):
    out = 1
    for x in xs:
        out = out * x // math.gcd(out, x)
    return out


class GraphModel:
    """Immutable weighted graph. Topology (core, period graphs, attachments)
    is separate from weights so reweighted copies share FlatFunction layouts.
    """

    def __init__(self, core_labels: Sequence[str], core_mu: Sequence[float],
                 core_edges: Sequence, tails: Sequence[TailSpec] = (), root=None,
                 name: Optional[str] = None, edge_overrides=None, vertex_overrides=None):
        self.core_labels = tuple(str(x) for x in core_labels)
        self.core_mu = tuple(float(m) for m in core_mu)
        self.core_edges = tuple((int(i), int(j), float(r)) for i, j, r in core_edges)
        self.tails = tuple(tails)
        self.name = name
        self.edge_overrides = {}
        for (a, b), r in dict(edge_overrides or {}).items():
            a, b = VertexId(*a), VertexId(*b)
            self.edge_overrides[(a, b) if a < b else (b, a)] = float(r)
        self.vertex_overrides = {VertexId(*v): float(m) for v, m in dict(vertex_overrides or {}).items()}
        if root is None:
            root = VertexId.core(0) if self.core_labels else VertexId.in_tail(0, 0, 0)
        self.root = VertexId(*root)
        self._lock = threading.Lock()
        self._regions = {}
        self._sup = None
        self._label_index = {lab: i for i, lab in enumerate(self.core_labels)}
        self._build_core()
        self._override_depth = [-1] * len(self.tails)
        for key in list(self.edge_overrides) + list(self.vertex_overrides):
            for v in (key if isinstance(key[0], tuple) else (key,)):
                if not v.is_core:
                    self._override_depth[v.tail] = max(self._override_depth[v.tail], v.index)
        self._validate()

    # -- construction -------------------------------------------------------
    def _build_core(self):
        nc = len(self.core_labels)
        if len(self.core_mu) != nc:
            raise ValidationError("core_mu length differs from core vertex count")
        adj = [dict() for _ in range(nc)]
        for i, j, r in self.core_edges:
            if not (0 <= i < nc and 0 <= j < nc):
                raise ValidationError(f"core edge ({i}, {j}) references unknown vertex")
            if i == j:
                raise ValidationError(f"loop at core vertex {self.core_labels[i]}")
            if VertexId.core(j) in adj[i]:
                raise ValidationError(f"parallel edge between {self.core_labels[i]} and {self.core_labels[j]}")
            adj[i][VertexId.core(j)] = r
            adj[j][VertexId.core(i)] = r
        for t, spec in enumerate(self.tails):
            for c, s, r in spec.attach:
                if not (0 <= c < nc) or not (0 <= s < spec.slots):
                    raise ValidationError(f"tail {t} attachment ({c}, {s}) out of range")
                u = VertexId.in_tail(t, 0, s)
                if u in adj[c]:
                    raise ValidationError(f"parallel attachment edge on tail {t}")
                adj[c][u] = r
        self._core_adj = [sorted(a.items()) for a in adj]

    def _validate(self):
        for lab in self.core_labels:
            if lab.startswith("t") and ":" in lab:
                raise ValidationError(f"core label {lab!r} collides with tail label syntax")
        if len(self._label_index) != len(self.core_labels):
            raise ValidationError("duplicate core labels")
        for m in self.core_mu:
            if not (m > 0 and math.isfinite(m)):
                raise ValidationError("vertex weights must be positive")
        for _, _, r in self.core_edges:
            if not (r > 0 and math.isfinite(r)):
                raise ValidationError("edge weights must be positive")
        for t, spec in enumerate(self.tails):
            if spec.slots < 1 or len(spec.mu_schedules) != spec.slots:
                raise ValidationError(f"tail {t}: need one mu schedule per slot")
            for a, b, f in spec.intra + spec.links:
                if not (0 <= a < spec.slots and 0 <= b < spec.slots) or not f > 0:
                    raise ValidationError(f"tail {t}: bad period-graph edge ({a}, {b}, {f})")
            for a, b, _ in spec.intra:
                if a == b:
                    raise ValidationError(f"tail {t}: loop in period graph")
            pairs = [frozenset((a, b)) for a, b, _ in spec.intra]
            lpairs = [(a, b) for a, b, _ in spec.links]
            if len(set(pairs)) != len(pairs) or len(set(lpairs)) != len(lpairs):
                raise ValidationError(f"tail {t}: parallel edges in period graph")
            for _, _, r in spec.attach:
                if not (r > 0 and math.isfinite(r)):
                    raise ValidationError("edge weights must be positive")
        for key, r in self.edge_overrides.items():
            if not (r > 0 and math.isfinite(r)):
                raise ValidationError("override weights must be positive")
        for key, m in self.vertex_overrides.items():
            if not (m > 0 and math.isfinite(m)):
                raise ValidationError("override weights must be positive")
        self.resolve(self.root)
        self._check_connected()
        for t, spec in enumerate(self.tails):
            if spec.declared_sup is not None:
                self._spot_check_declared(t, spec)

    def _check_connected(self):
        n_total = len(self.core_labels) + sum(s.slots for s in self.tails)
        if n_total == 1 and not self.core_edges and not self.tails:
            return  # edgeless single vertex: Delta = 0
        L = {t: 2 * s.slots + 2 + max(self._override_depth[t], 0) for t, s in enumerate(self.tails)}
        seen = {self.root}
        queue = deque([self.root])
        while queue:
            v = queue.popleft()
            for u, _, _ in self.neighbors(v):
                if u not in seen and (u.is_core or u.index <= L[u.tail]):
                    seen.add(u)
                    queue.append(u)
        for i in range(len(self.core_labels)):
            if VertexId.core(i) not in seen:
                raise ValidationError(f"core vertex {self.core_labels[i]} unreachable from root")
            if not self._core_adj[i]:
                raise ValidationError(f"core vertex {self.core_labels[i]} has no edges")
        for t, spec in enumerate(self.tails):
            for k in range(L[t] - spec.slots):
                for s in range(spec.slots):
                    if VertexId(t, k, s) not in seen:
                        raise ValidationError(f"tail {t} slot {s} depth {k} unreachable from root")

    def _spot_check_declared(self, t, spec):
        for k in range(SUP_SPOT_CHECK_DEPTH + 1):
            for s in range(spec.slots):
                v = VertexId(t, k, s)
                val = 2.0 * self.conductance_sum(v) / self.mu(v)
                if val > spec.declared_sup * (1 + 1e-12):
                    raise ValidationError(
                        f"tail {t}: declared supremum {spec.declared_sup} below {val} at depth {k}")

    def replace(self, **kw) -> "GraphModel":
        """Copy with some constructor arguments changed."""
        args = dict(core_labels=self.core_labels, core_mu=self.core_mu, core_edges=self.core_edges,
                    tails=self.tails, root=self.root, name=self.name,
                    edge_overrides=self.edge_overrides, vertex_overrides=self.vertex_overrides)
        args.update(kw)
        return GraphModel(**args)

    # -- identity -----------------------------------------------------------
    @property
    def n_core(self) -> int:
        return len(self.core_labels)

    @property
    def n_tails(self) -> int:
        return len(self.tails)

    @property
    def is_finite(self) -> bool:
        return not self.tails

    def topology_key(self):
        key = self.__dict__.get("_topo")
        if key is None:
            key = (self.core_labels, tuple((i, j) for i, j, _ in self.core_edges),
                   tuple(s.structure() for s in self.tails))
            self.__dict__["_topo"] = key
        return key

    def same_topology(self, other: "GraphModel") -> bool:
        return self is other or self.topology_key() == other.topology_key()

    def fingerprint(self) -> str:
        """Stable hash of topology and weights."""
        fp = self.__dict__.get("_fp")
        if fp is None:
            payload = {
                "topo": repr(self.topology_key()),
                "mu": [repr(m) for m in self.core_mu],
                "R": [repr(r) for _, _, r in self.core_edges],
                "tails": [repr((s.r_schedule, s.mu_schedules, s.intra, s.links, s.attach)) for s in self.tails],
                "eo": sorted(repr(kv) for kv in self.edge_overrides.items()),
                "vo": sorted(repr(kv) for kv in self.vertex_overrides.items()),
                "root": repr(tuple(self.root)),
            }
            fp = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
            self.__dict__["_fp"] = fp
        return fp

    # -- vertices -----------------------------------------------------------
    def resolve(self, v) -> VertexId:
        if isinstance(v, str):
            return self.parse_vertex(v)
        try:
            v = VertexId(*v)
        except TypeError:
            raise InvalidVertexError(f"not a vertex id: {v!r}") from None
        if v.is_core:
            if v.tail != -1 or not (0 <= v.index < self.n_core) or v.slot != 0:
                raise InvalidVertexError(f"no such core vertex: {v!r}")
        else:
            if v.tail >= self.n_tails or v.index < 0 or not (0 <= v.slot < self.tails[v.tail].slots):
                raise InvalidVertexError(f"no such tail vertex: {v!r}")
        return v

    def label(self, v) -> str:
        v = self.resolve(v)
        if v.is_core:
            return self.core_labels[v.index]
        if self.tails[v.tail].slots > 1:
            return f"t{v.tail}:{v.index}:{v.slot}"
        return f"t{v.tail}:{v.index}"

    def parse_vertex(self, label) -> VertexId:
        if isinstance(label, VertexId):
            return self.resolve(label)
        if isinstance(label, (list, tuple)):
            return self.resolve(VertexId(*label))
        s = str(label)
        if s in self._label_index:
            return VertexId.core(self._label_index[s])
        if s.startswith("t") and ":" in s:
            parts = s[1:].split(":")
            try:
                nums = [int(p) for p in parts]
            except ValueError:
                raise InvalidVertexError(f"bad vertex label {s!r}") from None
            if len(nums) == 2:
                nums.append(0)
            if len(nums) == 3:
                return self.resolve(VertexId(*nums))
        raise InvalidVertexError(f"unknown vertex {s!r}")

    def tail_of(self, v) -> Optional[int]:
        v = self.resolve(v)
        return None if v.is_core else v.tail

    def mu(self, v) -> float:
        if type(v) is not VertexId:
            v = self.parse_vertex(v)
        m = self.vertex_overrides.get(v)
        if m is not None:
            return m
        if v.tail < 0:
            return self.core_mu[v.index]
        return self.tails[v.tail].mu_schedules[v.slot](v.index)

    # -- edges --------------------------------------------------------------
    def _base_neighbors(self, v: VertexId):
        if v.tail < 0:
            return list(self._core_adj[v.index])
        spec = self.tails[v.tail]
        t, k, i = v
        out = []
        rk = spec.r_schedule(k)
        for a, b, f in spec.intra:
            if a == i:
                out.append((VertexId(t, k, b), f * rk))
            elif b == i:
                out.append((VertexId(t, k, a), f * rk))
        for a, b, f in spec.links:
            if a == i:
                out.append((VertexId(t, k + 1, b), f * rk))
            if b == i and k >= 1:
                out.append((VertexId(t, k - 1, a), f * spec.r_schedule(k - 1)))
        if k == 0:
            for c, s, r in spec.attach:
                if s == i:
                    out.append((VertexId.core(c), r))
        out.sort()
        return out

    def neighbors(self, v) -> list:
        """[(u, R, C)] in VertexId order, with C = 1/R."""
        v = self.resolve(v)
        out = []
        eo = self.edge_overrides
        for u, r in self._base_neighbors(v):
            if eo:
                r = eo.get((v, u) if v < u else (u, v), r)
            out.append((u, r, 1.0 / r))
        return out

    def resistance(self, u, v) -> float:
        for w, r, _ in self.neighbors(u):
            if w == v:
                return r
        raise InvalidVertexError(f"{u!r} and {v!r} are not adjacent")

    def conductance_sum(self, v) -> float:
        return math.fsum(c for _, _, c in self.neighbors(v))

    # -- closed-form suprema and sums ---------------------------------------
    def _tail_tail_depth(self, t) -> int:
        """Depth after which tail t follows its periodic rules exactly."""
        spec = self.tails[t]
        h = max([len(spec.r_schedule.head)] + [len(m.head) for m in spec.mu_schedules])
        return h + max(self._override_depth[t], 0) + 2

    def degree_ratio_sup(self) -> float:
        """sup_v (1/mu(v)) sum_u C(u,v), exact; ``inf`` if unbounded."""
        if self._sup is not None:
            return self._sup
        best = 0.0
        for i in range(self.n_core):
            v = VertexId.core(i)
            best = max(best, self.conductance_sum(v) / self.mu(v))
        for t, spec in enumerate(self.tails):
            for m in spec.mu_schedules:
                if spec.r_schedule.ratio * m.ratio < 1.0 - 1e-12:
                    self._sup = math.inf
                    return self._sup
            K0 = self._tail_tail_depth(t)
            L = _lcm(spec.r_schedule.period, *[m.period for m in spec.mu_schedules])
            for k in range(K0 + L + 1):
                for s in range(spec.slots):
                    v = VertexId(t, k, s)
                    best = max(best, self.conductance_sum(v) / self.mu(v))
        self._sup = best
        return best

    def _tail_edges_at(self, t, k):
        """Edges owned by layer k of tail t: intra at k, links k -> k+1,
        and attachments when k == 0."""
        spec = self.tails[t]
        out = []
        for s in range(spec.slots):
            v = VertexId(t, k, s)
            for u, r, _ in self.neighbors(v):
                if u.is_core or u.index > k or (u.index == k and u > v):
                    out.append((v, u, r))
        return out

    def tail_edge_sum(self, t, start=0) -> float:
        """Sum of R over edges owned by layers >= start of tail t."""
        spec = self.tails[t]
        K0 = self._tail_tail_depth(t)
        parts = []
        for k in range(start, max(start, K0)):
            parts.extend(r for _, _, r in self._tail_edges_at(t, k))
        rest = spec.r_schedule.tail_sum(max(start, K0))
        if math.isinf(rest):
            return math.inf
        return math.fsum(parts) + spec.edge_factor * rest

    def tail_mu_sum(self, t, start=0) -> float:
        """Sum of mu over vertices of tail t at depth >= start."""
        spec = self.tails[t]
        K0 = self._tail_tail_depth(t)
        parts = [self.mu(VertexId(t, k, s)) for k in range(start, max(start, K0)) for s in range(spec.slots)]
        total = math.fsum(parts)
        for m in spec.mu_schedules:
            total += m.tail_sum(max(start, K0))
        return total

    def volume(self) -> float:
        """Sum of all edge lengths R; ``inf`` when divergent."""
        eo = self.edge_overrides
        total = math.fsum(eo.get((VertexId.core(i), VertexId.core(j)) if i < j else
                                 (VertexId.core(j), VertexId.core(i)), r)
                          for i, j, r in self.core_edges)
        # attachments are owned by layer 0 of each tail
        for t in range(self.n_tails):
            total += self.tail_edge_sum(t, 0)
        return total

    def total_mu(self) -> float:
        total = math.fsum(self.mu(VertexId.core(i)) for i in range(self.n_core))
        for t in range(self.n_tails):
            total += self.tail_mu_sum(t, 0)
        return total

    def finite_edges(self):
        """Edge list of a finite graph (no tails) with overrides applied."""
        if self.tails:
            raise ValidationError("finite_edges on a graph with tails")
        out = []
        for i in range(self.n_core):
            v = VertexId.core(i)
            for u, r, _ in self.neighbors(v):
                if v < u:
                    out.append((v, u, r))
        return out

    # -- metric structure ---------------------------------------------------
    def ball(self, center, radius: int) -> FiniteSubgraph:
        center = self.resolve(center)
        if radius < 0:
            raise ValidationError("radius must be nonnegative")
        dist = {center: 0}
        queue = deque([center])
        order = []
        while queue:
            v = queue.popleft()
            order.append(v)
            if dist[v] == radius:
                continue
            for u, _, _ in self.neighbors(v):
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        verts = tuple(sorted(dist))
        inside = set(verts)
        edges = []
        cut = set()
        for v in verts:
            for u, r, _ in self.neighbors(v):
                if u in inside:
                    if v < u:
                        edges.append((v, u, r))
                else:
                    cut.add(v)
        return FiniteSubgraph(verts, tuple(edges), frozenset(cut), center, int(radius))

    def combinatorial_distance(self, u, v, cap: int = DEFAULT_RADIUS_CAP) -> int:
        u, v = self.resolve(u), self.resolve(v)
        if u == v:
            return 0
        dist = {u: 0}
        queue = deque([u])
        while queue:
            w = queue.popleft()
            if dist[w] >= cap:
                continue
            for x, _, _ in self.neighbors(w):
                if x not in dist:
                    dist[x] = dist[w] + 1
                    if x == v:
                        return dist[x]
                    queue.append(x)
        raise InconclusiveError(f"radius cap {cap} exhausted", lower_bound=cap + 1)

    def geodesic_distance(self, u, v, cap: int = DEFAULT_RADIUS_CAP) -> float:
        """Infimum of path lengths sum R between u and v.

        Dijkstra runs inside ball(u, cap). The answer is exact when it does
        not exceed the distance to the ball's cut vertices (any path leaving
        the ball is at least that long)."""
        u, v = self.resolve(u), self.resolve(v)
        if u == v:
            return 0.0
        B = self.ball(u, cap)
        inside = set(B.vertices)
        dist = {u: 0.0}
        heap = [(0.0, u)]
        done = set()
        while heap:
            d, w = heapq.heappop(heap)
            if w in done:
                continue
            done.add(w)
            for x, r, _ in self.neighbors(w):
                if x in inside and (x not in dist or d + r < dist[x]):
                    dist[x] = d + r
                    heapq.heappush(heap, (d + r, x))
        exit_bound = min((dist[c] for c in B.cut), default=math.inf)
        if v in dist and dist[v] <= exit_bound:
            return dist[v]
        lb = min(dist.get(v, math.inf), exit_bound)
        raise InconclusiveError(f"distance {u!r} -> {v!r} not certified within radius {cap}", lower_bound=lb)

    def diameter(self) -> float:
        """sup of geodesic distances (over the metric completion for tails)."""
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import shortest_path

        verts = [VertexId.core(i) for i in range(self.n_core)]
        depth = {}
        for t, spec in enumerate(self.tails):
            if spec.slots != 1:
                raise InconclusiveError(f"diameter of multi-slot tail {t} is not implemented")
            depth[t] = self._tail_tail_depth(t)
            verts += [VertexId(t, k, 0) for k in range(depth[t] + 1)]
        index = {v: i for i, v in enumerate(verts)}
        rows, cols, vals = [], [], []
        for v in verts:
            for u, r, _ in self.neighbors(v):
                if u in index and v < u:
                    rows.append(index[v])
                    cols.append(index[u])
                    vals.append(r)
        n = len(verts)
        for t in range(self.n_tails):
            rest = self.tail_edge_sum(t, depth[t])
            if math.isinf(rest):
                return math.inf
            rows.append(index[VertexId(t, depth[t], 0)])
            cols.append(n)
            vals.append(rest)
            n += 1
        if n <= 1:
            return 0.0
        A = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        D = shortest_path(A, method="D", directed=False)
        return float(D.max())

    # -- regions ------------------------------------------------------------
    def region(self, horizons):
        """Explicit region: the core plus tail layers up to each horizon."""
        from .region import Region

        key = tuple(int(h) for h in horizons)
        reg = self._regions.get(key)
        if reg is None:
            reg = Region(self, key)
            with self._lock:
                reg = self._regions.setdefault(key, reg)
        return reg

    def __repr__(self):
        return (f"GraphModel(name={self.name!r}, core={self.n_core}, tails={self.n_tails}, "
                f"root={self.label(self.root)!r})")
