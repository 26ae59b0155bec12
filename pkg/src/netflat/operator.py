"""The weighted graph Laplacian and its quadratic form."""
from __future__ import annotations

import math

import numpy as np

from .errors import UnboundedOperatorError, ValidationError
from .flat import FlatFunction, check_topology, lp_norm
from .graph import FiniteSubgraph, GraphModel, VertexId
from .schedule import Schedule


class LaplacianOp:
    """Delta f(v) = (1/mu(v)) sum_u C(u,v) (f(v) - f(u)) on ``graph``.

    With ``bounded=False`` the operator may have an infinite norm; it is
    then only usable through finite sections.
    """

    def __init__(self, graph: GraphModel, bounded: bool = True):
        self.graph = graph
        self.sup = graph.degree_ratio_sup()
        self.bounded = math.isfinite(self.sup)
        if bounded and not self.bounded:
            raise UnboundedOperatorError(
                "sup (1/mu) sum C is infinite; construct with bounded=False for finite sections")

    @property
    def norm_inf(self) -> float:
        if not self.bounded:
            raise UnboundedOperatorError("operator norm unavailable for an unbounded operator")
        return 2.0 * self.sup

    def require_bounded(self):
        if not self.bounded:
            raise UnboundedOperatorError("operation needs a bounded Laplacian")

    def __call__(self, f: FlatFunction) -> FlatFunction:
        return apply_laplacian(self, f)

    def __repr__(self):
        return f"LaplacianOp({self.graph!r}, sup={self.sup})"


def region_laplacian(region, ext: np.ndarray, rows: int | None = None) -> np.ndarray:
    """Delta applied to extended values (explicit rows then tail rows),
    evaluated on the first ``rows`` explicit rows (difference form)."""
    n = region.n if rows is None else rows
    e = int(region.indptr[n])
    ri = region.rowidx[:e]
    contrib = region.cond[:e, None] * (ext[ri] - ext[region.indices[:e]])
    out = np.empty((n, ext.shape[1]))
    for c in range(ext.shape[1]):
        out[:, c] = np.bincount(ri, weights=contrib[:, c], minlength=n)
    return out * region.inv_mu[:n, None]


def apply_laplacian(L: LaplacianOp, f: FlatFunction) -> FlatFunction:
    L.require_bounded()
    check_topology(L.graph, f.graph)
    h = tuple(x + 1 for x in f.horizons)
    fe = f.on_graph(L.graph).expand(h)
    vals = region_laplacian(fe.region, fe.extended())
    return FlatFunction(L.graph, h, vals, np.zeros_like(f.tails))


def bilinear_form(L: LaplacianOp, f: FlatFunction, g: FlatFunction) -> float:
    """B(f, g) = sum over edges of C (f(u) - f(v)) (g(u) - g(v)), summed over
    components; only edges touching the explicit region can contribute."""
    check_topology(L.graph, f.graph)
    check_topology(L.graph, g.graph)
    h = tuple(max(a, b) for a, b in zip(f.horizons, g.horizons))
    reg = L.graph.region(h)
    fx = f.on_graph(L.graph).expand(h).extended()
    gx = g.on_graph(L.graph).expand(h).extended()
    df = fx[reg.edge_i] - fx[reg.edge_j]
    dg = gx[reg.edge_i] - gx[reg.edge_j]
    return float(np.sum(reg.edge_c[:, None] * df * dg))


def op_norm_inf(L: LaplacianOp) -> float:
    return L.norm_inf


def to_q_matrix(L: LaplacianOp, sub: FiniteSubgraph):
    """Matrix of Delta restricted to ``sub``: Q[v, v] = (1/mu(v)) sum C over
    all incident edges, Q[v, w] = -C(v, w)/mu(v). Returns (Q, boundary) where
    boundary flags cut-vertex rows, whose sums may be nonzero."""
    g = L.graph
    n = len(sub.vertices)
    Q = np.zeros((n, n))
    for i, v in enumerate(sub.vertices):
        m = g.mu(v)
        diag = []
        for u, _, c in g.neighbors(v):
            diag.append(c)
            if u in sub:
                Q[i, sub.index(u)] = -c / m
        Q[i, i] = math.fsum(diag) / m
    boundary = np.array([v in sub.cut for v in sub.vertices])
    return Q, boundary


def sobolev_norm(L: LaplacianOp, f: FlatFunction, squared: bool = True) -> float:
    """<f, f>_1 = sum f^2 mu + B(f, f); ``inf`` when the l2 part diverges.
    Pass ``squared=False`` for the norm itself."""
    l2 = lp_norm_sq_total(f)
    val = l2 + bilinear_form(L, f, f) if math.isfinite(l2) else math.inf
    return val if squared else math.sqrt(val)


def lp_norm_sq_total(f: FlatFunction) -> float:
    """sum over components of ||f_i||_2^2."""
    if f.dimension == 1:
        n2 = lp_norm(f, 2)
        return n2 * n2
    total = 0.0
    for c in range(f.dimension):
        fc = FlatFunction(f.graph, f.horizons, f.values[:, c], f.tails[:, c])
        n2 = lp_norm(fc, 2)
        total += n2 * n2
    return total


def _mu0_schedule(spec, slot):
    r = spec.r_schedule
    A = math.fsum(f for a, b, f in spec.intra if slot in (a, b)) + \
        math.fsum(f for a, _, f in spec.links if a == slot)
    B = math.fsum(f for _, b, f in spec.links if b == slot)
    att = math.fsum(R for _, s, R in spec.attach if s == slot)
    nh = len(r.head)
    head = [0.5 * (A * r(0) + att)]
    for k in range(1, nh + 1):
        head.append(0.5 * (A * r(k) + B * r(k - 1)))
    P = r.period
    vals = [0.5 * (A * r.values[j] + B * r.values[(j - 1) % P] / r.ratio) for j in range(P)]
    return Schedule(tuple(vals), r.ratio, tuple(head))


def default_vertex_weights(g: GraphModel) -> GraphModel:
    """Same edges with mu0(v) = 1/2 sum_{u ~ v} R(u, v); total mu0 equals the
    volume when finite."""
    core_mu = [0.5 * math.fsum(r for _, r, _ in g.neighbors(VertexId.core(i))) for i in range(g.n_core)]
    tails = []
    for spec in g.tails:
        mus = tuple(_mu0_schedule(spec, s) for s in range(spec.slots))
        tails.append(_replace_tail(spec, mu_schedules=mus))
    vo = {}
    touched = set()
    for a, b in g.edge_overrides:
        touched.update((a, b))
    for v in touched:
        vo[v] = 0.5 * math.fsum(r for _, r, _ in g.neighbors(v))
    return g.replace(core_mu=core_mu, tails=tails, vertex_overrides=vo,
                     name=None if g.name is None else f"{g.name}+mu0")


def _replace_tail(spec, **kw):
    from dataclasses import replace

    kw.setdefault("declared_sup", None)
    return replace(spec, **kw)
