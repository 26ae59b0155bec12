"""Compressed models: finite-volume reweighting, hybrid weights, finite
sections with Dirichlet clamping, and their eigenexpansions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NumericError, ValidationError
from .flat import BoundarySet, FlatFunction, check_topology, vanishes_on
from .graph import GraphModel, VertexId
from .operator import LaplacianOp, default_vertex_weights
from .propagator import propagate
from .schedule import Schedule

MAX_SECTION_DEPTH = 256


@dataclass(frozen=True)
class WeightPlan:
    """Finite-volume edge weights rho and companion vertex weights.

    Tail edges at depth k get ``tail_scale * gamma**k`` times their base
    length; core and attachment edges get ``core_scale`` times theirs.
    Vertex weights are mu0 (half the incident rho) or, with
    ``companion="geometric"``, ``mu_scale * gamma**k`` times the base
    weight on tails and the base weight on the core.
    """

    gamma: float
    core_scale: float = 1.0
    tail_scale: Optional[float] = None
    companion: str = "mu0"
    mu_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValidationError("plan ratio gamma must lie in (0, 1)")
        if not self.core_scale > 0 or (self.tail_scale is not None and not self.tail_scale > 0):
            raise ValidationError("plan scales must be positive")
        if self.companion not in ("mu0", "geometric"):
            raise ValidationError(f"unknown companion weights {self.companion!r}")

    def apply(self, g: GraphModel) -> GraphModel:
        if g.edge_overrides or g.vertex_overrides:
            raise ValidationError("plans apply to graphs without overrides")
        ts = self.core_scale if self.tail_scale is None else self.tail_scale
        tails = []
        for spec in g.tails:
            r = spec.r_schedule
            rho = Schedule(tuple(ts * v for v in r.values), r.ratio * self.gamma,
                           tuple(ts * h * self.gamma ** k for k, h in enumerate(r.head)))
            attach = tuple((c, s, self.core_scale * R) for c, s, R in spec.attach)
            mus = spec.mu_schedules
            if self.companion == "geometric":
                mus = tuple(Schedule(tuple(self.mu_scale * v for v in m.values), m.ratio * self.gamma,
                                     tuple(self.mu_scale * h * self.gamma ** k for k, h in enumerate(m.head)))
                            for m in mus)
            tails.append(replace(spec, r_schedule=rho, attach=attach, mu_schedules=mus, declared_sup=None))
        edges = [(i, j, self.core_scale * R) for i, j, R in g.core_edges]
        out = g.replace(core_edges=edges, tails=tails, name=None if g.name is None else f"{g.name}+rho")
        if self.companion == "mu0":
            out = default_vertex_weights(out)
        return out

    def to_json(self):
        d = {"gamma": self.gamma, "core_scale": self.core_scale, "companion": self.companion}
        if self.tail_scale is not None:
            d["tail_scale"] = self.tail_scale
        if self.companion == "geometric":
            d["mu_scale"] = self.mu_scale
        return d

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["gamma"]), float(obj.get("core_scale", 1.0)),
                   None if obj.get("tail_scale") is None else float(obj["tail_scale"]),
                   obj.get("companion", "mu0"), float(obj.get("mu_scale", 1.0)))


def finite_volume_weights(g: GraphModel, gamma: float, core_scale: float = 1.0, **kw) -> WeightPlan:
    plan = WeightPlan(gamma, core_scale, **kw)
    pg = plan.apply(g)
    if not math.isfinite(pg.volume()):
        raise ValidationError("plan volume is not finite")
    return plan


def plan_volume(g: GraphModel, plan: WeightPlan) -> float:
    return plan.apply(g).volume()


@dataclass(frozen=True)
class HybridWeights:
    """R_n = R on edges with both ends within distance n of the root, rho
    elsewhere; mu_n = nu within distance n, the plan's weights elsewhere."""

    base: GraphModel
    plan: WeightPlan
    root: VertexId
    n: int
    graph: GraphModel = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.graph is None:
            object.__setattr__(self, "graph", _hybrid_graph(self.base, self.plan, self.root, self.n))


def hybrid_weights(base: GraphModel, plan: WeightPlan, root=None, n: int = 0) -> HybridWeights:
    if n < 0:
        raise ValidationError("hybrid radius must be nonnegative")
    root = base.root if root is None else base.parse_vertex(root)
    return HybridWeights(base, plan, root, int(n))


def _hybrid_graph(base, plan, root, n):
    pg = plan.apply(base)
    ball = base.ball(root, n)
    eo = {}
    for u, v, R in ball.edges:
        eo[(u, v)] = R
    vo = {v: base.mu(v) for v in ball.vertices}
    # mu0 companions on the plan already carry their own overrides; keep them
    # outside the ball
    for v, m in pg.vertex_overrides.items():
        vo.setdefault(v, m)
    return pg.replace(root=root, edge_overrides=eo, vertex_overrides=vo,
                      name=None if base.name is None else f"{base.name}+hybrid{n}")


class SectionValues:
    """Values on the vertices of a finite section."""

    def __init__(self, vertices, values):
        self.vertices = tuple(vertices)
        self.values = np.asarray(values)
        self._index = {v: i for i, v in enumerate(self.vertices)}

    def evaluate(self, v):
        return self.values[self._index[VertexId(*v)]]

    def at(self, vertices) -> np.ndarray:
        return self.values[[self._index[VertexId(*v)] for v in vertices]]


class SpectralModel:
    """Finite section of Delta_Omega on ball(root, D).

    Cut vertices on Omega tails (and any extra ``dirichlet`` vertices) are
    clamped to 0; other cut vertices lose their outside edges. The operator
    on the remaining unknowns is M^{-1} K with K a conductance Laplacian;
    A = M^{-1/2} K M^{-1/2} is diagonalized through the accurate inverse of
    K + s M, which keeps small eigenvalues of graded sections accurate.
    """

    def __init__(self, graph: GraphModel, omega=(), depth: Optional[int] = None, dirichlet=(),
                 shift: float = 1.0):
        if depth is None:
            if not graph.is_finite:
                raise ValidationError("infinite graphs need an explicit section depth")
            depth = min(max(1, graph.n_core), MAX_SECTION_DEPTH)
        if depth < 1:
            raise ValidationError("section depth must be >= 1")
        if depth > MAX_SECTION_DEPTH:
            raise ValidationError(f"section depth above {MAX_SECTION_DEPTH}")
        self.graph = graph
        self.omega = BoundarySet(omega).check(graph)
        self.depth = int(depth)
        self.shift = float(shift)
        sub = graph.ball(graph.root, self.depth)
        self.section = sub
        extra = {graph.parse_vertex(v) for v in dirichlet}
        clamped = {v for v in sub.cut if not v.is_core and v.tail in self.omega} | extra
        self.vertices = sub.vertices
        self.clamped = tuple(sorted(clamped))
        self.free = tuple(v for v in sub.vertices if v not in clamped)
        fidx = {v: i for i, v in enumerate(self.free)}
        nf = len(self.free)
        W = np.zeros((nf, nf))
        g = np.zeros(nf)
        for u, v, R in sub.edges:
            c = 1.0 / R
            iu, iv = fidx.get(u), fidx.get(v)
            if iu is not None and iv is not None:
                W[iu, iv] = c
                W[iv, iu] = c
            elif iu is not None:
                g[iu] += c
            elif iv is not None:
                g[iv] += c
        mu = np.array([graph.mu(v) for v in self.free])
        self.W, self.margin, self.mu = W, g, mu
        sq = np.sqrt(mu)
        self.sqrt_mu = sq
        diag = g + W.sum(axis=1)
        A = -W / (sq[:, None] * sq[None, :])
        A[np.diag_indices(nf)] = diag / mu
        self.A = A
        self._free_index = fidx
        self._eig()

    def _eig(self):
        nf = len(self.free)
        if nf == 0:
            self.eigenvalues = np.zeros(0)
            self.eigenvectors = np.zeros((0, 0))
            self.min_pivot = math.inf
            return
        H, piv = _kernels.mmatrix_inverse(self.W, self.margin + self.shift * self.mu)
        self.min_pivot = float(piv.min())
        if not np.all(np.isfinite(H)):
            raise NumericError(f"section inverse not finite (min pivot {self.min_pivot:.3e}, size {nf})")
        sq = self.sqrt_mu
        G = sq[:, None] * H * sq[None, :]
        G = 0.5 * (G + G.T)
        try:
            sig, phi = np.linalg.eigh(G)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigensolver failed: {exc}; min pivot {self.min_pivot:.3e}") from exc
        sig, phi = sig[::-1], phi[:, ::-1]
        tiny = np.finfo(float).tiny
        with np.errstate(divide="ignore"):
            lam = np.where(sig > tiny, 1.0 / np.maximum(sig, tiny) - self.shift, np.inf)
        # noise below the shift-invert resolution is clamped to zero
        lam = np.where(np.abs(lam) < 1e-13 * max(1.0, self.shift), np.maximum(lam, 0.0), lam)
        self.eigenvalues = lam
        self.eigenvectors = phi

    @property
    def lambda0(self) -> float:
        return float(self.eigenvalues[0]) if self.eigenvalues.size else math.inf

    def restrict(self, f) -> np.ndarray:
        """Values of f on the free vertices, shape (n_free, d)."""
        if isinstance(f, FlatFunction):
            check_topology(self.graph, f.graph)
            return np.array([f.evaluate(v) for v in self.free]).reshape(len(self.free), f.dimension)
        if isinstance(f, SectionValues):
            return np.asarray(f.at(self.free), dtype=float).reshape(len(self.free), -1)
        x = np.asarray(f, dtype=float)
        if x.shape[0] == len(self.vertices):
            idx = [self.section.index(v) for v in self.free]
            x = x[idx]
        return x.reshape(len(self.free), -1)

    def decay_factors(self, t: float) -> np.ndarray:
        if t == 0:
            return np.ones_like(self.eigenvalues)
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(-self.eigenvalues * t)
        return np.where(np.isfinite(self.eigenvalues), e, 0.0)

    def propagate_free(self, x: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return x.copy()
        sq = self.sqrt_mu[:, None]
        c = self.eigenvectors.T @ (sq * x)
        return (self.eigenvectors @ (self.decay_factors(t)[:, None] * c)) / sq

    def transfer_matrix(self, t: float) -> np.ndarray:
        """Dense S_section(t) acting on free-vertex values."""
        phi = self.eigenvectors
        P = (phi * self.decay_factors(t)[None, :]) @ phi.T
        return P / self.sqrt_mu[:, None] * self.sqrt_mu[None, :]

    def embed(self, xf: np.ndarray) -> SectionValues:
        out = np.zeros((len(self.vertices), xf.shape[1]))
        for i, v in enumerate(self.free):
            out[self.section.index(v)] = xf[i]
        return SectionValues(self.vertices, out)

    def __repr__(self):
        return (f"SpectralModel(depth={self.depth}, free={len(self.free)}, clamped={len(self.clamped)}, "
                f"lambda0={self.lambda0:.6g})")


def build_spectral_model(g, plan: Optional[WeightPlan] = None, omega=(), depth: Optional[int] = None,
                         dirichlet=(), shift: float = 1.0) -> SpectralModel:
    """``g`` may be a GraphModel (reweighted by ``plan`` if given) or a
    HybridWeights."""
    if isinstance(g, HybridWeights):
        graph = g.graph
    elif plan is not None:
        graph = plan.apply(g)
    else:
        graph = g
    return SpectralModel(graph, omega, depth, dirichlet, shift)


def spectral_propagate(model: SpectralModel, f, t: float) -> SectionValues:
    """sum_i exp(-lambda_i t) <f, phi_i> phi_i mapped back through M^{-1/2};
    clamped vertices stay 0."""
    if t < 0:
        raise ValidationError("time must be nonnegative")
    x = model.restrict(f)
    return model.embed(model.propagate_free(x, t))


def dirichlet_lower_bound(g: GraphModel, plan: Optional[WeightPlan] = None) -> float:
    """1 / (4 mu(G) diam(G)) for the (re)weighted graph."""
    graph = plan.apply(g) if plan is not None else g
    m = graph.total_mu()
    d = graph.diameter()
    if not (math.isfinite(m) and math.isfinite(d)) or d == 0:
        raise ValidationError("Dirichlet bound needs finite measure and a finite positive diameter")
    return 1.0 / (4.0 * m * d)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    t: float
    sup_diff: float
    depth_used: int
    refinement_defect: float


@dataclass
class ConvergenceTable:
    rows: list
    window: tuple

    def max_by_n(self) -> dict:
        out = {}
        for r in self.rows:
            out[r.n] = max(out.get(r.n, 0.0), r.sup_diff)
        return out

    def nonincreasing(self, slack: float) -> bool:
        vals = [v for _, v in sorted(self.max_by_n().items())]
        return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def refined_models(make, start_depth: int, evaluate, refine_tol: float, max_depth: int = MAX_SECTION_DEPTH):
    """Double the section depth until results at D and 2D agree within
    ``refine_tol`` on the window. ``make(D)`` builds a model and
    ``evaluate(model)`` returns an array of window values.
    Returns (model at 2D, values at 2D, 2D, defect)."""
    D = int(start_depth)
    if 2 * D > max_depth:
        D = max_depth // 2
    prev = make(D)
    prev_vals = evaluate(prev)
    while True:
        nxt = make(2 * D)
        vals = evaluate(nxt)
        defect = float(np.max(np.abs(vals - prev_vals), initial=0.0))
        if defect <= refine_tol:
            return nxt, vals, 2 * D, defect
        if 4 * D > max_depth:
            raise NumericError(f"section refinement did not settle by depth {2 * D} (defect {defect:.3e})")
        D *= 2
        prev, prev_vals = nxt, vals


def linear_convergence_experiment(L: LaplacianOp, plan: WeightPlan, omega, f: FlatFunction,
                                  t_grid: Sequence[float], n_list: Sequence[int], depth: int = 16,
                                  window_radius: int = 8, eps: float = 1e-12,
                                  refine_tol: float = 1e-6) -> ConvergenceTable:
    """sup over the window of |S(t) f - S_n(t) f| for each n and t, with
    S_n realized on refined spectral sections of the hybrid weights."""
    base = L.graph
    omega = BoundarySet(omega).check(base)
    if not vanishes_on(f, omega):
        raise ValidationError("initial data must vanish on the Dirichlet tails")
    window = base.ball(base.root, window_radius).vertices
    t_grid = [float(t) for t in t_grid]
    ref = []
    for t in t_grid:
        out, _ = propagate(L, f, t, eps)
        ref.append(np.array([out.evaluate(v) for v in window]))
    ref = np.array(ref)  # (T, W, d)
    rows = []
    fh = max(f.horizons, default=-1)
    for n in n_list:
        hyb = hybrid_weights(base, plan, base.root, n)

        def evaluate(model):
            x = model.restrict(f.on_graph(model.graph))
            return np.array([model.embed(model.propagate_free(x, t)).at(window) for t in t_grid])

        start = max(depth, n + 2, window_radius + 1, fh + 2)
        _, vals, D_used, defect = refined_models(
            lambda D: SpectralModel(hyb.graph, omega, D), start, evaluate, refine_tol)
        for j, t in enumerate(t_grid):
            diff = float(np.max(np.abs(vals[j] - ref[j]), initial=0.0))
            rows.append(ConvergenceRow(int(n), t, diff, D_used, defect))
    return ConvergenceTable(rows, tuple(window))
