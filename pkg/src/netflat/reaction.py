"""Semilinear problems dp/dt + Delta p = J(t, p): pointwise reaction fields,
mild solutions by windowed Picard iteration, and related experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .compressed import (ConvergenceRow, ConvergenceTable, SpectralModel, WeightPlan, hybrid_weights,
                         refined_models)
from .errors import BoxExitError, SolverError, ValidationError
from .flat import BoundarySet, FlatFunction, check_topology, lp_norm, vanishes_on
from .graph import GraphModel, VertexId
from .operator import LaplacianOp
from .propagator import SeriesStepper

DEFAULT_BOX = (-10.0, 10.0)


# ---------------------------------------------------------------------------
# reaction maps

@dataclass(frozen=True)
class ReactionMap:
    """J_v(t, u) applied componentwise. ``kind`` is one of zero, logistic,
    decay, bistable."""

    kind: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        p = dict(self.params)
        if self.kind == "logistic":
            if not p.get("K", 1.0) > 0 or not abs(p.get("amp", 0.0)) < 1:
                raise ValidationError("logistic needs K > 0 and |amp| < 1")
        elif self.kind not in ("zero", "decay", "bistable"):
            raise ValidationError(f"unknown reaction {self.kind!r}")
        object.__setattr__(self, "params", tuple(sorted((str(k), float(v)) for k, v in p.items())))

    def param(self, name, default):
        return dict(self.params).get(name, default)

    @property
    def smooth(self) -> bool:
        return True

    def carrying_capacity(self, t):
        K = self.param("K", 1.0)
        return K * (1.0 + self.param("amp", 0.0) * math.sin(self.param("freq", 0.0) * t))

    def __call__(self, t: float, u: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "logistic":
            return u * (1.0 - u / self.carrying_capacity(t))
        if self.kind == "decay":
            return -self.param("rate", 1.0) * u
        a = self.param("a", 0.5)
        return u * (1.0 - u) * (u - a)

    def derivative(self, t: float, u):
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "logistic":
            return 1.0 - 2.0 * u / self.carrying_capacity(t)
        if self.kind == "decay":
            return -self.param("rate", 1.0) + 0.0 * u
        a = self.param("a", 0.5)
        return -3.0 * u * u + 2.0 * (1.0 + a) * u - a

    def lipschitz(self, box=DEFAULT_BOX) -> float:
        """Closed-form bound on |dJ/du| over the box, uniform in t."""
        lo, hi = float(box[0]), float(box[1])
        if self.kind == "zero":
            return 0.0
        if self.kind == "decay":
            return abs(self.param("rate", 1.0))
        if self.kind == "logistic":
            kmin = self.param("K", 1.0) * (1.0 - abs(self.param("amp", 0.0)))
            return 1.0 + 2.0 * max(abs(lo), abs(hi)) / kmin
        a = self.param("a", 0.5)
        pts = [lo, hi] + [u for u in ((1.0 + a) / 3.0,) if lo <= u <= hi]
        return max(abs(-3 * u * u + 2 * (1 + a) * u - a) for u in pts)

    def to_json(self):
        return {"kind": self.kind, **dict(self.params)}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            return cls(obj)
        obj = dict(obj)
        kind = obj.pop("kind", obj.pop("catalog", "zero"))
        return cls(kind, tuple(obj.items()))


def zero():
    return ReactionMap("zero")


def logistic(K=1.0, amp=0.0, freq=0.0):
    return ReactionMap("logistic", (("K", K), ("amp", amp), ("freq", freq)))


def decay(rate=1.0):
    return ReactionMap("decay", (("rate", rate),))


def bistable(a=0.5):
    return ReactionMap("bistable", (("a", a),))


class ReactionField:
    """J(t, p)(v) = J_v(t, p(v)): a default map, optional per-tail maps and
    finitely many vertex exceptions."""

    def __init__(self, default: ReactionMap = None, dimension: int = 1, tail_maps: Mapping = None,
                 exceptions: Mapping = None, box=DEFAULT_BOX, lipschitz: Optional[float] = None):
        self.default = default if default is not None else zero()
        self.dimension = int(dimension)
        self.tail_maps = {int(t): m for t, m in dict(tail_maps or {}).items()}
        self.exceptions = {VertexId(*v): m for v, m in dict(exceptions or {}).items()}
        self.box = (float(box[0]), float(box[1]))
        if not self.box[0] < self.box[1]:
            raise ValidationError("state box must have lo < hi")
        maps = [self.default, *self.tail_maps.values(), *self.exceptions.values()]
        computed = max(m.lipschitz(self.box) for m in maps)
        if lipschitz is not None and lipschitz < computed:
            raise ValidationError(f"declared Lipschitz constant {lipschitz} below certified {computed}")
        self.C1 = float(computed if lipschitz is None else lipschitz)

    @property
    def is_zero(self) -> bool:
        maps = [self.default, *self.tail_maps.values(), *self.exceptions.values()]
        return all(m.kind == "zero" for m in maps)

    @property
    def box_bound(self) -> float:
        return max(abs(self.box[0]), abs(self.box[1]))

    def check(self, graph: GraphModel):
        for t in self.tail_maps:
            if not 0 <= t < graph.n_tails:
                raise ValidationError(f"reaction references unknown tail {t}")
        for v in self.exceptions:
            graph.resolve(v)
        return self

    def tail_map(self, t: int) -> ReactionMap:
        return self.tail_maps.get(int(t), self.default)

    def map_at(self, v: VertexId) -> ReactionMap:
        m = self.exceptions.get(v)
        if m is not None:
            return m
        if v.is_core:
            return self.default
        return self.tail_map(v.tail)

    def exception_horizons(self, graph: GraphModel):
        H = [-1] * graph.n_tails
        for v in self.exceptions:
            if not v.is_core:
                H[v.tail] = max(H[v.tail], v.index)
        return H

    def groups(self, vertices, tail_rows: Sequence[int] = ()):
        """[(map, row indices)] for a list of vertices, then tail rows
        (``len(vertices) + t`` holds tail t's constant)."""
        bucket = {}
        for i, v in enumerate(vertices):
            bucket.setdefault(self.map_at(v), []).append(i)
        n = len(vertices)
        for t in tail_rows:
            bucket.setdefault(self.tail_map(t), []).append(n + t)
        return [(m, np.asarray(rows, dtype=np.int64)) for m, rows in bucket.items()]

    def lipschitz_spot_check(self, rng: np.random.Generator, samples: int = 200, t_max: float = 10.0) -> bool:
        """Sampled difference quotients stay below C1."""
        lo, hi = self.box
        for m in [self.default, *self.tail_maps.values(), *self.exceptions.values()]:
            t = rng.uniform(0, t_max, samples)
            u = rng.uniform(lo, hi, samples)
            w = rng.uniform(lo, hi, samples)
            ok = u != w
            q = np.array([abs(m(ti, np.array([a]))[0] - m(ti, np.array([b]))[0]) / abs(a - b)
                          for ti, a, b in zip(t[ok], u[ok], w[ok])])
            if q.size and q.max() > self.C1 * (1 + 1e-12):
                return False
        return True


def _apply_groups(groups, t, x):
    out = np.empty_like(x)
    for m, rows in groups:
        out[rows] = m(t, x[rows])
    return out


def evaluate_reaction(Jf: ReactionField, t: float, p: FlatFunction) -> FlatFunction:
    if p.dimension != Jf.dimension:
        raise ValidationError(f"reaction dimension {Jf.dimension} vs state dimension {p.dimension}")
    H = tuple(max(a, b) for a, b in zip(p.horizons, Jf.exception_horizons(p.graph)))
    pe = p.expand(H)
    reg = pe.region
    groups = Jf.groups(reg.vertices, range(p.graph.n_tails))
    out = _apply_groups(groups, t, pe.extended())
    return FlatFunction(p.graph, H, out[: reg.n], out[reg.n:])


# ---------------------------------------------------------------------------
# Picard core


def picard_window(step: Callable, react: Callable, X: np.ndarray, s0: int, T0: float, delta: float,
                  nsub: int, tol: float, max_iter: int, box_bound: float, growth: int = 0):
    """One window of the mild-solution fixed point on nodes T0 + j delta.

    ``step(x, s)`` applies S(delta) to a state whose support depth is s and
    returns (y, s'). The Duhamel integral uses composite Simpson for even
    nodes, Simpson 3/8 on the last three intervals for odd nodes >= 3 and the
    trapezoid rule for node 1; S(t - s) is produced by chaining S(delta).
    Returns (node states, iterations, residual history)."""
    P = [X] * (nsub + 1)
    sup = [s0 + j * growth for j in range(nsub + 1)]
    history = []
    for it in range(1, max_iter + 1):
        J = [react(T0 + j * delta, P[j]) for j in range(nsub + 1)]
        Q = [X] + [None] * nsub
        if nsub >= 1:
            y, _ = step(X + (delta / 2) * J[0], sup[0])
            Q[1] = y + (delta / 2) * J[1]
        for j in range(2, nsub + 1):
            if j % 2 == 0:
                a, s = step(Q[j - 2] + (delta / 3) * J[j - 2], sup[j - 2])
                a, _ = step(a, s)
                b, _ = step(J[j - 1], sup[j - 1])
                Q[j] = a + (delta / 3) * (4.0 * b + J[j])
            else:
                a, s = step(Q[j - 3] + (3 * delta / 8) * J[j - 3], sup[j - 3])
                a, s = step(a, s)
                a, _ = step(a, s)
                b, s = step(J[j - 2], sup[j - 2])
                b, _ = step(b + J[j - 1], s)
                Q[j] = a + (3 * delta / 8) * (3.0 * b + J[j])
        diff = max(float(np.max(np.abs(q - p), initial=0.0)) for q, p in zip(Q, P))
        history.append(diff)
        top = max(float(np.max(np.abs(q), initial=0.0)) for q in Q)
        if not math.isfinite(top) or top > box_bound:
            raise BoxExitError(f"state left the box |u| <= {box_bound} near t = {T0}", history)
        P = Q
        if diff <= tol / 10:
            return P, it, history
    raise SolverError(f"Picard iteration did not converge in {max_iter} iterations near t = {T0}", history)


def window_count(C1: float, t1: float, multiple: int = 1) -> int:
    """Smallest window count with windows shorter than 1/(2 C1), rounded up
    to a multiple of ``multiple``."""
    W = max(1, math.floor(2.0 * C1 * t1) + 1)
    multiple = max(1, int(multiple))
    return -(-W // multiple) * multiple


@dataclass
class Trajectory:
    """Node states of a mild solution. ``states`` has shape (M+1, rows, d);
    for series solves rows are a region's explicit rows followed by tail
    rows, for spectral solves the free vertices of a section."""

    times: np.ndarray
    states: np.ndarray
    graph: GraphModel
    region: object = None
    model: object = None
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    propagation_bound: float = 0.0

    @property
    def error_estimate(self) -> float:
        return max((h[-1] for h in self.residuals), default=0.0) + self.propagation_bound

    def state(self, j: int) -> FlatFunction:
        if self.region is None:
            raise ValidationError("spectral trajectories have no flat states")
        n = self.region.n
        x = self.states[j]
        return FlatFunction(self.graph, self.region.horizons, x[:n], x[n:])

    def index_of(self, v) -> int:
        v = self.graph.parse_vertex(v)
        if self.region is not None:
            i = self.region.index.get(v)
            return self.region.n + v.tail if i is None else i
        return self.model.free.index(v)

    def series_at(self, v) -> np.ndarray:
        """(M+1, d) time series at vertex v."""
        return self.states[:, self.index_of(v)]

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[j], t, rel_tol=1e-12, abs_tol=1e-14):
            raise ValidationError(f"time {t} is not a trajectory node")
        return j


def _mild_plan(C1, t1, nodes, grid_multiple):
    if not t1 > 0:
        raise ValidationError("t1 must be positive")
    if nodes < 3:
        raise ValidationError("need at least 3 quadrature nodes per window")
    W = window_count(C1, t1, grid_multiple)
    nsub = nodes - 1
    return W, nsub, t1 / W / nsub


def solve_mild(L: LaplacianOp, Jf: ReactionField, p0: FlatFunction, t1: float, tol: float = 1e-8,
               nodes: int = 17, grid_multiple: int = 1, max_iter: int = 50) -> Trajectory:
    """Mild solution p(t) = S(t) p0 + int_0^t S(t - s) J(s, p(s)) ds."""
    check_topology(L.graph, p0.graph)
    if p0.dimension != Jf.dimension:
        raise ValidationError(f"reaction dimension {Jf.dimension} vs state dimension {p0.dimension}")
    if not tol > 0:
        raise ValidationError("tolerance must be positive")
    Jf.check(L.graph)
    L.require_bounded()
    W, nsub, delta = _mild_plan(Jf.C1, t1, nodes, grid_multiple)
    total = W * nsub
    B = Jf.box_bound
    rel = tol / (30.0 * max(B, 1.0) * total)
    stepper = SeriesStepper(L, delta, rel)
    g = L.graph
    H0 = [max(a, b) for a, b in zip(p0.horizons, Jf.exception_horizons(g))]
    s0 = max(H0, default=-1)
    Hmax = s0 + total * stepper.growth
    horizons = tuple(Hmax for _ in range(g.n_tails))
    region = g.region(horizons)
    stepper.bind(region)
    groups = Jf.groups(region.vertices, range(g.n_tails))
    X = p0.on_graph(g).expand(horizons).extended()
    if np.max(np.abs(X), initial=0.0) > B:
        raise BoxExitError("initial data outside the state box")

    def react(t, x):
        return _apply_groups(groups, t, x)

    states = [X]
    iters, hist = [], []
    s = s0
    for w in range(W):
        P, it, h = picard_window(stepper, react, states[-1], s, w * nsub * delta, delta, nsub,
                                 tol, max_iter, B, stepper.growth)
        states.extend(P[1:])
        iters.append(it)
        hist.append(h)
        s += nsub * stepper.growth
    times = np.arange(total + 1) * delta
    times[-1] = t1
    prop = stepper.plan.remainder * B * 3.0 * total
    return Trajectory(times, np.array(states), g, region=region, iterations=iters, residuals=hist,
                      propagation_bound=prop)


def solve_mild_spectral(model: SpectralModel, Jf: ReactionField, p0, t1: float, tol: float = 1e-8,
                        nodes: int = 17, grid_multiple: int = 1, max_iter: int = 50) -> Trajectory:
    """Same scheme with S(delta) realized by a section's eigenexpansion."""
    W, nsub, delta = _mild_plan(Jf.C1, t1, nodes, grid_multiple)
    Pd = model.transfer_matrix(delta)
    groups = Jf.groups(model.free)
    X = model.restrict(p0)
    B = Jf.box_bound

    def step(x, s):
        return Pd @ x, s

    def react(t, x):
        return _apply_groups(groups, t, x)

    states = [X]
    iters, hist = [], []
    for w in range(W):
        P, it, h = picard_window(step, react, states[-1], 0, w * nsub * delta, delta, nsub,
                                 tol, max_iter, B)
        states.extend(P[1:])
        iters.append(it)
        hist.append(h)
    times = np.arange(W * nsub + 1) * delta
    times[-1] = t1
    return Trajectory(times, np.array(states), model.graph, model=model, iterations=iters, residuals=hist)


# ---------------------------------------------------------------------------
# boundary dynamics


def rk4_adaptive(fun: Callable, y0: np.ndarray, t_out: Sequence[float], tol: float,
                 h0: Optional[float] = None, h_min: float = 1e-12):
    """Classical RK4 with step doubling; local error estimate <= tol.
    Returns the solution at the (increasing) output times."""
    y = np.array(y0, dtype=float)
    t = float(t_out[0])
    out = [y.copy()]
    h = h0 or max((t_out[-1] - t) / 100.0, 1e-6)

    def rk4(t, y, h):
        k1 = fun(t, y)
        k2 = fun(t + h / 2, y + h / 2 * k1)
        k3 = fun(t + h / 2, y + h / 2 * k2)
        k4 = fun(t + h, y + h * k3)
        return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    for target in t_out[1:]:
        while t < target:
            hh = min(h, target - t)
            full = rk4(t, y, hh)
            half = rk4(t + hh / 2, rk4(t, y, hh / 2), hh / 2)
            err = float(np.max(np.abs(half - full))) / 15.0
            if err <= tol or hh <= h_min:
                if hh <= h_min and err > tol:
                    raise SolverError(f"RK4 step underflow at t = {t}")
                t = target if hh == target - t else t + hh
                y = half + (half - full) / 15.0
                h = hh * min(2.0, max(0.5, 0.9 * (tol / err) ** 0.2)) if err > 0 else 2.0 * hh
            else:
                h = hh * max(0.2, 0.9 * (tol / err) ** 0.2)
        out.append(y.copy())
    return np.array(out)


def solve_boundary_ode(Jf: ReactionField, tail: int, q0, t1: float, tol: float = 1e-10, times=None):
    """dq/dt = J_tail(t, q): the dynamics of a tail constant. Returns
    (times, values) with values of shape (len(times), d)."""
    m = Jf.tail_map(tail)
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    times = np.linspace(0.0, t1, 11) if times is None else np.asarray(times, dtype=float)
    if m.kind == "zero":
        return times, np.tile(q0, (len(times), 1))
    vals = rk4_adaptive(lambda t, y: m(t, y), q0, times, tol)
    return times, vals


def spatial_asymptotics_check(L: LaplacianOp, Jf: ReactionField, p0: FlatFunction, t1: float, tail: int,
                              probe_depths: Sequence[int], tol: float = 1e-7, traj: Trajectory = None):
    """For each probe depth on ``tail``: sup over the time grid of
    |p(t, probe) - q(t)| with q the boundary ODE solution from the tail
    constant, and of |p(t, probe) - p_tail(t)| (the solver's tail row)."""
    g = L.graph
    H0 = max(p0.horizons[tail], Jf.exception_horizons(g)[tail])
    if traj is None:
        traj = solve_mild(L, Jf, p0, t1, tol)
    _, q = solve_boundary_ode(Jf, tail, p0.tails[tail], t1, tol / 100, traj.times)
    radius = traj.region.horizons[tail]
    tail_row = traj.series_at(VertexId(tail, radius + 1, 0))
    rows = []
    for d in probe_depths:
        ps = traj.series_at(VertexId(tail, int(d), 0))
        rows.append({
            "depth": int(d),
            "sup_diff_ode": float(np.max(np.abs(ps - q))),
            "structural_deviation": float(np.max(np.abs(ps - tail_row))),
            "inside_data": bool(d <= H0),
            "beyond_support": bool(d > radius),
            "support_radius": int(radius),
        })
    return rows


def gronwall_stability_check(L: LaplacianOp, Jf: ReactionField, p0: FlatFunction, delta: FlatFunction,
                             t1: float, tol: float = 1e-10, factor: float = 1e-3, **kw):
    """Check ||p(t) - q(t)|| <= ||delta|| e^(C1 t) (1 + factor) for the
    solutions from p0 and p0 + delta."""
    p = solve_mild(L, Jf, p0, t1, tol, **kw)
    q = solve_mild(L, Jf, p0 + delta, t1, tol, **kw)
    dn = lp_norm(delta, math.inf)
    n = p.region.n
    qa = q.states
    if q.region.horizons != p.region.horizons:
        # align q onto p's region
        idx = q.region.embed_index(p.region)
        qa = np.concatenate([q.states[:, idx], q.states[:, q.region.n:]], axis=1)
    diffs = np.max(np.abs(p.states - qa), axis=(1, 2))
    bounds = dn * np.exp(Jf.C1 * p.times) * (1 + factor)
    ratio = np.divide(diffs, dn * np.exp(Jf.C1 * p.times), out=np.zeros_like(diffs), where=dn > 0)
    return {
        "holds": bool(np.all(diffs <= bounds)),
        "max_ratio": float(ratio.max()),
        "delta_norm": dn,
        "C1": Jf.C1,
        "times": p.times,
        "diffs": diffs,
        "bounds": bounds,
    }


def semilinear_convergence_experiment(L: LaplacianOp, plan: WeightPlan, omega, Jf: ReactionField,
                                      p0: FlatFunction, t_grid: Sequence[float], n_list: Sequence[int],
                                      depth: int = 16, tol: float = 1e-10, window_radius: int = 8,
                                      refine_tol: float = 1e-6, nodes: int = 17) -> ConvergenceTable:
    """Windowed sup differences between solve_mild on the base operator and
    the same Picard scheme on refined hybrid sections. ``t_grid`` must be
    uniform from 0."""
    base = L.graph
    omega = BoundarySet(omega).check(base)
    if not vanishes_on(p0, omega):
        raise ValidationError("initial data must vanish on the Dirichlet tails")
    for t in omega:
        m = Jf.tail_map(t)
        if np.any(m(0.0, np.zeros(Jf.dimension)) != 0):
            raise ValidationError("reaction on Dirichlet tails must fix 0")
    t_grid = np.asarray(t_grid, dtype=float)
    K = len(t_grid) - 1
    if K < 1 or t_grid[0] != 0 or not np.allclose(np.diff(t_grid), t_grid[-1] / K, rtol=1e-12, atol=0):
        raise ValidationError("t-grid must be uniform and start at 0")
    t1 = float(t_grid[-1])
    window = base.ball(base.root, window_radius).vertices
    traj = solve_mild(L, Jf, p0, t1, tol, nodes, grid_multiple=K)
    stride = (len(traj.times) - 1) // K
    ref = np.array([[traj.states[j * stride, traj.index_of(v)] for v in window] for j in range(K + 1)])
    fh = max(p0.horizons, default=-1)
    rows = []
    for n in n_list:
        hyb = hybrid_weights(base, plan, base.root, n)

        def evaluate(model):
            tr = solve_mild_spectral(model, Jf, p0.on_graph(model.graph), t1, tol, nodes, grid_multiple=K)
            return np.array([[tr.states[j * stride, model.free.index(v)] for v in window]
                             for j in range(K + 1)])

        start = max(depth, n + 2, window_radius + 1, fh + 2)
        _, vals, D_used, defect = refined_models(
            lambda D: SpectralModel(hyb.graph, omega, D), start, evaluate, refine_tol)
        for j, t in enumerate(t_grid):
            diff = float(np.max(np.abs(vals[j] - ref[j]), initial=0.0))
            rows.append(ConvergenceRow(int(n), float(t), diff, D_used, defect))
    return ConvergenceTable(rows, tuple(window))
