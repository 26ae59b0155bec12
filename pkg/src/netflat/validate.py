"""Seeded property suite behind ``netflat validate``.

Each family returns {"pass", "checks", "max_violation"}; the report holds
no timings so a fixed seed gives a byte-identical file.
"""
from __future__ import annotations

import copy
import math

import numpy as np

from . import families
from .compressed import SpectralModel, build_spectral_model, dirichlet_lower_bound, spectral_propagate
from .flat import FlatFunction, jump_edges, lp_norm, mass, mul, value_range, vanishes_on
from .operator import LaplacianOp, bilinear_form, default_vertex_weights, region_laplacian
from .propagator import KernelQuery, decay_bound, heat_kernel, propagate
from .reaction import logistic, ReactionField

FAMILIES = ("symmetry", "nonnegativity", "positivity", "conservation", "contraction", "semigroup",
            "kernel", "decay", "spectral", "dirichlet", "flat_closure", "ideal", "lipschitz")
FAULTS = ("weight-sign",)


def random_flat(graph, rng, radius: int = 6, dimension: int = 1, nonneg: bool = False,
                zero_tails: bool = False) -> FlatFunction:
    """Random values on a ball around the root, random tail constants."""
    ball = graph.ball(graph.root, radius)
    lo = 0.0 if nonneg else -1.0
    explicit = {v: rng.uniform(lo, 1.0, dimension) for v in ball.vertices if rng.random() < 0.7}
    tails = {} if zero_tails else {t: rng.uniform(lo, 1.0, dimension) for t in range(graph.n_tails)}
    return FlatFunction.from_values(graph, explicit, tails, dimension=dimension)


def fixture_graphs(rng):
    return [families.ray_unit(), families.spider(3), families.fixture10(),
            families.random_graph(10, rng)]


def _laplacian_inner(L, f, g, fault=None):
    """<Delta f, g>_mu; ``fault`` flips the sign of one directed conductance."""
    h = tuple(max(a, b) + 1 for a, b in zip(f.horizons, g.horizons))
    fe = f.expand(h)
    ge = g.expand(h)
    reg = fe.region
    if fault == "weight-sign":
        reg = copy.copy(reg)
        cond = reg.cond.copy()
        cond[0] *= -1.0
        reg.cond = cond
    df = region_laplacian(reg, fe.extended())
    return float((df * ge.values * reg.mu[:, None]).sum())


class _Family:
    def __init__(self):
        self.checks = 0
        self.worst = 0.0
        self.ok = True

    def record(self, violation: float, passed: bool):
        self.checks += 1
        self.worst = max(self.worst, float(violation))
        self.ok = self.ok and bool(passed)

    def report(self):
        return {"pass": self.ok, "checks": self.checks, "max_violation": float(self.worst)}


def _symmetry(rng, n, fault):
    fam = _Family()
    for g in fixture_graphs(rng):
        L = LaplacianOp(g)
        for _ in range(n):
            f = random_flat(g, rng, zero_tails=True)
            h = random_flat(g, rng)
            B = bilinear_form(L, f, h)
            lhs = _laplacian_inner(L, f, h, fault)
            v = abs(lhs - B) / (1 + abs(B))
            fam.record(v, v <= 1e-10)
    return fam


def _nonnegativity(rng, n):
    fam = _Family()
    for g in fixture_graphs(rng):
        L = LaplacianOp(g)
        for _ in range(n):
            f = random_flat(g, rng)
            B = bilinear_form(L, f, f)
            fam.record(max(0.0, -B), B >= 0)
    return fam


def _positivity(rng, n, eps=1e-8):
    fam = _Family()
    for g in fixture_graphs(rng):
        L = LaplacianOp(g)
        for _ in range(n):
            f = random_flat(g, rng, nonneg=True)
            for t in (0.1, 1.0):
                out, _ = propagate(L, f, t, eps)
                m = min(out.values.min(), out.tails.min(initial=0.0))
                fam.record(max(0.0, -m), m >= -(eps + 1e-12))
    return fam


def _conservation(rng, n, eps=1e-10):
    fam = _Family()
    for g in fixture_graphs(rng):
        L = LaplacianOp(g)
        for _ in range(n):
            f = random_flat(g, rng, zero_tails=True)
            out, _ = propagate(L, f, 1.0, eps)
            v = abs(mass(out) - mass(f))
            fam.record(v, v <= 1e-7)
    return fam


def _contraction(rng, n, eps=1e-10):
    fam = _Family()
    for g in fixture_graphs(rng):
        L = LaplacianOp(g)
        for _ in range(n):
            f = random_flat(g, rng, zero_tails=g.n_tails > 0)
            out, _ = propagate(L, f, 0.5, eps)
            for p in (1, 2, math.inf):
                a, b = lp_norm(out, p), lp_norm(f, p)
                fam.record(max(0.0, a - b), a <= b * (1 + 1e-9) + eps)
    return fam


def _semigroup(rng, n, eps=1e-10):
    fam = _Family()
    for g in fixture_graphs(rng):
        L = LaplacianOp(g)
        for _ in range(n):
            f = random_flat(g, rng)
            t, s = rng.choice([0.1, 0.5], 2)
            a, _ = propagate(L, f, t + s, eps)
            b, _ = propagate(L, propagate(L, f, s, eps)[0], t, eps)
            v = lp_norm(a - b, math.inf)
            fam.record(v, v <= 3 * eps)
    return fam


def _kernel(rng, n, eps=1e-10):
    """Positivity and the K2 closed form."""
    fam = _Family()
    L = LaplacianOp(families.k2())
    val = heat_kernel(L, KernelQuery(0.5, "a", "b", eps))
    v = abs(val - (1 - math.exp(-1)) / 2)
    fam.record(v, v <= 1e-8)
    g = families.fixture10()
    L = LaplacianOp(g)
    for _ in range(n):
        u, w = (int(x) for x in rng.integers(0, 10, 2))
        val = heat_kernel(L, KernelQuery(float(rng.uniform(0.1, 2)), f"v{w}", f"v{u}", eps))
        fam.record(max(0.0, -val), val >= -eps)
    return fam


def _decay(rng, n, eps=1e-10):
    fam = _Family()
    g = families.ray_unit()
    L = LaplacianOp(g)
    for _ in range(n):
        src = int(rng.integers(0, 6))
        t = float(rng.choice([0.1, 1.0]))
        f = FlatFunction.delta(g, f"t0:{src}")
        out, _ = propagate(L, f, t, eps)
        for d in range(0, 16):
            val = float(out.evaluate(f"t0:{src + d}")[0])
            bound = decay_bound(L, t, d, g.mu(f"t0:{src}"))
            fam.record(max(0.0, abs(val) - bound), abs(val) <= bound + eps)
    return fam


def _spectral(rng, n):
    fam = _Family()
    for g in (families.k2(), families.path(3), families.fixture10()):
        L = LaplacianOp(g)
        model = build_spectral_model(g)
        for _ in range(n):
            f = random_flat(g, rng)
            for t in (0.5, 2.0):
                a = spectral_propagate(model, f, t)
                b, _ = propagate(L, f, t, 1e-12)
                v = max(float(np.max(np.abs(a.evaluate(u) - b.evaluate(u)))) for u in model.vertices)
                fam.record(v, v <= 1e-8)
    return fam


def _dirichlet(rng, n):
    fam = _Family()
    graphs = [families.k2(), families.path(3), families.fixture10()]
    graphs += [families.random_graph(8, rng) for _ in range(n)]
    for g in graphs:
        g0 = default_vertex_weights(g)
        clamp = [g0.label(g0.root)]
        lam = SpectralModel(g0, (), 1, dirichlet=clamp).lambda0
        bound = dirichlet_lower_bound(g0)
        fam.record(max(0.0, bound - lam), lam >= bound - 1e-10)
    return fam


def _flat_closure(rng, n):
    fam = _Family()
    for g in fixture_graphs(rng):
        for _ in range(n):
            f = random_flat(g, rng)
            h = random_flat(g, rng)
            for out in (f + h, f * h, -f):
                ok = len(jump_edges(out)) < math.inf and len(value_range(out)) <= out.values.shape[0] + g.n_tails
                fam.record(0.0 if ok else 1.0, ok)
            # pointwise agreement at a few vertices
            ball = g.ball(g.root, 7).vertices
            v = max(float(np.max(np.abs((f * h).evaluate(u) - f.evaluate(u) * h.evaluate(u)))) for u in ball)
            fam.record(v, v == 0.0)
    return fam


def _ideal(rng, n):
    fam = _Family()
    g = families.spider(3)
    for _ in range(n):
        omega = {int(rng.integers(0, 3))}
        f = random_flat(g, rng)
        z = FlatFunction(g, f.horizons, f.values, np.where(np.arange(3)[:, None] == list(omega), 0.0, f.tails))
        h = random_flat(g, rng)
        ok = vanishes_on(z * h, omega) and vanishes_on(h * z, omega) and vanishes_on(z + z, omega)
        fam.record(0.0 if ok else 1.0, ok)
    return fam


def _lipschitz(rng, n):
    fam = _Family()
    for m in (logistic(), logistic(K=2.0, amp=0.3, freq=1.0)):
        J = ReactionField(m, box=(-1.0, 2.0))
        ok = J.lipschitz_spot_check(rng, samples=20 * n)
        fam.record(0.0 if ok else 1.0, ok)
    return fam


def run_suite(seed: int = 0, fault: str | None = None, n: int = 5) -> dict:
    """Run every family with one seeded generator per family."""
    if fault is not None and fault not in FAULTS:
        from .errors import ValidationError

        raise ValidationError(f"unknown fault {fault!r}; choose from {FAULTS}")
    runners = {
        "symmetry": lambda r: _symmetry(r, n, fault),
        "nonnegativity": lambda r: _nonnegativity(r, n),
        "positivity": lambda r: _positivity(r, n),
        "conservation": lambda r: _conservation(r, n),
        "contraction": lambda r: _contraction(r, n),
        "semigroup": lambda r: _semigroup(r, n),
        "kernel": lambda r: _kernel(r, n),
        "decay": lambda r: _decay(r, n),
        "spectral": lambda r: _spectral(r, n),
        "dirichlet": lambda r: _dirichlet(r, n),
        "flat_closure": lambda r: _flat_closure(r, n),
        "ideal": lambda r: _ideal(r, n),
        "lipschitz": lambda r: _lipschitz(r, n),
    }
    out = {}
    for k, name in enumerate(FAMILIES):
        rng = np.random.default_rng([seed, k])
        out[name] = runners[name](rng).report()
    return {
        "seed": int(seed),
        "fault": fault,
        "families": out,
        "all_pass": all(r["pass"] for r in out.values()),
    }
