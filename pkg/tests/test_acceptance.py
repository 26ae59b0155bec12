"""Acceptance checks, one test per criterion. Each prints a PASS/FAIL line
with the worst observed quantity before asserting."""
import json
import math
import os

import numpy as np
import pytest

from netflat import families
from netflat.cli import main
from netflat.compressed import (SpectralModel, WeightPlan, build_spectral_model, dirichlet_lower_bound,
                                linear_convergence_experiment, spectral_propagate)
from netflat.flat import FlatFunction, inner, lp_norm, mass
from netflat.io import emit_config, parse_config
from netflat.operator import LaplacianOp, apply_laplacian, bilinear_form, default_vertex_weights
from netflat.propagator import KernelQuery, decay_bound, heat_kernel, propagate
from netflat.reaction import (ReactionField, gronwall_stability_check, logistic, semilinear_convergence_experiment,
                              solve_mild, spatial_asymptotics_check, zero)
from netflat.validate import random_flat

from oracles import dense_laplacian, mol_rk4

BOX = (-1.0, 2.0)
SEED = 20240601


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, detail
    return emit


def graphs(rng):
    return [families.ray_unit(), families.spider(3), families.fixture10(), families.random_graph(10, rng)]


def ray_step():
    ray = families.ray_unit()
    return ray, FlatFunction.from_values(ray, {f"t0:{k}": 1.0 for k in range(3)})


def test_c01_form_identity(report):
    rng = np.random.default_rng([SEED, 1])
    worst, count = 0.0, 0
    gs = graphs(rng)
    for k in range(200):
        g = gs[k % len(gs)]
        L = LaplacianOp(g)
        f, h = random_flat(g, rng), random_flat(g, rng)
        lhs = inner(apply_laplacian(L, f), h)
        B = bilinear_form(L, f, h)
        rhs = inner(f, apply_laplacian(L, h)) if g.n_tails == 0 else None
        if rhs is None:
            # <f, Delta h> needs a summable f on infinite tails
            f0 = FlatFunction(g, f.horizons, f.values, np.zeros_like(f.tails))
            lhs0 = inner(apply_laplacian(L, f0), h)
            sym = abs(lhs0 - inner(f0, apply_laplacian(L, h))) / (1 + abs(B))
        else:
            sym = abs(lhs - rhs) / (1 + abs(B))
        worst = max(worst, abs(lhs - B) / (1 + abs(B)), sym)
        count += 1
    report("criterion 1 form identity", worst <= 1e-10, f"{count} pairs, max rel violation {worst:.2e}")


def test_c02_constants(report):
    worst, exact = 0.0, True
    for g in graphs(np.random.default_rng([SEED, 2])):
        L = LaplacianOp(g)
        one = FlatFunction.constant(g)
        d1 = apply_laplacian(L, one)
        exact = exact and not np.any(d1.values) and not np.any(d1.tails)
        for t in (0.1, 1.0, 10.0):
            eps = 1e-8
            out, _ = propagate(L, one, t, eps)
            dev = lp_norm(out - one, math.inf)
            worst = max(worst, dev / eps)
    report("criterion 2 constants", exact and worst <= 1.0, f"Delta 1 exactly 0: {exact}, max deviation {worst:.2e} eps")


def test_c03_positivity(report):
    rng = np.random.default_rng([SEED, 3])
    eps = 1e-8
    gs = graphs(rng)
    lo = math.inf
    for k in range(100):
        g = gs[k % len(gs)]
        L = LaplacianOp(g)
        f = random_flat(g, rng, nonneg=True)
        for t in (0.1, 1.0, 5.0):
            out, _ = propagate(L, f, t, eps)
            lo = min(lo, out.values.min(initial=math.inf), out.tails.min(initial=math.inf))
    report("criterion 3 positivity", lo >= -(eps + 1e-12), f"min value {lo:.3e}")


def test_c04_conservation(report):
    rng = np.random.default_rng([SEED, 4])
    worst = 0.0
    for g in graphs(rng) + [families.k2(), families.path(3), families.lattice2d(3)]:
        L = LaplacianOp(g)
        for _ in range(5):
            f = random_flat(g, rng, zero_tails=True)
            for t in (0.1, 1.0, 3.0):
                out, _ = propagate(L, f, t, 1e-10)
                worst = max(worst, abs(mass(out) - mass(f)))
    report("criterion 4 conservation", worst <= 1e-7, f"max |mass drift| {worst:.2e}")


def test_c05_contraction(report):
    rng = np.random.default_rng([SEED, 5])
    eps = 1e-10
    worst = -math.inf
    for g in graphs(rng):
        L = LaplacianOp(g)
        for _ in range(10):
            for p in (1, 2, math.inf):
                f = random_flat(g, rng, zero_tails=p != math.inf)
                for t in (0.1, 1.0):
                    out, _ = propagate(L, f, t, eps)
                    a, b = lp_norm(out, p), lp_norm(f, p)
                    worst = max(worst, a - (b * (1 + 1e-9) + eps))
    report("criterion 5 contraction", worst <= 0, f"max excess over bound {worst:.2e}")


def test_c06_semigroup(report):
    rng = np.random.default_rng([SEED, 6])
    eps = 1e-10
    worst = 0.0
    for g in graphs(rng):
        L = LaplacianOp(g)
        for _ in range(3):
            f = random_flat(g, rng)
            for t in (0.1, 0.5):
                for s in (0.1, 0.5):
                    a, _ = propagate(L, f, t + s, eps)
                    b, _ = propagate(L, propagate(L, f, s, eps)[0], t, eps)
                    worst = max(worst, lp_norm(a - b, math.inf))
    report("criterion 6 semigroup", worst <= 3 * eps, f"max sup difference {worst:.2e} (3 eps = {3 * eps:.0e})")


def test_c07_kernel_decay(report):
    ray = families.ray_unit()
    L = LaplacianOp(ray)
    eps = 1e-10
    worst = -math.inf
    n = 0
    for src in range(6):
        for t in (0.1, 1.0):
            v = f"t0:{src}"
            for d in range(16):
                for u in {f"t0:{src + d}", f"t0:{max(src - d, 0)}"}:
                    if ray.combinatorial_distance(u, v) != d:
                        continue
                    val = heat_kernel(L, KernelQuery(t, v, u, eps))
                    worst = max(worst, abs(val) - decay_bound(L, t, d, ray.mu(v)) - eps)
                    n += 1
    k2 = heat_kernel(LaplacianOp(families.k2()), KernelQuery(0.5, "a", "b", 1e-12))
    err = abs(k2 - (1 - math.exp(-1)) / 2)
    report("criterion 7 kernel decay", worst <= 0 and err <= 1e-8,
           f"{n} queries, max excess {worst:.2e}; K2 error {err:.2e}")


def test_c08_spectral_vs_series(report):
    rng = np.random.default_rng([SEED, 8])
    worst = 0.0
    for g in (families.k2(), families.path(3), families.fixture10()):
        L = LaplacianOp(g)
        model = build_spectral_model(g)
        for _ in range(5):
            f = random_flat(g, rng)
            for t in (0.5, 2.0):
                a = spectral_propagate(model, f, t)
                b, _ = propagate(L, f, t, 1e-12)
                worst = max(worst, max(float(np.max(np.abs(a.evaluate(u) - b.evaluate(u)))) for u in model.vertices))
    report("criterion 8 spectral vs series", worst <= 1e-8, f"max sup difference {worst:.2e}")


def test_c09_dirichlet_bound(report):
    rng = np.random.default_rng([SEED, 9])
    gs = [families.k2(), families.path(3), families.path(6), families.fixture10()]
    gs += [families.random_graph(8, rng) for _ in range(4)]
    worst = math.inf
    n = 0
    for g in gs:
        g0 = default_vertex_weights(g)
        bound = dirichlet_lower_bound(g0)
        labels = g0.core_labels
        for clamp in ([labels[0]], [labels[-1]], labels[: max(1, len(labels) // 2)]):
            lam = SpectralModel(g0, (), dirichlet=clamp).lambda0
            worst = min(worst, lam - bound)
            n += 1
    report("criterion 9 Dirichlet bound", worst >= -1e-10, f"{n} sections, min lambda0 - bound {worst:.3e}")


def test_c10_spatial_asymptotics(report):
    ray = families.ray_unit()
    L = LaplacianOp(ray)
    J = ReactionField(logistic(), box=BOX)
    p0 = FlatFunction.from_values(ray, {f"t0:{k}": 1.0 for k in range(3)}, {0: 0.2})
    traj = solve_mild(L, J, p0, 1.0, 1e-7)
    row = spatial_asymptotics_check(L, J, p0, 1.0, 0, [20], 1e-7, traj=traj)[0]
    R = row["support_radius"]
    beyond = spatial_asymptotics_check(L, J, p0, 1.0, 0, [R + 1, R + 5, R + 50], 1e-7, traj=traj)
    dev = max(r["structural_deviation"] for r in beyond)
    ok = row["sup_diff_ode"] <= 1e-6 and dev == 0.0
    report("criterion 10 spatial asymptotics", ok,
           f"depth 20 vs ODE {row['sup_diff_ode']:.2e}, deviation beyond radius {R}: {dev!r}")


def _convergence(mode):
    ray, f = ray_step()
    L = LaplacianOp(ray)
    t_grid = np.linspace(0.0, 1.0, 5)
    n_list = [2, 4, 8, 16]
    if mode == "linear":
        return linear_convergence_experiment(L, WeightPlan(0.5), {0}, f, t_grid, n_list, window_radius=8)
    J = ReactionField(zero()) if mode == "zero" else ReactionField(logistic(), box=BOX)
    tol = 1e-12 if mode == "zero" else 1e-10
    return semilinear_convergence_experiment(L, WeightPlan(0.5), {0}, J, f, t_grid, n_list, tol=tol,
                                             window_radius=8)


def test_c11_linear_convergence(report):
    tab = _convergence("linear")
    curve = tab.max_by_n()
    slack = 2 * 1e-6
    finite = all(math.isfinite(v) for v in curve.values())
    ok = finite and tab.nonincreasing(slack) and curve[16] <= 1e-3
    report("criterion 11 linear convergence", ok, ", ".join(f"n={n}: {v:.3e}" for n, v in sorted(curve.items())))


def test_c12_semilinear_convergence(report):
    lin = _convergence("linear")
    z = _convergence("zero")
    match = max(abs(a.sup_diff - b.sup_diff) for a, b in zip(lin.rows, z.rows))
    same_rows = [(a.n, a.t) for a in lin.rows] == [(b.n, b.t) for b in z.rows]
    lg = _convergence("logistic")
    curve = lg.max_by_n()
    ok = same_rows and match <= 1e-10 and lg.nonincreasing(2 * 1e-6)
    report("criterion 12 semilinear convergence", ok,
           f"zero mode vs linear {match:.2e}; logistic " + ", ".join(f"n={n}: {v:.3e}" for n, v in sorted(curve.items())))


def test_c13_method_of_lines(report):
    g = families.fixture10()
    L = LaplacianOp(g)
    A = dense_laplacian(10, families.FIXTURE10_EDGES, families.FIXTURE10_MU)
    rng = np.random.default_rng([SEED, 13])
    worst = 0.0
    cases = [(logistic(), lambda t, y: y * (1 - y)),
             (logistic(K=2.0, amp=0.3, freq=1.0), lambda t, y: y * (1 - y / (2.0 * (1 + 0.3 * np.sin(t)))))]
    for m, rhs in cases:
        for _ in range(2):
            x0 = rng.uniform(0.0, 1.0, 10)
            p0 = FlatFunction.from_values(g, {f"v{i}": x0[i] for i in range(10)})
            traj = solve_mild(L, ReactionField(m, box=BOX), p0, 1.0, 1e-10)
            ref = mol_rk4(A, rhs, x0, 1.0)
            got = np.array([traj.series_at(f"v{i}")[-1, 0] for i in range(10)])
            worst = max(worst, float(np.max(np.abs(got - ref))))
    report("criterion 13 method of lines", worst <= 1e-6, f"max sup difference at t1 {worst:.2e}")


def test_c14_gronwall(report):
    rng = np.random.default_rng([SEED, 14])
    J = ReactionField(logistic(), box=BOX)
    worst = 0.0
    ok = True
    for g in (families.k2(), families.fixture10(), families.ray_unit(), families.spider(3)):
        L = LaplacianOp(g)
        for _ in range(2):
            p0 = random_flat(g, rng, nonneg=True, radius=3)
            d = random_flat(g, rng, radius=3)
            d = d * (1e-3 / lp_norm(d, math.inf))
            rep = gronwall_stability_check(L, J, p0, d, 1.0)
            ok = ok and rep["holds"]
            worst = max(worst, rep["max_ratio"])
    report("criterion 14 Gronwall stability", ok, f"max ||p - q|| / (||delta|| e^(C1 t)) {worst:.4f}")


def test_c15_determinism(report, tmp_path):
    scenarios = {
        "simulate": {"graph": "spider:3", "reaction": {"kind": "logistic", "box": list(BOX)},
                     "p0": {"explicit": [["c", 0.5]], "tails": [[0, 0.1], [2, 0.4]]}, "t1": 0.5, "grid": 2},
        "kernel": {"graph": "fixture10", "kernel": {"t": 1.0, "source": "v2", "targets": ["v0", "v5", "v9"]}},
        "converge": {"graph": "ray:unit", "omega": [0], "t1": 0.5, "grid": 2, "tol": 1e-12,
                     "p0": {"explicit": [["t0:0", 1.0], ["t0:1", 1.0], ["t0:2", 1.0]]},
                     "converge": {"mode": "linear", "n_list": [2, 8], "depth": 16}},
        "spectrum": {"graph": "fixture10"},
        "describe-graph": {"graph": "lattice2d:3"},
        "validate": {"graph": "k2", "seed": 7},
    }
    mismatched = []
    for cmd, cfg in scenarios.items():
        path = tmp_path / f"{cmd}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run / cmd
            assert main([cmd, "--config", str(path), "--out", str(out)]) == 0
            outs.append(out)
        for name in sorted(os.listdir(outs[0])):
            if name == "manifest.json":
                continue
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                mismatched.append(f"{cmd}/{name}")
    round_trip = all(parse_config(emit_config(parse_config(c))) == parse_config(c) for c in scenarios.values())
    ok = not mismatched and round_trip
    report("criterion 15 determinism", ok, f"mismatched files {mismatched}, config round trip exact: {round_trip}")
