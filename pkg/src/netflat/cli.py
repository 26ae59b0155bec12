"""Command line entry point: ``netflat <command> [flags]``.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 resource
limit, 1 anything else. Errors go to stderr as one JSON object and no
output file is left behind.
"""
from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
import time

import numpy as np

from . import __version__, _kernels
from .compressed import (
    SpectralModel,
    WeightPlan,
    hybrid_weights,
    linear_convergence_experiment,
)
from .errors import InconclusiveError, NetflatError, ValidationError
from .io import (
    OutputSet,
    ScenarioConfig,
    build_flat,
    build_reaction,
    config_hash,
    emit_config,
    graph_from_json,
    load_config,
    parse_config,
)
from .operator import LaplacianOp, to_q_matrix
from .propagator import decay_bound, heat_kernel_column
from .reaction import semilinear_convergence_experiment, solve_mild, solve_mild_spectral

DENSE_Q_LIMIT = 50


class Run:
    """State shared by one command: config, outputs, bounds, timings."""

    def __init__(self, command, cfg: ScenarioConfig, out_dir, threads):
        self.command = command
        self.cfg = cfg
        self.out = OutputSet(out_dir)
        self.bounds = {}
        self.timings = {}
        self.extra = {}
        self.threads = threads
        self.graph = graph_from_json(cfg.graph)

    def timed(self, name, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*a, **kw)
        finally:
            self.timings[name] = time.perf_counter() - t0

    def weighted_graph(self):
        w = self.cfg.weights
        if w["mode"] == "R":
            return self.graph
        plan = WeightPlan.from_json(w["plan"])
        if w["mode"] == "plan":
            return plan.apply(self.graph)
        return hybrid_weights(self.graph, plan, self.graph.root, w["n"]).graph

    def section(self):
        g = self.weighted_graph()
        depth = None if g.is_finite else self.cfg.section_depth
        return SpectralModel(g, self.cfg.omega, depth, dirichlet=self.cfg.dirichlet)

    def finish(self):
        emitted = emit_config(self.cfg)
        manifest = {
            "command": self.command,
            "version": __version__,
            "config_hash": config_hash(emitted),
            "config": emitted,
            "error_bounds": self.bounds,
            "timings_s": self.timings,
            "outputs": self.out.digests(),
            "backend": _kernels.get_backend(),
            "threads": self.threads,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        manifest.update(self.extra)
        self.out.write_json("manifest.json", manifest)
        self.out.commit()
        return manifest


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(run: Run):
    cfg = run.cfg
    g = run.graph
    if cfg.p0 is None:
        raise ValidationError("simulate needs initial data p0")
    Jf = build_reaction(cfg.reaction, g)
    p0 = build_flat(g, cfg.p0, Jf.dimension)
    K = cfg.grid
    if cfg.weights["mode"] == "R" and not cfg.omega and not cfg.dirichlet:
        L = LaplacianOp(g)
        traj = run.timed("solve", solve_mild, L, Jf, p0, cfg.t1, cfg.tol, grid_multiple=K)
    else:
        model = run.timed("section", run.section)
        traj = run.timed("solve", solve_mild_spectral, model, Jf, p0.on_graph(model.graph), cfg.t1,
                         cfg.tol, grid_multiple=K)
    stride = (len(traj.times) - 1) // K
    steps = [j * stride for j in range(K + 1)]
    rows, tail_rows = _trajectory_rows(traj, steps)
    run.out.write_csv("trajectory.csv", ["t", "vertex", "component", "value"], rows)
    run.out.write_csv("trajectory_tails.csv", ["t", "tail", "component", "value"], tail_rows)
    run.bounds["simulate"] = float(traj.error_estimate)
    run.extra["picard_iterations"] = [int(i) for i in traj.iterations]


def _trajectory_rows(traj, steps):
    g = traj.graph
    S = traj.states[steps]
    times = traj.times[steps]
    if traj.region is None:
        verts = traj.model.free
        vals = S
        tails = None
    else:
        reg = traj.region
        n = reg.n
        tails = S[:, n:]
        # deepest row per tail that differs from its tail constant at some time
        keep = np.ones(n, dtype=bool)
        last = [-1] * g.n_tails
        for i in range(n):
            t = reg.row_tail[i]
            if t >= 0 and np.any(S[:, i] != S[:, n + t]):
                last[t] = max(last[t], int(reg.row_depth[i]))
        for i in range(n):
            t = reg.row_tail[i]
            if t >= 0 and reg.row_depth[i] > last[t]:
                keep[i] = False
        order = sorted(np.nonzero(keep)[0].tolist(), key=lambda i: reg.vertices[i])
        verts = [reg.vertices[i] for i in order]
        vals = S[:, order]
    rows = []
    for j, t in enumerate(times):
        for i, v in enumerate(verts):
            lab = g.label(v)
            for c in range(vals.shape[2]):
                rows.append((float(t), lab, c, float(vals[j, i, c])))
    tail_rows = []
    if tails is not None:
        for j, t in enumerate(times):
            for k in range(g.n_tails):
                for c in range(tails.shape[2]):
                    tail_rows.append((float(t), k, c, float(tails[j, k, c])))
    return rows, tail_rows


def cmd_kernel(run: Run):
    cfg = run.cfg
    k = cfg.kernel
    if k is None:
        raise ValidationError("kernel needs a source and time (config 'kernel' or --source/--t)")
    g = run.weighted_graph()
    L = LaplacianOp(g)
    src = g.parse_vertex(k["source"])
    targets = [g.parse_vertex(v) for v in k.get("targets", [k["source"]])]
    t = float(k.get("t", 0.0))
    tol = float(k.get("tol", cfg.tol))
    vals, bound = run.timed("kernel", heat_kernel_column, L, src, targets, t, tol)
    rows = []
    for u, val in zip(targets, vals):
        try:
            d = g.combinatorial_distance(src, u)
            db = decay_bound(L, t, d, g.mu(src))
        except InconclusiveError:
            db = math.inf
        rows.append((g.label(u), g.label(src), t, float(val), float(db)))
    run.out.write_csv("kernel.csv", ["target", "source", "t", "value", "decay_bound"], rows)
    run.bounds["kernel"] = float(bound)


def cmd_spectrum(run: Run):
    model = run.timed("section", run.section)
    ev = model.eigenvalues
    run.out.write_csv("spectrum.csv", ["index", "eigenvalue"],
                      [(i, float(x)) for i, x in enumerate(ev)])
    run.extra["section"] = {"depth": model.depth, "free": len(model.free), "clamped": len(model.clamped),
                            "min_pivot": model.min_pivot}


def cmd_converge(run: Run):
    cfg = run.cfg
    c = cfg.converge
    if c is None:
        raise ValidationError("converge needs a 'converge' block in the config")
    if cfg.p0 is None:
        raise ValidationError("converge needs initial data p0")
    g = run.graph
    L = LaplacianOp(g)
    plan = WeightPlan.from_json(c["plan"])
    K = int(c.get("grid", cfg.grid))
    t_grid = np.linspace(0.0, cfg.t1, K + 1)
    kw = dict(depth=int(c.get("depth", 16)), window_radius=int(c.get("window_radius", 8)),
              refine_tol=float(c.get("refine_tol", 1e-6)))
    if c["mode"] == "linear":
        f = build_flat(g, cfg.p0)
        table = run.timed("converge", linear_convergence_experiment, L, plan, cfg.omega, f, t_grid,
                          c["n_list"], eps=cfg.tol, **kw)
    else:
        Jf = build_reaction(cfg.reaction, g)
        p0 = build_flat(g, cfg.p0, Jf.dimension)
        table = run.timed("converge", semilinear_convergence_experiment, L, plan, cfg.omega, Jf, p0,
                          t_grid, c["n_list"], tol=cfg.tol, **kw)
    run.out.write_csv("convergence.csv", ["n", "t", "sup_diff", "D_used", "refinement_defect"],
                      [(r.n, r.t, r.sup_diff, r.depth_used, r.refinement_defect) for r in table.rows])
    run.bounds["converge_max_refinement_defect"] = max((r.refinement_defect for r in table.rows), default=0.0)


def cmd_describe(run: Run):
    g = run.weighted_graph()
    L = LaplacianOp(g, bounded=False)

    def finite(x):
        return float(x) if math.isfinite(x) else None

    try:
        diam = finite(g.diameter())
    except InconclusiveError:
        diam = None
    desc = {
        "n_core": g.n_core,
        "n_tails": g.n_tails,
        "root": g.label(g.root),
        "degree_ratio_sup": finite(L.sup),
        "norm_inf": finite(2 * L.sup),
        "volume": finite(g.volume()),
        "total_mu": finite(g.total_mu()),
        "diameter": diam,
        "fingerprint": g.fingerprint(),
    }
    sub = g.ball(g.root, run.cfg.q_radius)
    Q, boundary = to_q_matrix(L, sub)
    labels = [g.label(v) for v in sub.vertices]
    desc["q_matrix"] = {"vertices": labels, "boundary": [lab for lab, b in zip(labels, boundary) if b]}
    run.out.write_json("describe.json", desc)
    if len(labels) <= DENSE_Q_LIMIT:
        run.out.write_csv("qmatrix.csv", labels, [tuple(float(x) for x in row) for row in Q])
    else:
        ii, jj = np.nonzero(Q)
        run.out.write_csv("qmatrix_coo.csv", ["row", "col", "value"],
                          [(labels[i], labels[j], float(Q[i, j])) for i, j in zip(ii, jj)])
    print(json.dumps(desc, indent=2, sort_keys=True))


def cmd_validate(run: Run, fault=None):
    from .validate import run_suite

    report = run.timed("validate", run_suite, run.cfg.seed, fault)
    run.out.write_json("validate_report.json", report)
    run.extra["all_pass"] = report["all_pass"]


COMMANDS = {
    "simulate": cmd_simulate,
    "kernel": cmd_kernel,
    "spectrum": cmd_spectrum,
    "converge": cmd_converge,
    "validate": cmd_validate,
    "describe-graph": cmd_describe,
}


# ---------------------------------------------------------------------------
# argument handling


def _common(p, top=False):
    # subcommand copies must not clobber values given before the command
    kw = {} if top else {"default": argparse.SUPPRESS}
    p.add_argument("--config", metavar="PATH", **kw)
    p.add_argument("--out", metavar="DIR", **kw)
    p.add_argument("--seed", type=int, metavar="N", **kw)
    p.add_argument("--tol", type=float, metavar="X", **kw)
    p.add_argument("--threads", type=int, metavar="N", **kw)


def build_parser():
    p = argparse.ArgumentParser(prog="netflat", description=__doc__.splitlines()[0], allow_abbrev=False)
    p.add_argument("--version", action="version", version=f"netflat {__version__}")
    _common(p, top=True)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, allow_abbrev=False)
        _common(sp)
        if name in ("kernel", "describe-graph", "validate", "spectrum"):
            sp.add_argument("--graph", help="family shorthand or graph JSON file", default=argparse.SUPPRESS)
        if name == "kernel":
            sp.add_argument("--t", type=float, default=argparse.SUPPRESS)
            sp.add_argument("--source", default=argparse.SUPPRESS)
            sp.add_argument("--targets", nargs="+", default=argparse.SUPPRESS)
        if name == "validate":
            sp.add_argument("--inject-fault", choices=["weight-sign"], default=None)
    return p


def _load_graph_arg(spec):
    if spec.endswith(".json"):
        try:
            with open(spec) as fh:
                return json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read graph file: {exc}") from None
    return spec


def resolve_config(args) -> ScenarioConfig:
    """Config file (if any) plus command-line overrides, validated."""
    if getattr(args, "config", None):
        obj = emit_config(load_config(args.config))
    else:
        obj = {}
    if getattr(args, "graph", None):
        obj["graph"] = _load_graph_arg(args.graph)
    if "graph" not in obj:
        if args.command == "validate":
            obj["graph"] = "k2"
        else:
            raise ValidationError("no graph given (use --config or --graph)")
    if getattr(args, "tol", None) is not None:
        obj["tol"] = args.tol
    if getattr(args, "seed", None) is not None:
        obj["seed"] = args.seed
    if args.command == "kernel":
        k = dict(obj.get("kernel") or {})
        for key in ("t", "source", "targets"):
            if getattr(args, key, None) is not None:
                k[key] = getattr(args, key)
        if getattr(args, "tol", None) is not None:
            k["tol"] = args.tol
        if k:
            obj["kernel"] = k
    return parse_config(obj)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    run = None
    try:
        threads = getattr(args, "threads", None)
        if threads is not None:
            if threads < 1:
                raise ValidationError("--threads must be >= 1")
            if _kernels.HAS_NUMBA:
                import numba

                numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        cfg = resolve_config(args)
        run = Run(args.command, cfg, getattr(args, "out", None) or ".", threads)
        if args.command == "validate":
            cmd_validate(run, args.inject_fault)
        else:
            COMMANDS[args.command](run)
        run.finish()
        return 0
    except NetflatError as exc:
        if run is not None:
            run.out.discard()
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # unexpected: still structured, never partial
        if run is not None:
            run.out.discard()
        print(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
