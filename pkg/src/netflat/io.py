"""JSON forms for graphs and scenarios, CSV emission, atomic writes."""
from __future__ import annotations

import contextlib
import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from . import families
from .errors import ValidationError
from .graph import GraphModel, TailSpec, VertexId
from .schedule import Schedule


def fmt(x) -> str:
    """Full-precision decimal used in every CSV."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# graphs


def graph_to_json(g: GraphModel) -> dict:
    """Canonical description; weights only, no display name."""
    lab = g.core_labels
    tails = []
    for spec in g.tails:
        d = {
            "slots": spec.slots,
            "attach": [[lab[c], s, r] for c, s, r in spec.attach],
            "intra": [list(e) for e in spec.intra],
            "links": [list(e) for e in spec.links],
            "r": spec.r_schedule.to_json(),
            "mu": [m.to_json() for m in spec.mu_schedules],
        }
        if spec.declared_sup is not None:
            d["declared_sup"] = spec.declared_sup
        tails.append(d)
    out = {
        "core": {"vertices": [[l, m] for l, m in zip(lab, g.core_mu)],
                 "edges": [[lab[i], lab[j], r] for i, j, r in g.core_edges]},
        "tails": tails,
        "root": g.label(g.root),
    }
    if g.edge_overrides or g.vertex_overrides:
        out["edge_overrides"] = sorted([[g.label(a), g.label(b), r] for (a, b), r in g.edge_overrides.items()])
        out["vertex_overrides"] = sorted([[g.label(v), m] for v, m in g.vertex_overrides.items()])
    return out


def graph_from_json(obj) -> GraphModel:
    if isinstance(obj, str):
        return families.from_shorthand(obj)
    if not isinstance(obj, dict):
        raise ValidationError("graph must be a family shorthand or an object")
    if "family" in obj:
        return families.from_shorthand(obj["family"])
    try:
        core = obj.get("core", {})
        verts = core.get("vertices", [])
        labels = [str(v[0]) for v in verts]
        mus = [float(v[1]) for v in verts]
        index = {l: i for i, l in enumerate(labels)}

        def ci(x):
            if str(x) not in index:
                raise ValidationError(f"edge references unknown core vertex {x!r}")
            return index[str(x)]

        edges = [(ci(u), ci(v), float(r)) for u, v, r in core.get("edges", [])]
        tails = []
        for t in obj.get("tails", []):
            slots = int(t.get("slots", 1))
            mu = t.get("mu", {"constant": 1.0})
            mus_t = [Schedule.from_json(m) for m in mu] if isinstance(mu, list) else [Schedule.from_json(mu)] * slots
            attach = []
            for a in t.get("attach", []):
                if isinstance(a, (str, int)) and not isinstance(a, bool):
                    attach.append((ci(a), 0, 1.0))
                else:
                    attach.append((ci(a[0]), int(a[1]) if len(a) > 2 else 0, float(a[-1]) if len(a) > 1 else 1.0))
            tails.append(TailSpec(
                Schedule.from_json(t.get("r", {"constant": 1.0})), tuple(mus_t), slots,
                tuple(tuple(e) for e in t.get("intra", [])),
                tuple(tuple(e) for e in t.get("links", [[0, 0, 1.0]])),
                tuple(attach), t.get("declared_sup")))
        g = GraphModel(labels, mus, edges, tails)
        root = g.parse_vertex(obj["root"]) if "root" in obj else None
        eo = {(g.parse_vertex(a), g.parse_vertex(b)): float(r) for a, b, r in obj.get("edge_overrides", [])}
        vo = {g.parse_vertex(v): float(m) for v, m in obj.get("vertex_overrides", [])}
        if root is not None or eo or vo:
            g = g.replace(root=root if root is not None else g.root, edge_overrides=eo, vertex_overrides=vo)
        return g
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed graph description: {exc}") from None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


# ---------------------------------------------------------------------------
# scenario configuration

@dataclass
class ScenarioConfig:
    graph: dict
    weights: dict = field(default_factory=lambda: {"mode": "R"})
    omega: list = field(default_factory=list)
    dirichlet: list = field(default_factory=list)
    reaction: dict = field(default_factory=lambda: {"kind": "zero"})
    p0: Optional[dict] = None
    t1: float = 1.0
    grid: int = 10
    tol: float = 1e-8
    section_depth: int = 64
    kernel: Optional[dict] = None
    converge: Optional[dict] = None
    q_radius: int = 2
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)


_KEYS = {f for f in ScenarioConfig.__dataclass_fields__}


def parse_config(obj: dict) -> ScenarioConfig:
    """Validate and canonicalize; family shorthands are expanded."""
    if not isinstance(obj, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(obj) - _KEYS
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    if "graph" not in obj:
        raise ValidationError("config needs a graph")
    g = graph_from_json(obj["graph"])
    cfg = ScenarioConfig(graph=graph_to_json(g))
    for k in _KEYS - {"graph"}:
        if k in obj:
            setattr(cfg, k, obj[k])
    cfg.t1 = float(cfg.t1)
    cfg.tol = float(cfg.tol)
    cfg.grid = int(cfg.grid)
    cfg.section_depth = int(cfg.section_depth)
    cfg.q_radius = int(cfg.q_radius)
    cfg.seed = int(cfg.seed)
    cfg.omega = sorted(int(t) for t in cfg.omega)
    cfg.dirichlet = [str(v) for v in cfg.dirichlet]
    if not cfg.tol > 0 or not math.isfinite(cfg.tol):
        raise ValidationError("tolerance must be positive")
    if not cfg.t1 > 0:
        raise ValidationError("t1 must be positive")
    if cfg.grid < 1:
        raise ValidationError("grid needs at least one interval")
    for t in cfg.omega:
        if not 0 <= t < g.n_tails:
            raise ValidationError(f"omega references unknown tail {t}")
    for v in cfg.dirichlet:
        g.parse_vertex(v)
    mode = cfg.weights.get("mode", "R")
    if mode not in ("R", "plan", "hybrid"):
        raise ValidationError(f"unknown weight mode {mode!r}")
    cfg.weights = dict(cfg.weights, mode=mode)
    if mode in ("plan", "hybrid"):
        from .compressed import WeightPlan

        cfg.weights["plan"] = WeightPlan.from_json(cfg.weights.get("plan", {"gamma": 0.5})).to_json()
        if mode == "hybrid":
            cfg.weights["n"] = int(cfg.weights.get("n", 0))
    build_reaction(cfg.reaction, g)  # validates
    if cfg.p0 is not None:
        build_flat(g, cfg.p0, int(cfg.p0.get("dimension", 1)))
    if cfg.kernel is not None:
        k = cfg.kernel
        g.parse_vertex(k["source"])
        for v in k.get("targets", []):
            g.parse_vertex(v)
        if float(k.get("t", 0.0)) < 0:
            raise ValidationError("kernel time must be nonnegative")
    if cfg.converge is not None:
        c = dict(cfg.converge)
        if c.get("mode", "linear") not in ("linear", "semilinear"):
            raise ValidationError("converge mode must be linear or semilinear")
        c.setdefault("mode", "linear")
        c["n_list"] = [int(n) for n in c.get("n_list", [2, 4, 8, 16])]
        c.setdefault("plan", {"gamma": 0.5})
        from .compressed import WeightPlan

        c["plan"] = WeightPlan.from_json(c["plan"]).to_json()
        cfg.converge = c
    return cfg


def build_reaction(spec: dict, graph: GraphModel):
    from .reaction import ReactionField, ReactionMap

    spec = dict(spec or {"kind": "zero"})
    box = tuple(spec.pop("box", (-10.0, 10.0)))
    dimension = int(spec.pop("dimension", 1))
    exceptions = {graph.parse_vertex(v): ReactionMap.from_json(m) for v, m in spec.pop("exceptions", [])}
    tail_maps = {int(t): ReactionMap.from_json(m) for t, m in spec.pop("tail_maps", [])}
    lip = spec.pop("lipschitz", None)
    default = ReactionMap.from_json(spec)
    return ReactionField(default, dimension, tail_maps, exceptions, box, lip).check(graph)


def build_flat(graph: GraphModel, obj: dict, dimension: int = 1):
    from .flat import FlatFunction

    obj = dict(obj)
    obj.setdefault("dimension", dimension)
    return FlatFunction.from_dict(graph, obj)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    return parse_config(obj)


def emit_config(cfg: ScenarioConfig) -> dict:
    return json.loads(canonical_json(cfg.to_json()))


# ---------------------------------------------------------------------------
# output


class OutputSet:
    """Collects files and commits them together: every file goes to a
    temporary name first and is renamed only when the command succeeds."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.pending = []  # (tmp path, final path)

    def write_text(self, name: str, text: str):
        os.makedirs(self.out_dir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.out_dir)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        self.pending.append((tmp, os.path.join(self.out_dir, name)))

    def write_csv(self, name: str, header, rows):
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(fmt(x) if isinstance(x, float) else str(x) for x in r))
        self.write_text(name, "\n".join(lines) + "\n")

    def write_json(self, name: str, obj):
        self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def digests(self) -> dict:
        out = {}
        for tmp, final in self.pending:
            with open(tmp, "rb") as fh:
                out[os.path.basename(final)] = hashlib.sha256(fh.read()).hexdigest()
        return out

    def commit(self):
        for tmp, final in self.pending:
            os.replace(tmp, final)
        self.pending = []

    def discard(self):
        for tmp, _ in self.pending:
            with contextlib.suppress(OSError):
                os.unlink(tmp)
        self.pending = []
