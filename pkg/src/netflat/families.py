"""Built-in graph families and the fixed 10-vertex test fixture."""
from __future__ import annotations

from .errors import ValidationError
from .graph import GraphModel, TailSpec, VertexId
from .schedule import Schedule


def k2(R=1.0, mu=1.0) -> GraphModel:
    return GraphModel(["a", "b"], [mu, mu], [(0, 1, R)], name="k2")


def path(N: int, R=1.0, mu=1.0) -> GraphModel:
    if N < 2:
        raise ValidationError("path needs at least 2 vertices")
    return GraphModel([f"v{i}" for i in range(N)], [mu] * N,
                      [(i, i + 1, R) for i in range(N - 1)], name=f"path:{N}")


def single(mu=1.0) -> GraphModel:
    """One vertex, no edges: Delta = 0."""
    return GraphModel(["a"], [mu], [], name="single")


def ray_unit() -> GraphModel:
    tail = TailSpec(Schedule.constant(1.0), (Schedule.constant(1.0),))
    return GraphModel([], [], [], [tail], name="ray:unit")


def ray_geometric(gamma: float) -> GraphModel:
    """Ray with R(k, k+1) = gamma**(k+1) and unit vertex weights."""
    if not 0 < gamma < 1:
        raise ValidationError("geometric ray needs 0 < gamma < 1")
    tail = TailSpec(Schedule.geometric(gamma, gamma), (Schedule.constant(1.0),))
    return GraphModel([], [], [], [tail], name=f"ray:geometric:{gamma!r}")


def spider(T: int) -> GraphModel:
    """Center vertex ``c`` with T unit rays attached."""
    if T < 1:
        raise ValidationError("spider needs at least one tail")
    tails = [TailSpec(Schedule.constant(1.0), (Schedule.constant(1.0),), attach=((0, 0, 1.0),))
             for _ in range(T)]
    return GraphModel(["c"], [1.0], [], tails, name=f"spider:{T}")


def lattice2d(N: int) -> GraphModel:
    """N x N unit grid; all far vertices are grouped into one unit ray tail
    attached to every boundary vertex of the grid."""
    if N < 2:
        raise ValidationError("lattice needs N >= 2")
    labels = [f"{x}_{y}" for y in range(N) for x in range(N)]
    idx = lambda x, y: y * N + x  # noqa: E731
    edges = []
    for y in range(N):
        for x in range(N):
            if x + 1 < N:
                edges.append((idx(x, y), idx(x + 1, y), 1.0))
            if y + 1 < N:
                edges.append((idx(x, y), idx(x, y + 1), 1.0))
    boundary = [idx(x, y) for y in range(N) for x in range(N) if x in (0, N - 1) or y in (0, N - 1)]
    tail = TailSpec(Schedule.constant(1.0), (Schedule.constant(1.0),),
                    attach=tuple((b, 0, 1.0) for b in boundary))
    return GraphModel(labels, [1.0] * (N * N), edges, [tail], name=f"lattice2d:{N}")


FIXTURE10_MU = (1.0, 0.5, 2.0, 1.5, 0.8, 1.2, 0.7, 1.1, 0.9, 1.3)
FIXTURE10_EDGES = (
    (0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 4, 1.0), (4, 5, 0.8),
    (5, 6, 1.5), (6, 7, 0.6), (7, 8, 1.2), (8, 9, 0.9), (9, 0, 1.1),
    (0, 5, 2.5), (1, 7, 0.7), (2, 8, 1.6), (3, 6, 0.4), (4, 9, 1.9),
)


def fixture10() -> GraphModel:
    """Fixed irregular weighted graph on 10 vertices."""
    return GraphModel([f"v{i}" for i in range(10)], FIXTURE10_MU, FIXTURE10_EDGES, name="fixture10")


def from_shorthand(spec: str) -> GraphModel:
    parts = spec.strip().split(":")
    head = parts[0]
    try:
        if head == "k2" and len(parts) == 1:
            return k2()
        if head == "single" and len(parts) == 1:
            return single()
        if head == "fixture10" and len(parts) == 1:
            return fixture10()
        if head == "path" and len(parts) == 2:
            return path(int(parts[1]))
        if head == "ray" and parts[1:] == ["unit"]:
            return ray_unit()
        if head == "ray" and len(parts) == 3 and parts[1] == "geometric":
            return ray_geometric(float(parts[2]))
        if head == "spider" and len(parts) == 2:
            return spider(int(parts[1]))
        if head == "lattice2d" and len(parts) == 2:
            return lattice2d(int(parts[1]))
    except (ValueError, IndexError):
        pass
    raise ValidationError(f"unknown graph family {spec!r}")


def tail_vertex(t, depth, slot=0) -> VertexId:
    return VertexId.in_tail(t, depth, slot)


def random_graph(n: int, rng, extra: int = 5, name: str = "random") -> GraphModel:
    """Connected random graph on n vertices: a random spanning tree plus
    ``extra`` chords, resistances and weights uniform in [0.3, 3]."""
    order = rng.permutation(n)
    edges = {}
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges[(min(a, b), max(a, b))] = None
    tries = 0
    while len(edges) < n - 1 + extra and tries < 50 * n:
        a, b = (int(x) for x in rng.choice(n, 2, replace=False))
        edges.setdefault((min(a, b), max(a, b)), None)
        tries += 1
    E = [(a, b, float(rng.uniform(0.3, 3.0))) for a, b in sorted(edges)]
    mu = [float(x) for x in rng.uniform(0.3, 3.0, n)]
    return GraphModel([f"v{i}" for i in range(n)], mu, E, name=name)
