import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from netflat import families
from netflat.errors import InconclusiveError, InvalidVertexError, ValidationError
from netflat.graph import GraphModel, TailSpec, VertexId
from netflat.schedule import Schedule

T = VertexId.in_tail


def test_neighbors_k2(k2):
    a, b = VertexId.core(0), VertexId.core(1)
    assert k2.neighbors(a) == [(b, 1.0, 1.0)]


def test_neighbors_unit_ray(ray):
    assert ray.neighbors(T(0, 3)) == [(T(0, 2), 1.0, 1.0), (T(0, 4), 1.0, 1.0)]


def test_neighbors_geometric_ray():
    g = families.ray_geometric(0.5)
    assert g.neighbors(T(0, 1)) == [(T(0, 0), 0.5, 2.0), (T(0, 2), 0.25, 4.0)]


def test_geodesic_examples(ray):
    assert ray.geodesic_distance(T(0, 4), T(0, 4)) == 0.0
    assert ray.geodesic_distance(T(0, 0), T(0, 5)) == 5.0
    g = families.ray_geometric(0.5)
    assert g.geodesic_distance(T(0, 0), T(0, 3)) == pytest.approx(7 / 8, abs=1e-15)


def test_geodesic_matches_scipy_dijkstra(fixture10):
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import shortest_path

    E = families.FIXTURE10_EDGES
    A = coo_matrix(([r for *_, r in E], ([i for i, *_ in E], [j for _, j, _ in E])), shape=(10, 10))
    D = shortest_path(A.tocsr(), directed=False)
    for i in range(10):
        for j in range(10):
            assert fixture10.geodesic_distance(VertexId.core(i), VertexId.core(j)) == pytest.approx(D[i, j])


def test_combinatorial_distance(k2, path3, ray):
    a = VertexId.core(0)
    assert k2.combinatorial_distance(a, a) == 0
    assert k2.combinatorial_distance("a", "b") == 1
    assert path3.combinatorial_distance("v0", "v2") == 2
    with pytest.raises(InconclusiveError) as exc:
        ray.combinatorial_distance(T(0, 0), T(0, 50), cap=10)
    assert exc.value.lower_bound == 11


def test_ball_examples(k2, ray):
    b0 = ray.ball(T(0, 0), 0)
    assert b0.vertices == (T(0, 0),) and b0.cut == {T(0, 0)}
    b2 = ray.ball(T(0, 0), 2)
    assert b2.vertices == (T(0, 0), T(0, 1), T(0, 2))
    assert b2.cut == {T(0, 2)}
    whole = k2.ball("a", 1)
    assert len(whole) == 2 and not whole.cut


def test_volume_examples(ray):
    assert math.isinf(ray.volume())
    assert families.ray_geometric(0.5).volume() == pytest.approx(1.0, abs=1e-15)
    assert families.k2(R=3.0).volume() == 3.0


def test_tail_of():
    sp = families.spider(2)
    assert sp.tail_of("c") is None
    assert families.ray_unit().tail_of(T(0, 7)) == 0
    assert sp.tail_of(T(1, 4)) == 1


def test_labels_round_trip():
    sp = families.spider(3)
    for v in sp.ball("c", 3).vertices:
        assert sp.parse_vertex(sp.label(v)) == v
    with pytest.raises(InvalidVertexError):
        sp.parse_vertex("t7:0")
    with pytest.raises(InvalidVertexError):
        sp.parse_vertex("nope")


def test_validation_rejects_bad_graphs():
    with pytest.raises(ValidationError):
        GraphModel(["a", "b"], [1, 1], [(0, 1, -1.0)])
    with pytest.raises(ValidationError):
        GraphModel(["a", "b"], [1, 0], [(0, 1, 1.0)])
    with pytest.raises(ValidationError):
        GraphModel(["a"], [1], [(0, 0, 1.0)])
    with pytest.raises(ValidationError):
        GraphModel(["a", "b"], [1, 1], [(0, 1, 1.0), (1, 0, 2.0)])
    with pytest.raises(ValidationError):
        GraphModel(["a", "b", "c"], [1, 1, 1], [(0, 1, 1.0)])


def test_declared_sup_is_spot_checked():
    tail = TailSpec(Schedule.constant(1.0), (Schedule.constant(1.0),), declared_sup=0.5)
    with pytest.raises(ValidationError):
        GraphModel([], [], [], [tail])


def test_degree_ratio_sup():
    assert families.k2().degree_ratio_sup() == 1.0
    assert families.path(3).degree_ratio_sup() == 2.0
    assert families.ray_unit().degree_ratio_sup() == 2.0
    assert math.isinf(families.ray_geometric(0.5).degree_ratio_sup())


def test_diameter(k2, path3):
    assert k2.diameter() == 1.0
    assert path3.diameter() == 2.0
    assert families.ray_geometric(0.5).diameter() == pytest.approx(1.0)
    assert math.isinf(families.ray_unit().diameter())


def test_lattice_family():
    g = families.lattice2d(3)
    assert g.n_core == 9 and g.n_tails == 1
    # the centre sees four grid neighbours, boundary vertices also see the tail
    assert len(g.neighbors("1_1")) == 4
    assert len(g.neighbors("0_0")) == 3


def test_random_graph_is_connected_and_seeded():
    g1 = families.random_graph(10, np.random.default_rng(4))
    g2 = families.random_graph(10, np.random.default_rng(4))
    assert g1.fingerprint() == g2.fingerprint()
    assert len(g1.ball("v0", 10)) == 10


# -- properties -------------------------------------------------------------

GRAPHS = [families.ray_unit, lambda: families.spider(3), families.fixture10,
          lambda: families.ray_geometric(0.5), lambda: families.lattice2d(3)]


@pytest.mark.parametrize("make", GRAPHS)
def test_edge_symmetry(make):
    g = make()
    for v in g.ball(g.root, 6).vertices:
        for u, r, c in g.neighbors(v):
            back = [x for x in g.neighbors(u) if x[0] == v]
            assert back == [(v, r, c)]


@pytest.mark.parametrize("make", GRAPHS)
def test_monotone_balls(make):
    g = make()
    prev = set()
    for k in range(8):
        cur = set(g.ball(g.root, k).vertices)
        assert prev <= cur
        prev = cur


@pytest.mark.parametrize("make", GRAPHS)
def test_lazy_determinism(make):
    a = make().ball(make().root, 5)
    b = make().ball(make().root, 5)
    assert a.vertices == b.vertices and a.edges == b.edges and a.cut == b.cut


@given(st.data())
def test_triangle_inequality(data):
    g = families.spider(3) if data.draw(st.booleans()) else families.fixture10()
    verts = g.ball(g.root, 10).vertices
    pick = st.sampled_from(verts)
    u, v, w = data.draw(pick), data.draw(pick), data.draw(pick)
    d = g.geodesic_distance
    assert d(u, w) <= d(u, v) + d(v, w) + 1e-12
