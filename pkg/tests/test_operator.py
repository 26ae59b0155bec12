import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from netflat import families
from netflat.errors import UnboundedOperatorError
from netflat.flat import FlatFunction, inner, lp_norm
from netflat.graph import VertexId
from netflat.operator import (LaplacianOp, apply_laplacian, bilinear_form, default_vertex_weights,
                              op_norm_inf, sobolev_norm, to_q_matrix)
from netflat.validate import random_flat

from oracles import dense_laplacian

T = VertexId.in_tail


def test_constants_are_annihilated_exactly():
    for g in (families.ray_unit(), families.spider(3), families.fixture10(), families.lattice2d(3)):
        out = apply_laplacian(LaplacianOp(g), FlatFunction.constant(g, 0.37))
        assert np.all(out.values == 0) and np.all(out.tails == 0)


def test_laplacian_examples(k2, path3):
    out = apply_laplacian(LaplacianOp(k2), FlatFunction.from_values(k2, {"a": 1.0}))
    assert [out("a"), out("b")] == [1.0, -1.0]
    out = apply_laplacian(LaplacianOp(path3), FlatFunction.from_values(path3, {"v1": 1.0}))
    assert [out(f"v{i}") for i in range(3)] == [-1.0, 2.0, -1.0]


def test_laplacian_matches_dense_matrix(fixture10):
    A = dense_laplacian(10, families.FIXTURE10_EDGES, families.FIXTURE10_MU)
    rng = np.random.default_rng(0)
    x = rng.normal(size=10)
    f = FlatFunction.from_values(fixture10, {f"v{i}": x[i] for i in range(10)})
    out = apply_laplacian(LaplacianOp(fixture10), f)
    assert np.allclose([out(f"v{i}") for i in range(10)], A @ x, atol=1e-13)


def test_bilinear_examples(k2, path3):
    L = LaplacianOp(k2)
    g = random_flat(k2, np.random.default_rng(1))
    assert bilinear_form(L, FlatFunction.constant(k2), g) == 0.0
    d = FlatFunction.delta(k2, "a")
    assert bilinear_form(L, d, d) == 1.0
    f = FlatFunction.from_values(path3, {"v1": 1.0})
    assert bilinear_form(LaplacianOp(path3), f, f) == 2.0


def test_norm_examples(k2, path3, ray):
    assert op_norm_inf(LaplacianOp(k2)) == 2.0
    assert op_norm_inf(LaplacianOp(path3)) == 4.0
    assert op_norm_inf(LaplacianOp(ray)) == 4.0


def test_unbounded_operator_only_for_sections():
    g = families.ray_geometric(0.5)
    with pytest.raises(UnboundedOperatorError):
        LaplacianOp(g)
    L = LaplacianOp(g, bounded=False)
    with pytest.raises(UnboundedOperatorError):
        L(FlatFunction.zeros(g))
    with pytest.raises(UnboundedOperatorError):
        L.norm_inf


def test_q_matrix_examples(k2, path3, ray):
    Q, b = to_q_matrix(LaplacianOp(k2), k2.ball("a", 1))
    assert np.array_equal(Q, [[1, -1], [-1, 1]]) and not b.any()
    assert np.all(Q.sum(axis=1) == 0)
    Q, b = to_q_matrix(LaplacianOp(path3), path3.ball("v0", 2))
    assert list(Q[1]) == [-1, 2, -1]
    Q, b = to_q_matrix(LaplacianOp(ray), ray.ball(T(0, 0), 2))
    assert list(b) == [False, False, True]
    assert Q[2].sum() != 0 and np.all(Q[:2].sum(axis=1) == 0)


def test_sobolev_examples(k2, ray):
    L = LaplacianOp(k2)
    assert sobolev_norm(L, FlatFunction.zeros(k2)) == 0.0
    assert sobolev_norm(L, FlatFunction.delta(k2, "a")) == 2.0
    assert sobolev_norm(L, FlatFunction.delta(k2, "a"), squared=False) == pytest.approx(math.sqrt(2))
    assert math.isinf(sobolev_norm(LaplacianOp(ray), FlatFunction.constant(ray)))


def test_default_vertex_weights_examples(k2, path3):
    g0 = default_vertex_weights(k2)
    assert [g0.mu("a"), g0.mu("b")] == [0.5, 0.5] and g0.total_mu() == 1.0 == g0.volume()
    g0 = default_vertex_weights(path3)
    assert [g0.mu(f"v{i}") for i in range(3)] == [0.5, 1.0, 0.5] and g0.total_mu() == 2.0
    g0 = default_vertex_weights(families.ray_geometric(0.5))
    assert g0.mu(T(0, 0)) == 0.25
    assert g0.total_mu() == pytest.approx(1.0, abs=1e-15)
    for k in range(1, 6):
        assert g0.mu(T(0, k)) == pytest.approx(0.5 * (0.5 ** k + 0.5 ** (k + 1)))


# -- properties -------------------------------------------------------------

GRAPHS = {"ray": families.ray_unit(), "spider": families.spider(3), "fixture10": families.fixture10(),
          "lattice": families.lattice2d(3)}
graph_st = st.sampled_from(sorted(GRAPHS))


@given(graph_st, st.integers(0, 2**32 - 1))
def test_form_symmetry(name, seed):
    g = GRAPHS[name]
    L = LaplacianOp(g)
    rng = np.random.default_rng(seed)
    f = random_flat(g, rng, zero_tails=True)
    h = random_flat(g, rng, zero_tails=True)
    B = bilinear_form(L, f, h)
    assert abs(inner(L(f), h) - B) <= 1e-10 * (1 + abs(B))
    assert abs(inner(L(f), h) - inner(f, L(h))) <= 1e-10 * (1 + abs(B))
    assert bilinear_form(L, f, f) >= 0


@given(graph_st, st.integers(0, 2**32 - 1))
def test_flat_invariance(name, seed):
    g = GRAPHS[name]
    f = random_flat(g, np.random.default_rng(seed))
    out = LaplacianOp(g)(f)
    assert np.all(out.tails == 0)
    assert all(h == fh + 1 for h, fh in zip(out.horizons, f.horizons))


@given(graph_st, st.integers(0, 2**32 - 1))
def test_l1_bound(name, seed):
    g = GRAPHS[name]
    L = LaplacianOp(g)
    f = random_flat(g, np.random.default_rng(seed), zero_tails=True)
    assert lp_norm(L(f), 1) <= L.norm_inf * lp_norm(f, 1) * (1 + 1e-12)


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_norm_attainment(name):
    g = GRAPHS[name]
    L = LaplacianOp(g)
    for v in g.ball(g.root, 3).vertices:
        vals = {v: 1.0}
        vals.update({u: -1.0 for u, _, _ in g.neighbors(v)})
        f = FlatFunction.from_values(g, vals)
        assert abs(L(f)(v)) == pytest.approx(2 * g.conductance_sum(v) / g.mu(v), rel=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_continuity_estimate(seed):
    g = families.fixture10()
    rng = np.random.default_rng(seed)
    f = random_flat(g, rng)
    B = bilinear_form(LaplacianOp(g), f, f)
    for _ in range(10):
        v, w = (f"v{i}" for i in rng.integers(0, 10, 2))
        assert (f(w) - f(v)) ** 2 <= 4 * B * g.geodesic_distance(v, w) + 1e-12
