import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import triangle_monomial
from surfsd.cut import (CutPolygon, build_cut_surface, marching_tet, polygon_quadrature,
                        sample_level_set, surface_quadrature)
from surfsd.errors import DegenerateInput
from surfsd.fem import barycentric
from surfsd.geometry import make_surface
from surfsd.mesh import build_background_mesh

REF = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
UNIT = ((0, 0, 0), (1, 1, 1))


def _cuts(surface, n, box=UNIT):
    m = build_background_mesh(box, n, surface)
    return build_cut_surface(m, sample_level_set(m, surface))


def test_single_negative_vertex_gives_midpoint_triangle():
    poly = marching_tet(REF, [-1, 1, 1, 1])
    expected = {(0.5, 0, 0), (0, 0.5, 0), (0, 0, 0.5)}
    assert {tuple(np.round(v, 14)) for v in poly.vertices} == expected
    assert poly.area == pytest.approx(np.sqrt(3) / 8)
    assert np.allclose(poly.n_h, np.ones(3) / np.sqrt(3))  # toward the positive vertices


def test_uniform_sign_gives_none():
    assert marching_tet(REF, [1, 1, 1, 1]) is None
    assert marching_tet(REF, [-1, -2, -3, -4]) is None


def test_quad_area_is_diagonal_independent():
    poly = marching_tet(REF, [-1, -1, 1, 1])
    v = poly.vertices
    assert len(v) == 4

    def tri(a, b, c):
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a))

    d1 = tri(v[0], v[1], v[2]) + tri(v[0], v[2], v[3])
    d2 = tri(v[1], v[2], v[3]) + tri(v[1], v[3], v[0])
    assert d1 == pytest.approx(poly.area, abs=1e-12)
    assert d2 == pytest.approx(poly.area, abs=1e-12)


def test_zero_value_is_rejected():
    with pytest.raises(DegenerateInput):
        marching_tet(REF, [0.0, 1, -1, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-6), min_size=4, max_size=4),
       st.lists(st.floats(-1, 1), min_size=12, max_size=12))
def test_marching_tet_properties(vals, jitter):
    tet = REF + 0.2 * np.array(jitter).reshape(4, 3)
    vol = np.linalg.det(tet[1:] - tet[0]) / 6
    assume(abs(vol) > 1e-3)
    vals = np.array(vals)
    poly = marching_tet(tet, vals)
    if np.all(vals > 0) or np.all(vals < 0):
        assert poly is None
        return
    assert len(poly.vertices) == (4 if (vals < 0).sum() == 2 else 3)
    lam = barycentric(np.repeat(tet[None], len(poly.vertices), axis=0), poly.vertices)
    assert np.all(lam >= -1e-12) and np.all(lam <= 1 + 1e-12)
    # each vertex lies on an edge: exactly two nonzero barycentrics
    assert np.all((np.abs(lam) > 1e-12).sum(axis=1) <= 2)
    # linear interpolant vanishes at the vertices
    assert np.abs(lam @ vals).max() <= 1e-12 * np.abs(vals).max()
    c = poly.vertices.mean(axis=0)
    dev = np.abs((poly.vertices - c) @ poly.n_h)
    assert dev.max() <= 1e-12
    # n_h along the gradient of the linear interpolant
    g = np.linalg.solve(tet[1:] - tet[0], vals[1:] - vals[0])
    assert poly.n_h @ g > 0
    # counter-clockwise about n_h: Newell vector parallel to n_h
    v = poly.vertices
    newell = 0.5 * sum(np.cross(v[k], v[(k + 1) % len(v)]) for k in range(len(v)))
    assert newell @ poly.n_h == pytest.approx(poly.area, rel=1e-10, abs=1e-14)


def test_sample_level_set_signs_and_perturbation(sphere):
    m = build_background_mesh(UNIT, 8, sphere)
    vals = sample_level_set(m, sphere)
    d = np.linalg.norm(m.nodes - 0.5, axis=1)
    assert np.all(vals[d < 0.3 - 1e-9] < 0)
    assert np.all(vals[d > 0.3 + 1e-9] > 0)
    plane = make_surface("plane", (0.5, 0.5, 0.5), (), (0, 0, 1))
    pv = sample_level_set(m, plane)
    on = np.isclose(m.nodes[:, 2], 0.5)
    assert np.all(pv[on] == pytest.approx(1e-12 * m.h))
    assert not np.any(pv == 0)


def test_sphere_area_converges_second_order(sphere):
    exact = 4 * np.pi * 0.3**2
    errs = []
    for n in (8, 16, 32):
        c = _cuts(sphere, n)
        errs.append(abs(c.total_area - exact))
        if n == 16:
            assert errs[-1] < 0.05 * exact
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.6)


def test_offset_plane_cross_section():
    plane = make_surface("plane", (0.5, 0.5, 0.5 + 1e-4), (), (0, 0, 1))
    c = _cuts(plane, 8)
    assert c.total_area == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("n", [8, 16])
def test_watertight_euler_and_conormals(spheroid, n):
    c = _cuts(spheroid, n)
    e = c.edges  # raises NotWatertight on failure
    assert c.euler_characteristic() == 2
    seg = e.segments[:, 1] - e.segments[:, 0]
    seg /= np.linalg.norm(seg, axis=1)[:, None]
    for side in range(2):
        nu = e.conormals[:, side]
        assert np.allclose(np.linalg.norm(nu, axis=1), 1.0)
        assert np.abs(np.einsum("ij,ij->i", nu, seg)).max() < 1e-10
        assert np.abs(np.einsum("ij,ij->i", nu, c.normals[e.polys[:, side]])).max() < 1e-12
        # exterior: points away from the polygon centroid
        mid = e.segments.mean(axis=1)
        out = np.einsum("ij,ij->i", nu, mid - c.centroids[e.polys[:, side]])
        assert np.all(out > 0)
    # neighbouring normals agree in orientation
    assert np.all(np.einsum("ij,ij->i", c.normals[e.polys[:, 0]], c.normals[e.polys[:, 1]]) > 0)


def test_conormal_residual_decays(sphere):
    res = []
    for n in (8, 16, 32):
        e = _cuts(sphere, n).edges
        res.append(np.linalg.norm(e.conormals.sum(axis=1), axis=1).max())
    assert res[0] / res[1] > 1.6 and res[1] / res[2] > 1.6


def test_normals_follow_level_set_gradient(spheroid):
    c = _cuts(spheroid, 16)
    g = spheroid.level_set_gradient(c.centroids)
    assert np.all(np.einsum("ij,ij->i", g, c.normals) > 0)


def test_surface_quadrature_weights_and_containment(spheroid):
    c = _cuts(spheroid, 16)
    q = surface_quadrature(c)
    assert np.all(q.weights > 0)
    sums = q.polygon_sums(q.weights, c.n_polygons)
    assert np.allclose(sums, c.areas, rtol=1e-12)
    m = c.mesh
    lam = barycentric(m.nodes[m.tet_nodes(c.parent[q.owner])], q.points)
    assert lam.min() >= -1e-12 and lam.max() <= 1 + 1e-12


def test_polygon_quadrature_basic_integrals():
    tri = CutPolygon(0, np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([0, 0, 1.]), 0.5)
    assert polygon_quadrature(tri).weights.sum() == pytest.approx(0.5)
    square = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    sq = CutPolygon(0, square, np.array([0, 0, 1.]), 1.0)
    q = polygon_quadrature(sq)
    assert q.weights.sum() == pytest.approx(1.0)
    assert np.sum(q.weights * q.points[:, 0] ** 2) == pytest.approx(1 / 3, abs=1e-14)
    with pytest.raises(ValueError):
        polygon_quadrature(sq, degree=3)


def test_polygon_quadrature_exact_to_degree_two(rng):
    """Compare against the exact monomial integrals over the fan triangles."""
    for _ in range(10):
        tet = rng.uniform(0, 1, (4, 3))
        vals = rng.uniform(-1, 1, 4)
        vals[0], vals[1] = -abs(vals[0]), abs(vals[1])
        poly = marching_tet(tet, vals)
        q = polygon_quadrature(poly)
        v = poly.vertices
        cen = v.mean(axis=0)
        a = rng.standard_normal(3)
        B = rng.standard_normal((3, 3))
        f = lambda x: 1.0 + x @ a + np.einsum("qi,ij,qj->q", x, B, x)
        approx = np.sum(q.weights * f(q.points))
        exact = 0.0
        for k in range(len(v)):
            t = np.array([cen, v[k], v[(k + 1) % len(v)]])
            # f in barycentrics of t: x = sum l_i t_i and 1 = sum l_i
            for i in range(3):
                e = [0, 0, 0]
                e[i] = 1
                exact += (1.0 + t[i] @ a) * triangle_monomial(t, *e)
                for j in range(3):
                    e2 = [0, 0, 0]
                    e2[i] += 1
                    e2[j] += 1
                    exact += t[i] @ B @ t[j] * triangle_monomial(t, *e2)
        assert approx == pytest.approx(exact, rel=1e-12)
