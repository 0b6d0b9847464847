import numpy as np
import pytest

from oracles import dense_assembly, p1_basis, polygon_normal, refined_polygon_rule
from surfsd.errors import ConfigError, NotTangential
from surfsd.fem import (CoefficientField, StabilizationParams, assemble_rhs, assemble_sh2,
                        assemble_system, build_coefficients, build_space, coefficient_accuracy,
                        compute_tau1, local_ah, local_sh1, local_sh2, make_params, mean_weights)
from surfsd.geometry import AnalyticField, make_surface
from surfsd.problems import spheroid_smooth

UNIT = ((0, 0, 0), (1, 1, 1))
ROT = AnalyticField(lambda p: np.column_stack([.5 - p[:, 1], p[:, 0] - .5, 0 * p[:, 0]]),
                    vector=True)


def test_tau1_branches():
    assert compute_tau1(0.5, 1, 0.1, 1e-3) == pytest.approx(0.5)
    assert compute_tau1(0.5, 1, 0.01, 1) == pytest.approx(0.005)
    h = 0.037
    assert compute_tau1(0.5, 1, h, h) == pytest.approx(0.5)
    assert compute_tau1(0.5, 1, h, h * (1 + 1e-12)) == pytest.approx(0.5, rel=1e-10)
    assert compute_tau1(0.0, 2.0, 0.1, 0.0) == 0.0


def test_params_validation():
    with pytest.raises(ConfigError):
        StabilizationParams(1e-3, 0.5, 1.0, 0.1, gamma=2.0)
    with pytest.raises(ConfigError):
        StabilizationParams(-1.0, 0.5, 1.0, 0.1)
    with pytest.raises(ConfigError):
        StabilizationParams(0.0, 0.0, 1.0, 0.1)  # tau2 = 1/tau1 undefined
    with pytest.raises(ConfigError):
        StabilizationParams(0.0, 0.5, 1.0, 0.1, tau2_value=-1.0)
    p = StabilizationParams(0.0, 0.5, 2.0, 0.1)
    assert p.tau1 == pytest.approx(0.25)
    assert p.tau2 == pytest.approx(4.0)
    assert p.high_peclet
    q = StabilizationParams(1.0, 0.5, 1.0, 0.01, tau2_value=3.0, gamma=0.0)
    assert not q.high_peclet and q.tau2 == 3.0


def test_coefficients_reproduce_constants_and_check_tangency(space8):
    c = build_coefficients(AnalyticField.constant(1.0), ROT, space8)
    assert np.all(c.alpha_nodal == 1.0)
    assert np.allclose(c.alpha_q, 1.0, atol=1e-14)
    normal = np.einsum("qd,qd->q", c.beta_q, space8.cuts.normals[space8.quad.owner])
    assert np.abs(normal).max() <= 1e-12
    bad = AnalyticField.constant(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(NotTangential):
        build_coefficients(AnalyticField.constant(1.0), bad, space8)


def test_coefficient_accuracy_decays(spheroid):
    proj, interp = [], []
    for n in (8, 16, 32):
        s = build_space(spheroid, UNIT, n)
        c = build_coefficients(AnalyticField.constant(0.0), ROT, s)
        proj.append(coefficient_accuracy(c, ROT))
        raw = np.einsum("qk,qkd->qd", s.bary, c.beta_nodal[s.active.tet_dofs][s.quad.owner])
        be = ROT(spheroid.closest_point(s.quad.points, band=np.inf).foot)
        interp.append(np.linalg.norm(be - raw, axis=1).max())
    # the interpolant itself is second order; applying P_h adds (n_h . beta) n_h,
    # which is first order because n - n_h is
    r_interp = np.log2(np.array(interp[:-1]) / interp[1:])
    r_proj = np.log2(np.array(proj[:-1]) / proj[1:])
    assert np.all(r_interp > 1.7), interp
    assert np.all(r_proj > 0.8), proj


def _const_coeffs(space, alpha, beta):
    n = space.n_dofs
    return CoefficientField(space, np.full(n, float(alpha)), np.tile(np.asarray(beta, float), (n, 1)))


def _polygon_oracle(space, p, alpha, beta, eps, tau1):
    """Local a_h and s_h1 of polygon ``p`` on a 10x refined rule."""
    tet_nodes = space.active.tet_nodes[p]
    tet = space.mesh.nodes[tet_nodes]
    C = p1_basis(tet)
    G = C[:, 1:]
    verts = space.cuts.verts[p, :int(space.cuts.nverts[p])]
    pos = tet[space.cuts.values[tet_nodes] > 0].mean(axis=0)
    nh = polygon_normal(verts, pos)
    P = np.eye(3) - np.outer(nh, nh)
    tg = G @ P
    b = P @ beta
    pts, wts = refined_polygon_rule(verts, 10)
    lam = np.column_stack([np.ones(len(pts)), pts]) @ C.T
    sg = tg @ b
    area = wts.sum()
    ah = (np.einsum("q,qi->i", wts, lam)[:, None] * sg[None, :]
          + alpha * np.einsum("q,qi,qj->ij", wts, lam, lam)
          + eps * area * tg @ tg.T)
    s1 = tau1 * space.h * (area * np.outer(sg, sg) + alpha * np.outer(sg, wts @ lam))
    return ah, s1, area


def test_single_polygon_against_refined_rule(space8, rng):
    beta = np.array([0.3, -0.7, 0.2])
    coeffs = _const_coeffs(space8, 1.3, beta)
    la = local_ah(coeffs, 0.1)
    ls = local_sh1(coeffs, 0.4, space8.h)
    for p in rng.choice(space8.cuts.n_polygons, 10, replace=False):
        ah, s1, area = _polygon_oracle(space8, p, 1.3, beta, 0.1, 0.4)
        assert area == pytest.approx(space8.cuts.areas[p], rel=1e-12)
        assert np.abs(la[p] - ah).max() <= 1e-12 * np.abs(ah).max()
        assert np.abs(ls[p] - s1).max() <= 1e-12 * np.abs(s1).max()


def test_local_mass_and_convection_examples(space8):
    coeffs = _const_coeffs(space8, 1.0, np.zeros(3))
    la = local_ah(coeffs, 0.0)
    assert np.allclose(la.sum(axis=(1, 2)), space8.cuts.areas, rtol=1e-12)
    beta = np.array([1.0, 0.5, -0.25])
    coeffs = _const_coeffs(space8, 0.0, beta)
    la = local_ah(coeffs, 0.0)
    p = 3
    v = space8.mesh.nodes[space8.active.tet_nodes[p]][:, 0]  # v = x, linear
    P = space8.projectors[p]
    expected = space8.cuts.areas[p] * (P @ beta) @ (P @ np.array([1.0, 0, 0]))
    assert la[p].sum(axis=0) @ v == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_sh1_examples(coeffs8, rng):
    assert not np.any(local_sh1(coeffs8, 0.0, coeffs8.space.h))
    c0 = CoefficientField(coeffs8.space, np.zeros(coeffs8.space.n_dofs), coeffs8.beta_nodal)
    m = coeffs8.space.scatter_matrix(local_sh1(c0, 0.5, coeffs8.space.h)).toarray()
    assert np.abs(m - m.T).max() <= 1e-14 * np.abs(m).max()
    v = rng.standard_normal((50, m.shape[0]))
    assert np.all(np.einsum("ki,ij,kj->k", v, m, v) >= -1e-14 * np.abs(m).max())


def test_sh2_examples(space8, rng):
    loc = local_sh2(space8, 2.0, 1.0, space8.h)
    p = 5
    G = p1_basis(space8.mesh.nodes[space8.active.tet_nodes[p]])[:, 1:]
    nh = space8.cuts.normals[p]
    # v with grad v = n_h: coefficients x . n_h at the vertices
    v = space8.mesh.nodes[space8.active.tet_nodes[p]] @ nh
    assert np.allclose(G.T @ v, nh)
    assert v @ loc[p] @ v == pytest.approx(2.0 * space8.h * space8.active.volumes[p], rel=1e-12)
    t = np.cross(nh, [1.0, 0.0, 0.0])
    w = space8.mesh.nodes[space8.active.tet_nodes[p]] @ t
    assert abs(w @ loc[p] @ w) <= 1e-14
    m = assemble_sh2(space8, 1.0, 1.0, space8.h).toarray()
    vs = rng.standard_normal((100, m.shape[0]))
    assert np.all(np.einsum("ki,ij,kj->k", vs, m, vs) >= -1e-13)


def test_rhs_examples(coeffs8):
    s = coeffs8.space
    assert not np.any(assemble_rhs(coeffs8, np.zeros(len(s.quad.weights)), 0.3, s.h))
    b = assemble_rhs(coeffs8, np.ones(len(s.quad.weights)), 0.0, s.h)
    assert b.sum() == pytest.approx(s.cuts.total_area, rel=1e-12)
    assert np.allclose(b, mean_weights(s), rtol=1e-14)
    # beta . grad(sum phi_i) = 0, so the streamline term cancels in the sum
    b2 = assemble_rhs(coeffs8, np.ones(len(s.quad.weights)), 0.3, s.h)
    assert b2.sum() == pytest.approx(s.cuts.total_area, rel=1e-12)


def test_rhs_single_polygon_against_refined_rule(space8):
    beta = np.array([0.2, 0.1, -0.4])
    coeffs = _const_coeffs(space8, 0.0, beta)
    a, b = 0.7, np.array([1.0, -2.0, 0.5])
    f_q = a + space8.quad.points @ b
    tau1 = 0.2
    p = 7
    tet = space8.mesh.nodes[space8.active.tet_nodes[p]]
    C = p1_basis(tet)
    nh = space8.cuts.normals[p]
    P = np.eye(3) - np.outer(nh, nh)
    sg = (C[:, 1:] @ P) @ (P @ beta)
    pts, wts = refined_polygon_rule(space8.cuts.verts[p, :int(space8.cuts.nverts[p])], 10)
    lam = np.column_stack([np.ones(len(pts)), pts]) @ C.T
    fv = a + pts @ b
    ref = wts @ (fv[:, None] * (lam + tau1 * space8.h * sg[None, :]))
    mask = space8.quad.owner == p
    local = (space8.quad.weights[mask] * f_q[mask]) @ (
        space8.bary[mask] + tau1 * space8.h * coeffs.streamline_grads[mask])
    assert np.abs(local - ref).max() <= 1e-12 * np.abs(ref).max()


def test_full_system_matches_dense_oracle(cond_problem, space8, coeffs8):
    params = make_params(coeffs8, 0.0, 0.5, gamma=1.0)
    sys_ = assemble_system(coeffs8, params, np.zeros(len(space8.quad.weights)))
    A, ah, s1, s2 = dense_assembly(space8, coeffs8.alpha_nodal, coeffs8.beta_nodal, 0.0,
                                   params.tau1, params.tau2, params.gamma)
    scale = np.abs(A).max()
    assert np.abs(sys_.matrix.toarray() - A).max() <= 1e-10 * scale
    assert np.abs(sys_.parts["ah"].toarray() - ah).max() <= 1e-10 * scale
    assert np.abs(sys_.parts["sh1"].toarray() - s1).max() <= 1e-10 * scale
    assert np.abs(sys_.parts["sh2"].toarray() - s2).max() <= 1e-10 * scale
    assert sys_.constraint is None and sys_.size == space8.n_dofs


def test_symmetry_when_beta_vanishes(space8):
    coeffs = _const_coeffs(space8, 1.0, np.zeros(3))
    params = StabilizationParams(0.1, 0.5, 1.0, space8.h)
    a = assemble_system(coeffs, params, np.zeros(len(space8.quad.weights))).matrix.toarray()
    assert np.abs(a - a.T).max() <= 1e-12 * np.abs(a).max()


def test_constraint_and_constant_kernel(smooth_problem):
    s = build_space(smooth_problem.surface, UNIT, 8)
    coeffs = build_coefficients(smooth_problem.alpha, smooth_problem.beta, s)
    params = make_params(coeffs, smooth_problem.eps, 0.5, gamma=0.0)
    system = assemble_system(coeffs, params, np.zeros(len(s.quad.weights)))
    assert system.constraint is not None
    assert system.size == s.n_dofs + 1 and system.full_matrix.shape == (s.n_dofs + 1,) * 2
    # alpha = 0: constants lie in the kernel of every part
    assert np.abs(system.matrix @ np.ones(s.n_dofs)).max() <= 1e-12 * abs(system.matrix).max()
    assert system.constraint.sum() == pytest.approx(s.cuts.total_area, rel=1e-12)
    full = system.full_matrix.toarray()
    assert np.linalg.matrix_rank(full) == full.shape[0]


def test_sparsity_within_active_adjacency(space8, coeffs8):
    params = make_params(coeffs8, 0.0, 0.5)
    a = assemble_system(coeffs8, params, np.zeros(len(space8.quad.weights))).matrix.tocoo()
    allowed = set()
    for dofs in space8.active.tet_dofs:
        for i in dofs:
            for j in dofs:
                allowed.add((int(i), int(j)))
    assert {(int(i), int(j)) for i, j in zip(a.row, a.col)} <= allowed


def test_plane_rotation_field_passes_tangency():
    problem = spheroid_smooth()
    s = build_space(problem.surface, UNIT, 8)
    build_coefficients(problem.alpha, problem.beta, s)
    plane = make_surface("plane", (0.5, 0.5, 0.5), (), (0, 0, 1))
    ps = build_space(plane, UNIT, 4)
    build_coefficients(AnalyticField.constant(1.0), AnalyticField.constant(np.array([1.0, 2, 0])), ps)
