"""Error norms, convergence rates and assumption diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateLevels
from .fem import barycentric
from .geometry import extension_derivatives, normal_extension

# 4-point degree-2 rule on the reference tet (barycentric coordinates)
_A, _B = 0.5854101966249685, 0.1381966011250105
TET_RULE = np.array([[_A, _B, _B, _B], [_B, _A, _B, _B], [_B, _B, _A, _B], [_B, _B, _B, _A]])
_FD1 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_FD_OFF = np.array([-2.0, -1.0, 1.0, 2.0])


@dataclass
class ErrorReport:
    h: float
    n_dofs: int
    l2_err: float
    h1t_err: float
    sd_err: float
    ns_err: float
    triple_err: float
    eps: float = 0.0


@dataclass
class ExactData:
    """``u^e`` sampled where the norms need it."""

    value: np.ndarray  # (Q,) at surface quadrature points
    grad: np.ndarray  # (Q, 3) ambient gradient there
    normal_deriv: np.ndarray  # (P, 4) n_h . grad u^e at tet quadrature points


def volume_points(space):
    """Tet quadrature points ``(P, 4, 3)`` of the active mesh."""
    return np.einsum("qk,pkd->pqd", TET_RULE, space.tet_coords)


def sample_exact(space, u_exact, h_fd=None) -> ExactData:
    surf = space.surface
    hh = 1e-3 * surf.diameter if h_fd is None else h_fd
    value, grad, _ = extension_derivatives(u_exact, surf, space.quad.points, hh)
    # directional derivative along n_h in the full tets
    xv = volume_points(space)
    nh = space.cuts.normals
    stencil = xv[:, :, None, :] + (_FD_OFF[None, None, :, None] * hh) * nh[:, None, None, :]
    vals = normal_extension(u_exact, surf, stencil.reshape(-1, 3), band=np.inf)
    nd = vals.reshape(xv.shape[0], 4, 4) @ _FD1 / hh
    return ExactData(value, grad, nd)


def difference_norms(space, coeffs, params, dv, dg, dn):
    """Norms of a difference given by its surface values ``dv (Q,)``,
    ambient gradients ``dg (Q, 3)`` and tet normal derivatives ``dn (P, 4)``."""
    w = space.quad.weights
    owner = space.quad.owner
    dt = np.einsum("qij,qj->qi", space.projectors[owner], dg)
    l2 = np.sqrt(np.sum(w * dv**2))
    h1t = np.sqrt(np.sum(w * np.einsum("qi,qi->q", dt, dt)))
    sd2 = params.tau1 * space.h * np.sum(w * np.einsum("qi,qi->q", coeffs.beta_q, dt) ** 2)
    vol = space.active.volumes
    ns2 = params.tau2 * space.h**params.gamma * np.sum(vol[:, None] / 4.0 * dn**2)
    sd, ns = np.sqrt(sd2), np.sqrt(ns2)
    triple = np.sqrt(l2**2 + params.eps * h1t**2 + sd2 + ns2)
    return ErrorReport(space.h, space.n_dofs, float(l2), float(h1t), float(sd), float(ns),
                       float(triple), params.eps)


def compute_errors(space, coeffs, params, u_h, u_exact, exact: ExactData | None = None) -> ErrorReport:
    """``u^e - u_h`` in the L2, tangential H1, streamline, normal and triple norms."""
    ex = sample_exact(space, u_exact) if exact is None else exact
    uh_q = space.evaluate(u_h)
    gh = space.gradient(u_h)  # (P, 3)
    dv = ex.value - uh_q
    dg = ex.grad - gh[space.quad.owner]
    dn = ex.normal_deriv - np.einsum("pd,pd->p", gh, space.cuts.normals)[:, None]
    return difference_norms(space, coeffs, params, dv, dg, dn)


def triple_norm_matrix(space, coeffs, params) -> sp.csr_matrix:
    """SPD matrix ``N`` with ``V^T N V = |||v|||_h^2``."""
    w = space.quad.weights
    lam = space.bary
    bg = coeffs.streamline_grads
    local = space.per_polygon(
        np.einsum("q,qi,qj->qij", w, lam, lam)
        + params.tau1 * space.h * np.einsum("q,qi,qj->qij", w, bg, bg)
    )
    tg = space.tangential_grads
    local += params.eps * space.cuts.areas[:, None, None] * np.einsum("pid,pjd->pij", tg, tg)
    nd = space.normal_derivs
    local += (params.tau2 * space.h**params.gamma * space.active.volumes[:, None, None]
              * nd[:, :, None] * nd[:, None, :])
    return space.scatter_matrix(local)


def eoc(errors, hs):
    """Rates ``log(e_k/e_{k+1}) / log(h_k/h_{k+1})`` for consecutive levels."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if len(e) < 2 or len(e) != len(h):
        raise DegenerateLevels("need at least two levels with matching sizes")
    if np.any(np.diff(h) >= 0):
        raise DegenerateLevels("mesh sizes must decrease strictly")
    if np.any(e <= 0):
        raise DegenerateLevels("zero error on some level (exact reproduction)")
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class GeometryDiagnostics:
    h: float
    max_rho: float
    max_normal_dev: float


def geometry_diagnostics(space) -> GeometryDiagnostics:
    """Distance of ``Gamma_h`` to ``Gamma`` and normal mismatch at quadrature points."""
    cp = space.surface.closest_point(space.quad.points, band=np.inf)
    dev = np.linalg.norm(cp.normal - space.cuts.normals[space.quad.owner], axis=1)
    return GeometryDiagnostics(space.h, float(np.abs(cp.signed_distance).max()), float(dev.max()))


def edge_jump(space, coeffs) -> float:
    """``max |nu_1 . beta_h + nu_2 . beta_h|`` over edge endpoints and midpoints."""
    edges = space.cuts.edges
    pts = np.concatenate(
        [edges.segments[:, 0], edges.segments[:, 1], edges.segments.mean(axis=1)]
    )
    total = np.zeros(len(pts))
    for side in range(2):
        poly = np.tile(edges.polys[:, side], 3)
        lam = barycentric(space.tet_coords[poly], pts)
        raw = np.einsum("qk,qkd->qd", lam, coeffs.beta_nodal[space.active.tet_dofs[poly]])
        bh = np.einsum("qij,qj->qi", space.projectors[poly], raw)
        nu = np.tile(edges.conormals[:, side], (3, 1))
        total += np.einsum("qd,qd->q", nu, bh)
    return float(np.abs(total).max())


def divergence_margin(coeffs) -> float:
    """``min (alpha_h - div_{Gamma_h} beta_h / 2)`` over polygons.

    The tangential divergence of the projected P1 interpolant is
    ``tr(P_h grad beta_int)`` on each flat polygon.
    """
    s = coeffs.space
    local = coeffs.beta_nodal[s.active.tet_dofs]  # (P, 4, 3)
    jac = np.einsum("pkd,pke->pde", local, s.grads)  # d beta_d / d x_e
    div = np.einsum("pij,pji->p", s.projectors, jac)
    alpha_c = coeffs.alpha_nodal[s.active.tet_dofs].mean(axis=1)
    return float(np.min(alpha_c - 0.5 * div))


@dataclass
class OvershootReport:
    u_min: float
    u_max: float
    undershoot: float
    overshoot: float

    @property
    def total(self) -> float:
        return self.undershoot + self.overshoot


def overshoot_report(values, reference_range) -> OvershootReport:
    lo, hi = reference_range
    v = np.asarray(values, dtype=float)
    umin, umax = float(v.min()), float(v.max())
    return OvershootReport(umin, umax, max(0.0, lo - umin), max(0.0, umax - hi))
