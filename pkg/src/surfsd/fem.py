"""Coefficients, stabilization parameters and assembly of the stabilized system.

Matrix convention: row ``i`` is the test function, column ``j`` the trial
function, ``A[i, j] = A_h(phi_j, phi_i)``, so that ``A @ U = b`` with
``b[i] = L_h(phi_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .cut import build_cut_surface, sample_level_set, surface_quadrature
from .errors import ConfigError, NotTangential
from .geometry import AnalyticField, ImplicitSurface
from .mesh import build_background_mesh, extract_active_mesh


def compute_tau1(c_tau: float, beta_inf: float, h: float, eps: float) -> float:
    """Streamline-diffusion weight ``c_tau * min(1/beta_inf, h/eps)``."""
    if beta_inf * h >= eps:
        return c_tau / beta_inf
    return c_tau * h / eps


@dataclass(frozen=True)
class StabilizationParams:
    """Method dials for one mesh.

    ``tau2=None`` selects the default ``1/tau1``.
    """

    eps: float
    c_tau: float
    beta_inf: float
    h: float
    tau2_value: float | None = None
    gamma: float = 1.0

    def __post_init__(self):
        if self.eps < 0:
            raise ConfigError("eps", "diffusion must be nonnegative")
        if self.c_tau < 0:
            raise ConfigError("c_tau", "must be nonnegative")
        if not 0.0 <= self.gamma < 2.0:
            raise ConfigError("gamma", f"exponent must lie in [0, 2), got {self.gamma}")
        if self.beta_inf <= 0:
            raise ConfigError("beta", "beta_inf must be positive")
        if self.tau2_value is None and self.c_tau == 0:
            raise ConfigError("tau2", "tau2 = 1/tau1 is undefined for c_tau = 0; set tau2 explicitly")
        if self.tau2_value is not None and self.tau2_value <= 0:
            raise ConfigError("tau2", "must be positive")

    @property
    def tau1(self) -> float:
        return compute_tau1(self.c_tau, self.beta_inf, self.h, self.eps)

    @property
    def tau2(self) -> float:
        return 1.0 / self.tau1 if self.tau2_value is None else self.tau2_value

    @property
    def high_peclet(self) -> bool:
        return self.beta_inf * self.h >= self.eps


def tet_gradients(x):
    """Barycentric gradients ``(M, 4, 3)`` of tets with vertices ``(M, 4, 3)``."""
    d = x[:, 1:] - x[:, :1]
    g = np.linalg.inv(d).transpose(0, 2, 1)
    return np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)


def barycentric(x, pts):
    """Barycentric coordinates of ``pts (Q, 3)`` in tets ``x (Q, 4, 3)``."""
    d = x[:, 1:] - x[:, :1]
    lam = np.linalg.solve(d.transpose(0, 2, 1), (pts - x[:, 0])[..., None])[..., 0]
    return np.column_stack([1.0 - lam.sum(axis=1), lam])


@dataclass
class TraceSpace:
    """P1 trace space on the active mesh with its surface quadrature.

    Polygon ``k`` of ``cuts`` lives in active tet ``k``.
    """

    surface: ImplicitSurface
    mesh: object
    cuts: object
    active: object
    quad: object

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def n_dofs(self) -> int:
        return self.active.n_dofs

    @cached_property
    def tet_coords(self) -> np.ndarray:
        return self.mesh.nodes[self.active.tet_nodes]

    @cached_property
    def grads(self) -> np.ndarray:
        return tet_gradients(self.tet_coords)

    @cached_property
    def projectors(self) -> np.ndarray:
        n = self.cuts.normals
        return np.eye(3)[None] - n[:, :, None] * n[:, None, :]

    @cached_property
    def tangential_grads(self) -> np.ndarray:
        """``P_h grad(phi_i)`` per polygon, ``(P, 4, 3)``."""
        return np.einsum("pij,pkj->pki", self.projectors, self.grads)

    @cached_property
    def normal_derivs(self) -> np.ndarray:
        """``n_h . grad(phi_i)`` per active tet, ``(P, 4)``."""
        return np.einsum("pkj,pj->pk", self.grads, self.cuts.normals)

    @cached_property
    def bary(self) -> np.ndarray:
        q = self.quad
        return barycentric(self.tet_coords[q.owner], q.points)

    @cached_property
    def starts(self) -> np.ndarray:
        """Index of the first quadrature point of each polygon."""
        return np.searchsorted(self.quad.owner, np.arange(self.cuts.n_polygons))

    def per_polygon(self, local):
        """Sum per-point arrays ``(Q, ...)`` into per-polygon ``(P, ...)``."""
        return np.add.reduceat(local, self.starts, axis=0)

    def scatter_matrix(self, local, shape=None) -> sp.csr_matrix:
        """Global CSR matrix from per-tet ``(P, 4, 4)`` blocks."""
        td = self.active.tet_dofs
        rows = np.repeat(td[:, :, None], 4, axis=2).ravel()
        cols = np.repeat(td[:, None, :], 4, axis=1).ravel()
        n = self.n_dofs
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=shape or (n, n))

    def scatter_vector(self, local) -> np.ndarray:
        return np.bincount(self.active.tet_dofs.ravel(), weights=local.ravel(),
                           minlength=self.n_dofs)

    def evaluate(self, u_dofs, at="quad"):
        """P1 function values at quadrature points (``at="quad"``)."""
        u_dofs = np.asarray(u_dofs)
        local = u_dofs[self.active.tet_dofs]
        return np.einsum("qk,qk->q", self.bary, local[self.quad.owner])

    def gradient(self, u_dofs) -> np.ndarray:
        """Ambient gradient per active tet, ``(P, 3)``."""
        local = np.asarray(u_dofs)[self.active.tet_dofs]
        return np.einsum("pk,pkj->pj", local, self.grads)

    def vertex_values(self, u_dofs) -> np.ndarray:
        """P1 values at polygon vertices, ``(P, 4)`` (triangles repeat)."""
        x = self.cuts.verts.reshape(-1, 3)
        owner = np.repeat(np.arange(self.cuts.n_polygons), 4)
        lam = barycentric(self.tet_coords[owner], x)
        local = np.asarray(u_dofs)[self.active.tet_dofs][owner]
        return np.einsum("qk,qk->q", lam, local).reshape(-1, 4)

    def interpolate(self, field: AnalyticField, extend=True) -> np.ndarray:
        """Nodal values of ``field o p`` (or of ``field`` when ``extend`` is false)."""
        x = self.mesh.nodes[self.active.dofs]
        if extend:
            x = self.surface.closest_point(x, band=np.inf).foot
        return field(x)


def build_space(surface: ImplicitSurface, box, n: int) -> TraceSpace:
    mesh = build_background_mesh(box, n, surface)
    values = sample_level_set(mesh, surface)
    cuts = build_cut_surface(mesh, values)
    active = extract_active_mesh(mesh, cuts)
    return TraceSpace(surface, mesh, cuts, active, surface_quadrature(cuts))


@dataclass
class CoefficientField:
    """Nodal pullback interpolants of alpha and beta on the active mesh."""

    space: TraceSpace
    alpha_nodal: np.ndarray
    beta_nodal: np.ndarray

    @cached_property
    def alpha_q(self) -> np.ndarray:
        return self.space.evaluate(self.alpha_nodal)

    @cached_property
    def beta_q(self) -> np.ndarray:
        """``P_h`` applied to the interpolated beta at quadrature points."""
        s = self.space
        local = self.beta_nodal[s.active.tet_dofs][s.quad.owner]  # (Q, 4, 3)
        raw = np.einsum("qk,qkd->qd", s.bary, local)
        return np.einsum("qij,qj->qi", s.projectors[s.quad.owner], raw)

    @cached_property
    def beta_inf(self) -> float:
        return float(np.linalg.norm(self.beta_q, axis=1).max()) if len(self.beta_q) else 0.0

    @cached_property
    def streamline_grads(self) -> np.ndarray:
        """``beta_h . grad_{Gamma_h} phi_i`` at quadrature points, ``(Q, 4)``."""
        s = self.space
        return np.einsum("qd,qkd->qk", self.beta_q, s.tangential_grads[s.quad.owner])

    @property
    def alpha_is_zero(self) -> bool:
        return not np.any(self.alpha_nodal)


def build_coefficients(alpha: AnalyticField, beta: AnalyticField, space: TraceSpace,
                       tangency_tol: float = 1e-8) -> CoefficientField:
    x = space.mesh.nodes[space.active.dofs]
    cp = space.surface.closest_point(x, band=np.inf)
    a = alpha(cp.foot)
    b = beta(cp.foot)
    bmax = np.linalg.norm(b, axis=1).max()
    if bmax > 0:
        normal_part = np.abs(np.einsum("ij,ij->i", b, cp.normal))
        if normal_part.max() > tangency_tol * bmax:
            raise NotTangential(
                f"beta has normal component {normal_part.max():.3e} on the surface "
                f"(beta_inf {bmax:.3e})"
            )
    return CoefficientField(space, a, b)


def coefficient_accuracy(coeffs: CoefficientField, beta: AnalyticField) -> float:
    """``max |beta^e - P_h beta_h|`` over the quadrature points."""
    s = coeffs.space
    be = beta(s.surface.closest_point(s.quad.points, band=np.inf).foot)
    return float(np.linalg.norm(be - coeffs.beta_q, axis=1).max())


def make_params(coeffs: CoefficientField, eps: float, c_tau: float, tau2=None,
                gamma: float = 1.0, beta_inf: float | None = None) -> StabilizationParams:
    binf = coeffs.beta_inf if beta_inf is None else beta_inf
    if binf == 0:
        binf = 1.0
    return StabilizationParams(eps, c_tau, binf, coeffs.space.h, tau2, gamma)


# ---------------------------------------------------------------------------
# element contributions, all (P, 4, 4) with [test, trial]


def local_ah(coeffs: CoefficientField, eps: float) -> np.ndarray:
    s = coeffs.space
    w = s.quad.weights
    lam = s.bary
    bg = coeffs.streamline_grads
    conv = np.einsum("q,qi,qj->qij", w, lam, bg)
    mass = np.einsum("q,qi,qj->qij", w * coeffs.alpha_q, lam, lam)
    loc = s.per_polygon(conv + mass)
    tg = s.tangential_grads
    loc += eps * s.cuts.areas[:, None, None] * np.einsum("pid,pjd->pij", tg, tg)
    return loc


def local_sh1(coeffs: CoefficientField, tau1: float, h: float) -> np.ndarray:
    s = coeffs.space
    w = s.quad.weights
    bg = coeffs.streamline_grads
    left = bg + coeffs.alpha_q[:, None] * s.bary  # trial slot
    return tau1 * h * s.per_polygon(np.einsum("q,qi,qj->qij", w, bg, left))


def local_sh2(space: TraceSpace, tau2: float, gamma: float, h: float) -> np.ndarray:
    nd = space.normal_derivs
    return tau2 * h**gamma * space.active.volumes[:, None, None] * nd[:, :, None] * nd[:, None, :]


def assemble_ah(coeffs: CoefficientField, eps: float) -> sp.csr_matrix:
    return coeffs.space.scatter_matrix(local_ah(coeffs, eps))


def assemble_sh1(coeffs: CoefficientField, tau1: float, h: float) -> sp.csr_matrix:
    return coeffs.space.scatter_matrix(local_sh1(coeffs, tau1, h))


def assemble_sh2(space: TraceSpace, tau2: float, gamma: float, h: float) -> sp.csr_matrix:
    return space.scatter_matrix(local_sh2(space, tau2, gamma, h))


def evaluate_rhs_field(space: TraceSpace, f: AnalyticField) -> np.ndarray:
    """``f^e = f o p`` at the quadrature points."""
    return f(space.surface.closest_point(space.quad.points).foot)


def assemble_rhs(coeffs: CoefficientField, f_q: np.ndarray, tau1: float, h: float) -> np.ndarray:
    """Load vector from ``f^e`` sampled at the quadrature points."""
    s = coeffs.space
    wf = s.quad.weights * f_q
    local = wf[:, None] * (s.bary + tau1 * h * coeffs.streamline_grads)
    return s.scatter_vector(s.per_polygon(local))


def mean_weights(space: TraceSpace) -> np.ndarray:
    """``M_i = integral of phi_i over Gamma_h``."""
    local = space.per_polygon(space.quad.weights[:, None] * space.bary)
    return space.scatter_vector(local)


@dataclass
class LinearSystem:
    """Stiffness matrix over active DOFs, load vector, optional mean constraint."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constraint: np.ndarray | None = None
    params: StabilizationParams | None = None
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    @property
    def size(self) -> int:
        return self.n_dofs + (self.constraint is not None)

    @cached_property
    def full_matrix(self) -> sp.csr_matrix:
        """The matrix actually solved (augmented when constrained)."""
        if self.constraint is None:
            return self.matrix
        m = self.constraint[:, None]
        return sp.bmat([[self.matrix, sp.csr_matrix(m)], [sp.csr_matrix(m.T), None]],
                       format="csr")

    @property
    def full_rhs(self) -> np.ndarray:
        if self.constraint is None:
            return self.rhs
        return np.append(self.rhs, 0.0)


def assemble_system(coeffs: CoefficientField, params: StabilizationParams, f_q: np.ndarray,
                    constraint: bool | None = None) -> LinearSystem:
    """``A = a_h + s_h1 + s_h2``; constraint defaults to on iff alpha == 0 and eps > 0."""
    s = coeffs.space
    h = s.h
    ah = assemble_ah(coeffs, params.eps)
    sh1 = assemble_sh1(coeffs, params.tau1, h)
    sh2 = assemble_sh2(s, params.tau2, params.gamma, h)
    a = (ah + sh1 + sh2).tocsr()
    a.sum_duplicates()
    b = assemble_rhs(coeffs, f_q, params.tau1, h)
    if constraint is None:
        constraint = coeffs.alpha_is_zero and params.eps > 0
    m = mean_weights(s) if constraint else None
    return LinearSystem(a, b, m, params, {"ah": ah, "sh1": sh1, "sh2": sh2})
