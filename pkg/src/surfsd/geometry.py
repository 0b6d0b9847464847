"""Analytic implicit surfaces, closest-point projection and normal extension.

All point arguments accept a single point of shape ``(3,)`` or a stack of
shape ``(N, 3)``; results follow the same leading shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NoConvergence, OutsideBand

SURFACE_KINDS = ("sphere", "spheroid", "plane")


@dataclass(frozen=True)
class ClosestPointResult:
    foot: np.ndarray
    signed_distance: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class ImplicitSurface:
    """Closed (or planar) surface given as the zero set of a level set.

    ``radii`` is ``(r,)`` for a sphere and ``(r_max, r_min)`` for a spheroid
    whose symmetry axis is parallel to z: ``((x-cx)^2 + (y-cy)^2)/r_max^2 +
    (z-cz)^2/r_min^2 - 1``.  A plane passes through ``center`` with unit
    normal ``normal``.  The spheroid level set is that quadratic form, not a
    distance function; the signed distance comes from :meth:`closest_point`.
    """

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    radii: tuple = ()
    normal: tuple = (0.0, 0.0, 1.0)
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    _n: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ConfigError("surface.kind", f"unknown surface kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if len(self.center) != 3:
            raise ConfigError("surface.center", "expected three coordinates")
        expected = {"sphere": 1, "spheroid": 2, "plane": 0}[self.kind]
        if len(self.radii) != expected:
            raise ConfigError("surface.radii", f"{self.kind} needs {expected} radii")
        if any(r <= 0 for r in self.radii):
            raise ConfigError("surface.radii", "radii must be positive")
        n = np.asarray(self.normal, dtype=float)
        if self.kind == "plane":
            norm = np.linalg.norm(n)
            if norm == 0:
                raise ConfigError("surface.normal", "plane normal must be nonzero")
            n = n / norm
            object.__setattr__(self, "normal", tuple(n))
        object.__setattr__(self, "_n", n)

    # -- derived sizes ------------------------------------------------------

    @property
    def diameter(self) -> float:
        if self.kind == "plane":
            return 1.0
        return 2.0 * max(self.radii)

    @property
    def reach(self) -> float:
        if self.kind == "sphere":
            return self.radii[0]
        if self.kind == "spheroid":
            a, c = self.radii
            return min(a, c) ** 2 / max(a, c)
        return np.inf

    @property
    def band(self) -> float:
        """Half-width of the working band around the surface."""
        if self.kind == "plane":
            return np.inf
        # strictly inside the reach so the projection stays single-valued
        return min(0.5 * min(self.radii), 0.9 * self.reach)

    def bounding_box(self, pad: float = 0.0):
        """Axis-aligned bounds ``(lo, hi)``; ``None`` for a plane."""
        c = np.asarray(self.center)
        if self.kind == "sphere":
            ext = np.full(3, self.radii[0])
        elif self.kind == "spheroid":
            a, b = self.radii
            ext = np.array([a, a, b])
        else:
            return None
        return c - ext - pad, c + ext + pad

    # -- level set ----------------------------------------------------------

    def level_set_value(self, x):
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        if self.kind == "sphere":
            return np.linalg.norm(d, axis=-1) - self.radii[0]
        if self.kind == "spheroid":
            a, b = self.radii
            return (d[..., 0] ** 2 + d[..., 1] ** 2) / a**2 + d[..., 2] ** 2 / b**2 - 1.0
        return d @ self._n

    def level_set_gradient(self, x):
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        if self.kind == "sphere":
            r = np.linalg.norm(d, axis=-1)
            return d / r[..., None]
        if self.kind == "spheroid":
            a, b = self.radii
            return 2.0 * d / np.array([a * a, a * a, b * b])
        return np.broadcast_to(self._n, x.shape).copy()

    # -- closest point ------------------------------------------------------

    def closest_point(self, x, band: float | None = None) -> ClosestPointResult:
        """Project ``x`` onto the surface.

        Raises ``OutsideBand`` when ``|rho(x)|`` exceeds ``band`` (default:
        the surface's working band); pass ``band=np.inf`` to project any
        point off the medial set.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        c = np.asarray(self.center)
        if self.kind == "sphere":
            foot, dist, nrm = _sphere_project(pts, c, self.radii[0])
        elif self.kind == "spheroid":
            foot, dist, nrm = _spheroid_project(
                pts, c, *self.radii, tol=self.newton_tol, max_iter=self.newton_max_iter
            )
        else:
            dist = (pts - c) @ self._n
            foot = pts - dist[:, None] * self._n
            nrm = np.broadcast_to(self._n, pts.shape).copy()
        limit = self.band if band is None else band
        if np.isfinite(limit):
            bad = np.abs(dist) > limit
            if np.any(bad):
                worst = float(np.max(np.abs(dist)))
                raise OutsideBand(
                    f"{int(bad.sum())} point(s) farther than {limit:.4g} from the "
                    f"surface (max distance {worst:.4g})"
                )
        if single:
            return ClosestPointResult(foot[0], dist[0], nrm[0])
        return ClosestPointResult(foot, dist, nrm)

    def normal_at(self, x):
        """Unit outward normal of the surface at (or through) ``x``."""
        return self.closest_point(x, band=np.inf).normal


def _sphere_project(pts, c, r):
    d = pts - c
    rad = np.linalg.norm(d, axis=1)
    nrm = np.empty_like(d)
    ok = rad > 0
    nrm[ok] = d[ok] / rad[ok, None]
    nrm[~ok] = (0.0, 0.0, 1.0)
    return c + r * nrm, rad - r, nrm


def _ellipse_nearest(e0, e1, y0, y1, tol, max_iter):
    """Nearest point on the quarter ellipse ``(x0/e0)^2 + (x1/e1)^2 = 1``.

    Requires ``e0 >= e1`` and ``y0, y1 >= 0``.  The interior branch solves
    ``F(t) = (e0 y0/(t+e0^2))^2 + (e1 y1/(t+e1^2))^2 - 1 = 0`` on
    ``t > -e1^2`` by Newton's method from a point where ``F >= 0``; F is
    convex and decreasing there so the iterates increase monotonically.
    A bracket is kept and bisection replaces any step that leaves it.
    The iteration runs on ``s = t + e1^2`` and stops once the step is below
    ``tol * s``, which bounds the relative change of the foot coordinates.
    """
    x0 = np.empty_like(y0)
    x1 = np.empty_like(y1)
    e0s, e1s = e0 * e0, e1 * e1

    on_axis = y0 == 0.0
    x0[on_axis] = 0.0
    x1[on_axis] = e1

    eq = (y1 == 0.0) & ~on_axis
    inner = eq & (y0 < (e0s - e1s) / e0)
    x0[inner] = e0s * y0[inner] / (e0s - e1s)
    x1[inner] = e1 * np.sqrt(np.clip(1.0 - (x0[inner] / e0) ** 2, 0.0, None))
    outer = eq & ~inner
    x0[outer] = e0
    x1[outer] = 0.0

    gen = ~(on_axis | eq)
    if np.any(gen):
        # unknown s = t + e1^2 > 0, kept unshifted to avoid cancellation near the medial axis
        a, b = e0 * y0[gen], e1 * y1[gen]
        gap = e0s - e1s
        lo = np.maximum(b, a - gap)
        hi = np.sqrt(a * a + b * b)
        s = lo.copy()
        active = np.ones(s.shape, dtype=bool)
        for _ in range(max_iter):
            sa = s[active]
            aa, bb = a[active], b[active]
            r0 = aa / (sa + gap)
            r1 = bb / sa
            f = r0 * r0 + r1 * r1 - 1.0
            df = -2.0 * (r0 * r0 / (sa + gap) + r1 * r1 / sa)
            lo_a, hi_a = lo[active], hi[active]
            lo_a = np.where(f > 0, np.maximum(lo_a, sa), lo_a)
            hi_a = np.where(f < 0, np.minimum(hi_a, sa), hi_a)
            sn = sa - f / df
            outside = ~((sn >= lo_a) & (sn <= hi_a))
            sn = np.where(outside, 0.5 * (lo_a + hi_a), sn)
            idx = np.flatnonzero(active)
            s[idx] = sn
            lo[idx] = lo_a
            hi[idx] = hi_a
            # the foot scales like 1/s: stop on the relative change
            done = (np.abs(sn - sa) <= tol * sn) | (f == 0.0)
            active[idx[done]] = False
            if not active.any():
                break
        else:
            if active.any():
                raise NoConvergence(
                    f"spheroid projection: {int(active.sum())} point(s) not converged "
                    f"in {max_iter} iterations"
                )
        x0[gen] = e0s * y0[gen] / (s + gap)
        x1[gen] = e1s * y1[gen] / s
    return x0, x1


def _spheroid_project(pts, c, a, b, tol, max_iter):
    d = pts - c
    rho = np.hypot(d[:, 0], d[:, 1])
    z = d[:, 2]
    az = np.abs(z)
    if a >= b:
        r_f, z_f = _ellipse_nearest(a, b, rho, az, tol, max_iter)
    else:
        z_f, r_f = _ellipse_nearest(b, a, az, rho, tol, max_iter)
    z_f = np.copysign(z_f, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        cphi = np.where(rho > 0, d[:, 0] / rho, 1.0)
        sphi = np.where(rho > 0, d[:, 1] / rho, 0.0)
    foot = np.column_stack([c[0] + r_f * cphi, c[1] + r_f * sphi, c[2] + z_f])
    # normal of the quadratic form at the foot
    g = np.column_stack([r_f * cphi / a**2, r_f * sphi / a**2, z_f / b**2])
    nrm = g / np.linalg.norm(g, axis=1)[:, None]
    phi = (rho / a) ** 2 + (z / b) ** 2 - 1.0
    dist = np.copysign(np.linalg.norm(pts - foot, axis=1), phi)
    dist[phi == 0.0] = 0.0
    return foot, dist, nrm


# ---------------------------------------------------------------------------
# module-level API


def level_set_value(surface: ImplicitSurface, x):
    return surface.level_set_value(x)


def closest_point(surface: ImplicitSurface, x, band: float | None = None) -> ClosestPointResult:
    return surface.closest_point(x, band=band)


@dataclass(frozen=True)
class AnalyticField:
    """Pure function of a point stack ``(N, 3)``.

    Scalar fields return ``(N,)``, vector fields ``(N, 3)``.  ``tangential``
    declares that a vector field is tangent to the surface it is used on.
    """

    func: Callable[[np.ndarray], np.ndarray]
    vector: bool = False
    tangential: bool = False
    name: str = ""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        out = np.asarray(self.func(pts), dtype=float)
        shape = (len(pts), 3) if self.vector else (len(pts),)
        out = np.broadcast_to(out, shape).copy()
        return out[0] if single else out

    @classmethod
    def constant(cls, value, name=""):
        if np.ndim(value) == 0:
            v = float(value)
            return cls(lambda p: np.full(len(p), v), name=name or repr(v))
        vec = np.asarray(value, dtype=float)
        return cls(lambda p: np.tile(vec, (len(p), 1)), vector=True, name=name)


def normal_extension(u: AnalyticField, surface: ImplicitSurface, x, band: float | None = None):
    """Pull back ``u`` along normals: ``u(p(x))``."""
    return u(surface.closest_point(x, band=band).foot)


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_OFFSETS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


def extension_derivatives(u: AnalyticField, surface: ImplicitSurface, q, h_fd: float | None = None,
                          band: float | None = None):
    """Value, ambient gradient and ambient Laplacian of ``u o p`` at ``q``.

    Fourth-order central differences with step ``h_fd`` (default
    ``1e-3 * diameter``).  Because ``u o p`` is constant along normals, at
    points of the surface the gradient is the tangential gradient and the
    Laplacian is the Laplace-Beltrami operator.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    h = 1e-3 * surface.diameter if h_fd is None else float(h_fd)
    n = len(q)
    # stencil: 5 points along each axis, center shared
    shifts = np.zeros((3, 5, 3))
    for k in range(3):
        shifts[k, :, k] = _OFFSETS * h
    pts = q[:, None, None, :] + shifts[None]
    vals = normal_extension(u, surface, pts.reshape(-1, 3), band=band).reshape(n, 3, 5)
    grad = vals @ _D1 / h
    lap = (vals @ _D2).sum(axis=1) / (h * h)
    value = vals[:, 0, 2]
    return value, grad, lap


def manufactured_rhs(u: AnalyticField, beta: AnalyticField, alpha: AnalyticField, eps: float,
                     surface: ImplicitSurface, q, h_fd: float | None = None):
    """``f = beta . grad_G u + alpha u - eps lap_G u`` at surface points ``q``."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    qq = np.atleast_2d(q)
    value, grad, lap = extension_derivatives(u, surface, qq, h_fd)
    f = np.einsum("ij,ij->i", beta(qq), grad) + alpha(qq) * value - eps * lap
    return f[0] if single else f


def manufactured_field(u: AnalyticField, beta: AnalyticField, alpha: AnalyticField, eps: float,
                       surface: ImplicitSurface, h_fd: float | None = None) -> AnalyticField:
    """Right-hand side as a field on the surface; evaluate only at points of Γ."""
    return AnalyticField(
        lambda q: manufactured_rhs(u, beta, alpha, eps, surface, q, h_fd),
        name=f"L[{u.name}]",
    )


def make_surface(kind: str, center: Sequence[float], radii: Sequence[float] = (),
                 normal: Sequence[float] = (0.0, 0.0, 1.0)) -> ImplicitSurface:
    return ImplicitSurface(kind=kind, center=tuple(center), radii=tuple(radii), normal=tuple(normal))
