"""Problem definitions and the built-in named experiments."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .geometry import AnalyticField, ImplicitSurface, make_surface, manufactured_field

UNIT_BOX = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@dataclass(frozen=True)
class Problem:
    """Stationary ``beta . grad_G u + alpha u - eps lap_G u = f`` on ``surface``.

    ``f=None`` manufactures the right-hand side from ``u_exact``.
    ``value_range`` is the reference range used for overshoot reporting.
    ``defaults`` holds the method dials the named experiment prescribes.
    """

    name: str
    surface: ImplicitSurface
    alpha: AnalyticField
    beta: AnalyticField
    eps: float
    u_exact: AnalyticField | None = None
    f: AnalyticField | None = None
    box: tuple = UNIT_BOX
    value_range: tuple | None = None
    defaults: dict = field(default_factory=dict)

    def rhs_field(self) -> AnalyticField:
        if self.f is not None:
            return self.f
        if self.u_exact is None:
            raise ConfigError("problem", f"{self.name}: need either f or an exact solution u")
        return manufactured_field(self.u_exact, self.beta, self.alpha, self.eps, self.surface)

    def with_eps(self, eps: float) -> "Problem":
        return replace(self, eps=float(eps))

    def shifted(self, offset) -> "Problem":
        """Rigidly translate the surface and every field by ``offset``."""
        off = np.asarray(offset, dtype=float)
        surf = replace(self.surface, center=tuple(np.asarray(self.surface.center) + off))
        move = lambda fld: None if fld is None else _translate(fld, off)
        return replace(self, surface=surf, alpha=move(self.alpha), beta=move(self.beta),
                       u_exact=move(self.u_exact), f=move(self.f))


def _translate(fld: AnalyticField, off) -> AnalyticField:
    return AnalyticField(lambda p: fld(np.atleast_2d(p) - off), vector=fld.vector,
                         tangential=fld.tangential, name=fld.name)


def padded_box(box, n: int, cells: int = 1):
    """Grow ``box`` by ``cells`` layers of cells, keeping the spacing of an ``n`` mesh."""
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    step = (hi - lo) / n
    return (tuple(lo - cells * step), tuple(hi + cells * step)), n + 2 * cells


def _rotation(omega, cx=0.5, cy=0.5):
    """Rigid rotation about the vertical axis through ``(cx, cy)``."""
    return AnalyticField(
        lambda p: omega * np.column_stack([cy - p[:, 1], p[:, 0] - cx, np.zeros(len(p))]),
        vector=True, tangential=True, name=f"{omega}*(1/2-y, x-1/2, 0)",
    )


def _saddle(p):
    return 100.0 * (p[:, 0] - 0.5) * (p[:, 1] - 0.5) * (p[:, 2] - 0.5)


SADDLE = AnalyticField(_saddle, name="100(x-1/2)(y-1/2)(z-1/2)")


def spheroid_smooth() -> Problem:
    """Smooth manufactured solution on the flat spheroid, convection dominated."""
    return Problem(
        name="spheroid-smooth",
        surface=make_surface("spheroid", (0.5, 0.5, 0.5), (0.5, 0.25)),
        alpha=AnalyticField.constant(0.0),
        beta=_rotation(1.0),
        eps=1e-3,
        u_exact=SADDLE,
        defaults={"c_tau": 0.5, "gamma": 0.0, "tau2": "inv-tau1"},
    )


def spheroid_condition() -> Problem:
    """Same geometry and flow with ``alpha = 1``: nonsingular without constraint."""
    return Problem(
        name="spheroid-condition",
        surface=make_surface("spheroid", (0.5, 0.5, 0.5), (0.5, 0.25)),
        alpha=AnalyticField.constant(1.0),
        beta=_rotation(1.0),
        eps=1e-3,
        u_exact=SADDLE,
        defaults={"c_tau": 0.5, "gamma": 1.0, "tau2": "inv-tau1"},
    )


def _layer_source(p):
    return (p[:, 2] > 0.55).astype(float)


def spheroid_layer() -> Problem:
    """Discontinuous source at ``z = 0.55``; the exact solution equals the source."""
    return Problem(
        name="spheroid-layer",
        surface=make_surface("spheroid", (0.5, 0.5, 0.5), (0.5, 0.45)),
        alpha=AnalyticField.constant(1.0),
        beta=_rotation(10.0),
        eps=0.0,
        f=AnalyticField(_layer_source, name="1{z > 0.55}"),
        value_range=(0.0, 1.0),
        defaults={"c_tau": 0.5, "gamma": 0.0, "tau2": "inv-tau1"},
    )


def plane_patch() -> Problem:
    """Oblique plane with a linear solution; reproduced exactly by the method."""
    normal = np.array([1.0, 2.0, 3.0]) / np.sqrt(14.0)
    surface = make_surface("plane", (0.5, 0.5, 0.5), (), normal)
    # constant tangential flow and a linear solution
    b = np.array([2.0, -1.0, 0.0])
    b = b - (b @ normal) * normal
    return Problem(
        name="plane-patch",
        surface=surface,
        alpha=AnalyticField.constant(1.0),
        beta=AnalyticField.constant(b, name="const"),
        eps=0.0,
        u_exact=AnalyticField(lambda p: 1.0 + 2.0 * p[:, 0] - p[:, 1] + 0.5 * p[:, 2],
                              name="1+2x-y+z/2"),
        defaults={"c_tau": 0.5, "gamma": 1.0, "tau2": "inv-tau1"},
    )


def sphere_smooth() -> Problem:
    """Diffusion-dominated test on a sphere (used for diagnostics)."""
    return Problem(
        name="sphere-smooth",
        surface=make_surface("sphere", (0.5, 0.5, 0.5), (0.35,)),
        alpha=AnalyticField.constant(1.0),
        beta=_rotation(1.0),
        eps=1.0,
        u_exact=SADDLE,
        defaults={"c_tau": 0.5, "gamma": 1.0, "tau2": "inv-tau1"},
    )


BUILTIN = {
    "spheroid-smooth": spheroid_smooth,
    "spheroid-condition": spheroid_condition,
    "spheroid-layer": spheroid_layer,
    "plane-patch": plane_patch,
    "sphere-smooth": sphere_smooth,
}


def builtin(name: str) -> Problem:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ConfigError("problem.name", f"unknown built-in problem {name!r}; "
                          f"choose from {sorted(BUILTIN)}") from None
