"""Stabilized trace finite elements for convection-diffusion on closed surfaces.

Pipeline: ``geometry`` (implicit surface, closest point) -> ``mesh``
(structured tetrahedral background mesh) -> ``cut`` (discrete surface and
quadrature) -> ``fem`` (trace space, forms, assembly) -> ``solve`` (linear
solvers, condition numbers) -> ``analysis`` (error norms, diagnostics).
``cli`` drives the experiments.
"""

__version__ = "0.1.0"

from .errors import (BoxTooSmall, ConfigError, DegenerateInput, DegenerateLevels, EmptySurface,
                     InvalidLevels, NoConvergence, NotTangential, NotWatertight, OutsideBand,
                     SingularSystem, SurfsdError)
from .geometry import AnalyticField, ImplicitSurface, closest_point, make_surface

__all__ = [
    "AnalyticField", "ImplicitSurface", "closest_point", "make_surface",
    "SurfsdError", "ConfigError", "InvalidLevels", "NoConvergence", "OutsideBand", "BoxTooSmall",
    "EmptySurface", "DegenerateInput", "NotWatertight", "NotTangential", "SingularSystem",
    "DegenerateLevels",
]
