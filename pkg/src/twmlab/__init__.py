"""twmlab: a numerical laboratory for translation-reduced wave maps with
torsion on Lie group targets -- Lie-algebraic target construction, frame-field
and direct chart-based evolution, conservation diagnostics, and flat-connection
reconstruction of the group-valued map."""

__version__ = "0.1.0"

from .algebra import (LieAlgebraSpec, TargetGeometry, builtin_algebra,
                      build_geometry, cartan_killing, commuting_pair_p,
                      natural_p, torsion_tensor)
from .frame import Coupling, FrameState, evolve, make_coupling, make_initial_data
from .grid import Grid
from .wavemap import TargetChart, WaveMapState, builtin_chart, evolve_wavemap

__all__ = [
    "LieAlgebraSpec", "TargetGeometry", "builtin_algebra", "build_geometry",
    "cartan_killing", "commuting_pair_p", "natural_p", "torsion_tensor",
    "Coupling", "FrameState", "evolve", "make_coupling", "make_initial_data",
    "Grid", "TargetChart", "WaveMapState", "builtin_chart", "evolve_wavemap",
    "__version__",
]
