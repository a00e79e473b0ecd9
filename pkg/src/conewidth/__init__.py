"""conewidth: directional cone widths of grid sets, roughing perturbations
of smooth maps, and piecewise congruent mapping diagnostics."""

__version__ = "0.1.0"

from .errors import (
    ArgumentError,
    CalibrationError,
    ConewidthError,
    DomainError,
    ParameterError,
    ResolutionError,
    ResourceError,
    ValidationError,
)
from .geometry import (
    CanonicalCurve,
    Cone,
    ConeCurve,
    Direction,
    beta,
    canonicalize,
    cone_contains,
    curve_arc_length,
)
from .gridset import (
    CutoffFunction,
    GridSet,
    IfsSpec,
    build_cutoff,
    curve_set_intersection_length,
    dilate,
    four_corner_cantor,
    unit_ball_volume,
)
from .width import (
    ConeGraph,
    WidthFunctionField,
    WidthReport,
    build_cone_graph,
    geometric_schedule,
    subcone_search,
    uniform_unrectifiability_sweep,
    width,
    width_difference_positive,
    width_function,
)
