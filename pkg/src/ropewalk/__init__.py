"""Thickness, ropelength and self-contact sets of polygonal knots and links."""

from .links import (
    ArclengthIndex,
    Component,
    GeometryError,
    PolyLink,
    VertexGeometry,
    arclength_coordinates,
    minrad,
    minrads,
    total_length,
    turning_angle,
    vertex_geometry,
)
from .contacts import (
    Strut,
    ThicknessReport,
    enumerate_dcsd,
    enumerate_dcsd_bruteforce,
    min_strut_distance,
    segment_min_distance,
    strut_set,
    thickness,
)
from .gradients import (
    InactiveConstraintError,
    length_gradient,
    minrad_gradient,
    strut_gradient,
)
from .tighten import (
    ActiveSet,
    FeasibilityError,
    SolverError,
    StepReport,
    TightenConfig,
    collect_active,
    equilateralize,
    restore_feasibility,
    solve_multipliers,
    step,
    tighten,
)
from .rounding import (
    RefinementError,
    RoundedCurve,
    round_corners,
    smooth_length,
    smooth_ropelength_bound,
    smooth_thickness,
)
from .contactplot import ContactPlot, PlotStyle, build_contact_plot, emit_svg
from .fileio import ParseError, read_link, read_vect, seed, write_link

__version__ = "0.1.0"
