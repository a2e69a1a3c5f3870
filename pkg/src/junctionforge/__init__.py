"""junctionforge: surface-electrode ion-trap X-junction design toolkit.

Models trapping pseudo-potentials of segmented RF electrode layouts with
closed-form gapless-plane electrostatics, traces the RF-null tube through the
junction, and minimises the junction barrier by multi-RF amplitude search
and finger/wedge geometry search.
"""

__version__ = "0.1.0"

from .field import (
    BasisEvaluator,
    DriveConfig,
    FieldSample,
    VoltageAssignment,
    build_basis,
    superpose,
)
from .layout import (
    Electrode,
    FingerParams,
    Layout,
    LayoutDims,
    TieMap,
    WedgeParams,
    add_finger,
    add_wedges,
    build_x_junction,
    refine_segmentation,
    symmetry_ties,
    validate,
)
from .optimize import (
    GeometrySpec,
    OptimizationResult,
    OptimizationSpec,
    hybrid_optimize,
    objective,
    optimize_geometry,
    optimize_voltages,
)
from .protocol import ChannelMap, SwitchPlan, channel_assignment, switch_schedule
from .pseudo import (
    IonSpecies,
    PotentialMap,
    SaddleTrace,
    TraceMetrics,
    TracingError,
    find_null_in_section,
    isosurface,
    metrics,
    pseudopotential_at,
    sample_map,
    trace_saddle_path,
)

__all__ = [
    "BasisEvaluator",
    "ChannelMap",
    "DriveConfig",
    "Electrode",
    "FieldSample",
    "FingerParams",
    "GeometrySpec",
    "IonSpecies",
    "Layout",
    "LayoutDims",
    "OptimizationResult",
    "OptimizationSpec",
    "PotentialMap",
    "SaddleTrace",
    "SwitchPlan",
    "TieMap",
    "TraceMetrics",
    "TracingError",
    "VoltageAssignment",
    "WedgeParams",
    "add_finger",
    "add_wedges",
    "build_basis",
    "build_x_junction",
    "channel_assignment",
    "find_null_in_section",
    "hybrid_optimize",
    "isosurface",
    "metrics",
    "objective",
    "optimize_geometry",
    "optimize_voltages",
    "pseudopotential_at",
    "refine_segmentation",
    "sample_map",
    "superpose",
    "switch_schedule",
    "symmetry_ties",
    "trace_saddle_path",
    "validate",
]
