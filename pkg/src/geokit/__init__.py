"""geokit: discrete geodesic boundary value problems solved as control problems."""

from .core import (
    DiscreteCurve,
    FinslerField,
    MetricField,
    SolverReport,
    SPDMatrix,
    Termination,
    controls_from_curve,
    curve_from_controls,
    discretize_line,
    energy,
    energy_gradient_interior,
    finsler_energy,
    finsler_length,
    length,
    pullback_metric_from_immersion,
    stacked_gradient_norm,
    trapezoid_length,
)
from .errors import (
    DimensionError,
    DivergedError,
    GeoKitError,
    LeftChartError,
    NotConvergedError,
    PropernessError,
    QuadratureError,
    SingularBlockError,
    UnknownFamily,
)
from .georce import (
    SeededPerturbation,
    SolverConfig,
    georce_finsler_solve,
    georce_inner_update,
    finsler_inner_update,
    georce_solve,
    log_map_estimate,
    soft_line_search,
)
from .manifolds import MANIFOLDS, ManifoldSpec, catalog, load, manifold_spec
from .randers import RandersField, generic_force_field, randers_F, randers_coefficients, randers_fundamental_tensor
from .baselines import (
    BlockTridiagonal,
    FirstOrderConfig,
    adam_solve,
    block_tridiag_solve,
    gd_solve,
    hessian_blocks,
    sparse_newton_solve,
)

__version__ = "0.1.0"
