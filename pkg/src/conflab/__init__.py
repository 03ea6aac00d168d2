"""Numerical laboratory for conformal metrics on the 2-sphere."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .errors import (
    ConflabError,
    DegenerateSource,
    EmptyFamily,
    HypothesisViolated,
    InconsistentAtlas,
    InvalidExponent,
    MassDeficient,
    NoConvergence,
    NonPositiveScale,
    PoleSingularity,
    ResolutionTooCoarse,
    SolverDivergence,
)
from .sphere import (
    NORTH_POLE,
    SOUTH_POLE,
    Atlas,
    ChartId,
    SphereField,
    SpherePoint,
    integrate_sphere,
    laplacian_flat,
    neck_atlas,
    standard_atlas,
    stereo_lift,
    stereo_project,
)
from .mobius import MobiusTransform, dilation, dilation_at, pullback, random_mobius, rotation
from .metrics import (
    ConformalMetric,
    FunctionalReport,
    make_cylinder_sphere,
    make_dilated_round,
    make_flat_neck_sphere,
    make_perturbed_round,
    make_round,
)
from .disk import (
    DiskField,
    EstimateReport,
    brezis_merle_check,
    dirichlet_solve,
    epsilon_regularity_experiment,
    l1logl1_norm,
    lp_regularity_experiment,
    lq_gradient_check,
    newtonian_potential,
    osc_bound_check,
)
from .concentration import (
    BubbleReport,
    ConcentrationProfile,
    NormalizationResult,
    blow_up,
    bubble_extract,
    normalize,
    rho_at,
    rho_global,
    sequence_diagnostics,
    standard_bubble,
)
