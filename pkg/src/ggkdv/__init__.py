"""Boundary control toolkit for a dispersively coupled pair of KdV equations.

Subpackages: model (parameters, grids, states), evolution (forward,
nonlinear and adjoint steppers), timefrac (fractional time operators),
hum (control synthesis and Gramian inversion), critical (critical-length
analysis), cli (the ggctl scenario runner).
"""

from .model import (
    CoefficientViolation,
    DEFAULT_PARAMS,
    DegenerateDiagonalization,
    ShapeMismatch,
    SpaceTimeGrid,
    StatePair,
    SystemParams,
    Trajectory,
    ValidatedParams,
    diagonalize,
    l2_inner,
    l2_norm,
    validate_params,
    x_inner,
    x_norm,
)
from .evolution import (
    AdjointTraces,
    BoundaryData,
    ControlConfig,
    DiscreteControlMap,
    PicardDivergence,
    SingularSystem,
    SourcePair,
    build_discrete_adjoint,
    hidden_regularity_estimate,
    solve_adjoint_backward,
    solve_linear_forward,
    solve_nonlinear_forward,
)
from .timefrac import TimeSeries, frac_neg_laplacian, sobolev_norm
from .critical import (
    CriticalLength,
    CriticalSet,
    Family,
    GeneratorTuple,
    RootConditioning,
    alpha_quadratic,
    enumerate_critical_lengths,
    is_critical,
    ode_kernel_scan,
    root_sharing_oracle,
    verify_tuple,
)
from .hum import (
    CgStagnation,
    ControlProblem,
    HumSolution,
    OneControlCert,
    OuterDivergence,
    PreconditionFailure,
    duality_gap,
    gramian_apply,
    gramian_min_eig,
    hum_solve,
    nonlinear_control,
    observability_ratio,
    one_control_certificate,
    synthesize_controls,
)

__version__ = "0.1.0"
