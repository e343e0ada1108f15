"""Flutter analysis of a follower-loaded planar Cosserat rod.

Modules:
    model    -- parameters, spectral grid, configurations, constitutive law
    spectrum -- linearized operator, eigenvalue thresholds, critical/adjoint modes
    landau   -- weakly nonlinear (Landau) amplitude expansion at the Hopf point
    sim      -- full nonlinear time integration and limit-cycle extraction
    cli      -- command-line bench driver
"""

from .model import (
    Configuration,
    GammaWeights,
    Grid,
    RodParams,
    ValidationError,
    base_state,
    constitutive,
    make_grid,
    make_params,
)
from .spectrum import (
    BracketError,
    DiscretizationError,
    EigenPair,
    EigenSolverError,
    HopfPoint,
    LinearOperator,
    StaleThresholdError,
    adjoint_mode,
    assemble_adjoint_operator,
    assemble_operator,
    critical_mode,
    eigen_residual,
    find_flutter_onset,
    find_hopf_threshold,
    gamma_inner,
    leading_spectrum,
)
from .landau import (
    ConsistencyError,
    DegenerateNormalizationError,
    ForcingAssembly,
    LandauModel,
    NotApplicableError,
    QuadraticCorrections,
    assemble_forcing,
    landau_coefficients,
    predict_tip,
    quadratic_corrections,
    solvability_residual,
)
from .sim import (
    InsufficientDataError,
    SimConfig,
    SimRecord,
    StiffnessError,
    extract_cycle,
    rhs,
    run,
    step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
