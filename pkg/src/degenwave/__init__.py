"""degenwave: numerical laboratory for blow-up in radial wave equations with
degenerate variable coefficients.

The solver works in the stretched coordinate X = phi(x) where the principal
part is the radial wave operator in an effective integer dimension; analysis
modules build similarity frames, weighted energies and Lyapunov checks,
soliton profile fits, blow-up-curve regularity diagnostics, multi-soliton
center dynamics, and radial loc-unif norm comparisons.
"""

from .coefficients import (
    CoefficientModel,
    PowerLawCoefficient,
    check_admissibility,
    constant_model,
    effective_dimension,
    phi,
    phi_inverse,
    power_law_model,
    tabulated_model,
)
from .solver import (
    BlowupCurve,
    FieldState,
    SolverParams,
    Trace,
    blowup_curve,
    classify_point,
    detect_blowup_time,
    kappa0,
    simulate,
    step,
)
from .similarity import SimilarityFrame, frame_equation_residual, frame_ladder, to_similarity
from .energy import (
    E0_functional,
    EnergyReport,
    dissipation_identity_check,
    full_energy,
    origin_energy,
    quadrature_rule,
    weighted_norm,
)
from .profiles import (
    ProfileFit,
    characteristic_expansion_fit,
    fit_profile,
    kappa,
    stationary_residual,
    u_profile_prediction,
)
from .soliton_dynamics import SolitonState, d_hat_trajectory, explicit_ansatz, integrate, ode_rhs
from .normspaces import RadialFunction, equivalence_check, norm_A, norm_B

__version__ = "0.1.0"
