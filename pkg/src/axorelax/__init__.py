"""Relaxation-structure certificates and boundary-layer diagnostics.

Tools for linear reaction-hyperbolic systems on the half line,

    u_t + Lambda u_x = (1/epsilon) K u,      x >= 0, t >= 0,

covering structural validation of the velocity/rate pair, construction
of the symmetrizer, spectral split and compensating matrix behind the
relaxation stability theory, exact steady boundary layers, and an
upwind/IMEX inflow solver with decay diagnostics.
"""

from .errors import (
    AssumptionError,
    AxorelaxError,
    CompatibilityError,
    ConfigError,
    NumericalError,
)
from .ibvp_solver import (
    DiagnosticsSample,
    DiagnosticsSeries,
    Grid,
    GridState,
    SchemeConfig,
    compute_dt,
    decay_time,
    diagnostics,
    discrete_steady_state,
    initialize,
    make_grid,
    run,
    step,
)
from .relaxation_analysis import (
    CompensatingPair,
    DetailedBalance,
    KernelVector,
    SchurReduction,
    SpectralSplit,
    SpectrumReport,
    StabilityCertificate,
    Symmetrizer,
    build_symmetrizer,
    certify,
    compensating_matrix,
    detailed_balance_check,
    kernel_vector,
    schur_reduction,
    spectral_split,
    spectrum_report,
    verify_certificate,
)
from .steady_state import (
    GeneratorSpectrum,
    SteadyProfile,
    far_field,
    generator,
    layer_width,
    steady_profile,
    steady_residual,
)
from .system_model import (
    AssumptionReport,
    CompatibilityReport,
    InitialData,
    RateMatrix,
    SystemSpec,
    VelocityMatrix,
    catalog,
    check_initial_compatibility,
    scaled_rates,
    validate_assumptions,
)

__version__ = "0.1.0"
