"""Column-observation flux estimation toolkit.

Forward transport of a tracer in a vertical column, the adjoint
eigensystem of its observation dynamics, Bayesian/variational surface-flux
estimation from weighted column averages, and the information-geometry
diagnostics (gain directions, monotonicity, blind directions) that say
what such observations can and cannot see.
"""

from .assimilate import (
    AssimilationProblem,
    PriorSpec,
    cost,
    gradient,
    hessian_form,
    map_estimate,
    oracle_bayes,
    prior_apply_inverse,
    prior_quadratic_form,
    representer_rows,
)
from .errors import (
    AssumptionError,
    CapacityError,
    ColfluxError,
    ConditioningError,
    ConfigError,
    DegenerateSeedError,
    DiagnosticError,
    DomainError,
    NormalizationError,
    NumericalError,
    SingularSystemError,
    StabilityError,
)
from .model import CoefficientProfile, mu_weight, validate_profile
from .numerics import (
    ColumnGrid,
    TimeGrid,
    exp_inner,
    exp_inner_coefficients,
    solve_tridiagonal,
    trapezoid,
)
from .observe import (
    ObservationSet,
    Weight,
    adjoint_observation,
    apply_observation,
    canonical_weights,
    observations_to_csv,
    observations_to_json,
    synthesize_data,
)
from .posterior import (
    GainAnalysis,
    GainDirection,
    PosteriorModel,
    analyze_gain,
    blind_direction,
    gain_direction,
    gain_inner,
    ic_gain_direction,
    monotone_weight_check,
    precision_apply,
    quadratic_form,
)
from .spectral import (
    EigenSystem,
    MuntzSums,
    SynthesizedWeight,
    eigensystem,
    expand_weight,
    expansion_residual,
    muntz_partial_sums,
    synthesize_weight,
)
from .transport import (
    FluxSignal,
    MixingRatioField,
    energy_fit,
    mass_balance_residual,
    solve_forward,
    write_field_csv,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AssimilationProblem",
    "AssumptionError",
    "CapacityError",
    "ColfluxError",
    "ColumnGrid",
    "CoefficientProfile",
    "ConditioningError",
    "ConfigError",
    "DegenerateSeedError",
    "DiagnosticError",
    "DomainError",
    "EigenSystem",
    "FluxSignal",
    "GainAnalysis",
    "GainDirection",
    "MixingRatioField",
    "MuntzSums",
    "NormalizationError",
    "NumericalError",
    "ObservationSet",
    "PosteriorModel",
    "PriorSpec",
    "SingularSystemError",
    "StabilityError",
    "SynthesizedWeight",
    "TimeGrid",
    "Weight",
    "adjoint_observation",
    "analyze_gain",
    "apply_observation",
    "blind_direction",
    "canonical_weights",
    "cost",
    "eigensystem",
    "energy_fit",
    "exp_inner",
    "exp_inner_coefficients",
    "expand_weight",
    "expansion_residual",
    "gain_direction",
    "gain_inner",
    "gradient",
    "hessian_form",
    "ic_gain_direction",
    "map_estimate",
    "mass_balance_residual",
    "monotone_weight_check",
    "mu_weight",
    "muntz_partial_sums",
    "observations_to_csv",
    "observations_to_json",
    "oracle_bayes",
    "precision_apply",
    "prior_apply_inverse",
    "prior_quadratic_form",
    "quadratic_form",
    "representer_rows",
    "solve_forward",
    "solve_tridiagonal",
    "synthesize_data",
    "synthesize_weight",
    "trapezoid",
    "validate_profile",
    "write_field_csv",
]
