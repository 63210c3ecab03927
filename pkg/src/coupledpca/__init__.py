"""Coupled eigenvector/eigenvalue learning rules for PCA.

The package derives simultaneous eigenvector and eigenvalue estimation flows from a
Newton descent on the Lagrangian of the constrained variance-maximization problem,
integrates them as ODE chains for leading eigenpairs, and ships the matching
fixed-point stability toolkit plus a reproducible experiment CLI.
"""

from .estimator import CoupledPCA
from .exceptions import (
    ConfigError,
    ConvergenceError,
    CoupledPcaError,
    DegenerateInputError,
    DimensionError,
    DistinctnessError,
    OrthonormalityError,
    SingularityError,
    SpectrumError,
    SymmetryError,
)
from .linmodel import (
    EigenPair,
    SpectralModel,
    deflate,
    make_loglinear_model,
    model_from_dict,
    model_from_spectrum,
    model_to_dict,
    rayleigh_quotient,
    symmetric_eigen_oracle,
)
from .rules import (
    SINGULARITY_EPS,
    ChainState,
    EigenState,
    inv_hessian_arbitrary,
    inv_hessian_principal,
    lagrange_gradient,
    lagrange_hessian,
    lagrange_value,
    online_rhs,
    rhs_arbitrary,
    rhs_deflated,
    rhs_deflated_matrix,
    rhs_principal,
    stage_rhs,
    sut,
    transformed_hessian,
)
from .dynamics import (
    ChainRunResult,
    IntegratorConfig,
    TrajectoryRecord,
    align_sign,
    euler_run,
    random_unit_vector,
    run_chain,
    run_stage,
)
from .stability import (
    PerturbationReport,
    SpectrumReport,
    arbitrary_spectrum,
    bordered_hessian_matrix,
    bordered_hessian_spectrum,
    classify_eigenvalues,
    cross_jacobian_matrix,
    eigenvalues_general,
    exact_hessian_cross_spectrum,
    match_eigenvalue_sets,
    numeric_jacobian,
    packed_stage_rhs,
    perturbation_probe,
    perturbation_scalar_product,
    principal_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "CoupledPCA",
    "ConfigError",
    "ConvergenceError",
    "CoupledPcaError",
    "DegenerateInputError",
    "DimensionError",
    "DistinctnessError",
    "OrthonormalityError",
    "SingularityError",
    "SpectrumError",
    "SymmetryError",
    "EigenPair",
    "SpectralModel",
    "deflate",
    "make_loglinear_model",
    "model_from_dict",
    "model_from_spectrum",
    "model_to_dict",
    "rayleigh_quotient",
    "symmetric_eigen_oracle",
    "SINGULARITY_EPS",
    "ChainState",
    "EigenState",
    "inv_hessian_arbitrary",
    "inv_hessian_principal",
    "lagrange_gradient",
    "lagrange_hessian",
    "lagrange_value",
    "online_rhs",
    "rhs_arbitrary",
    "rhs_deflated",
    "rhs_deflated_matrix",
    "rhs_principal",
    "stage_rhs",
    "sut",
    "transformed_hessian",
    "ChainRunResult",
    "IntegratorConfig",
    "TrajectoryRecord",
    "align_sign",
    "euler_run",
    "random_unit_vector",
    "run_chain",
    "run_stage",
    "PerturbationReport",
    "SpectrumReport",
    "arbitrary_spectrum",
    "bordered_hessian_matrix",
    "bordered_hessian_spectrum",
    "classify_eigenvalues",
    "cross_jacobian_matrix",
    "eigenvalues_general",
    "exact_hessian_cross_spectrum",
    "match_eigenvalue_sets",
    "numeric_jacobian",
    "packed_stage_rhs",
    "perturbation_probe",
    "perturbation_scalar_product",
    "principal_spectrum",
]
