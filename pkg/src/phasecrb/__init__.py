"""Quantum Cramer-Rao bounds and optimal mode measurements for shaped phase objects."""

from . import errors
from .errors import *  # noqa: F401,F403
from .estimation import CountRecord, SimulationReport, mle_fit, monte_carlo, sample_counts
from .fisher import (ALPHA_COEFFICIENT, CliffIntegrals, FisherResult, PrecisionBounds,
                     alpha_coefficient, cliff_integrals, inner_products,
                     mode_expansion_optimality, precision_bounds_cliff, qfim,
                     qfim_coherent, qfim_single_photon, symmetry_integrals)
from .models import (CliffParameters, IlluminationProfile, PhaseModel, cliff_model,
                     gaussian_profile, load_tabulated_csv, slope_height, tabulated_model,
                     tabulated_profile, validate_partials)
from .modes import (GridSpec, ModeBasis, ProbabilityVector, analytic_probabilities_cliff,
                    build_basis, classical_fim, nonorthogonal_condition_check,
                    probabilities_numeric, project, saturation_report)
from .numerics import QuadratureSpec, integrate, invert, is_positive_semidefinite

__version__ = "0.1.0"

__all__ = [name for name in dir(errors) if name[0].isupper() and not name.startswith("_")
           and isinstance(getattr(errors, name), type)] + [
    "CountRecord", "SimulationReport", "mle_fit", "monte_carlo", "sample_counts",
    "ALPHA_COEFFICIENT", "CliffIntegrals", "FisherResult", "PrecisionBounds",
    "alpha_coefficient", "cliff_integrals", "inner_products", "mode_expansion_optimality",
    "precision_bounds_cliff", "qfim", "qfim_coherent", "qfim_single_photon",
    "symmetry_integrals", "CliffParameters", "IlluminationProfile", "PhaseModel",
    "cliff_model", "gaussian_profile", "load_tabulated_csv", "slope_height",
    "tabulated_model", "tabulated_profile", "validate_partials", "GridSpec", "ModeBasis",
    "ProbabilityVector", "analytic_probabilities_cliff", "build_basis", "classical_fim",
    "nonorthogonal_condition_check", "probabilities_numeric", "project",
    "saturation_report", "QuadratureSpec", "integrate", "invert",
    "is_positive_semidefinite",
]
