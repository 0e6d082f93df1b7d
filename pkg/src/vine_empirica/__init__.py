"""Empirical pair-copula estimation, structure selection and inference for regular vines."""

__version__ = "0.1.0"

from .estimator import EdgeEstimate, FittedEmpiricalVine, conditional_pseudo_obs, edge_copula, fit
from .exceptions import (ConvergenceError, EstimationError, InvalidInputError,
                         VineEmpiricaError, VineParseError, VineStructureError)
from .families import (GaussianCopula, GumbelCopula, IndependenceCopula, PairCopula,
                       StudentTCopula, make_copula)
from .inference import (BootstrapEnsemble, ConfidenceInterval, TestResult,
                        asymptotic_variance, confidence_interval, expansion_residual,
                        gof_test, independence_test, multiplier_resample, plugin_variance,
                        spearman_ci, spearman_resample, spearman_rho)
from .models import ParametricVineModel, sample_vine, schedule_models
from .ranks import (Bandwidth, PairSample, conditional_cdf_estimate, empirical_copula,
                    normalized_ranks, partial_derivative_estimate)
from .selection import SelectionTrace, max_spanning_tree, possible_pairs, select_structure
from .vine import (RegularVine, VineEdge, cvine, derive_labels, deserialize, dvine,
                   serialize, validate)

__all__ = [
    "Bandwidth", "BootstrapEnsemble", "ConfidenceInterval", "ConvergenceError",
    "EdgeEstimate", "EstimationError", "FittedEmpiricalVine", "GaussianCopula",
    "GumbelCopula", "IndependenceCopula", "InvalidInputError", "PairCopula", "PairSample",
    "ParametricVineModel", "RegularVine", "SelectionTrace", "StudentTCopula", "TestResult",
    "VineEdge", "VineEmpiricaError", "VineParseError", "VineStructureError",
    "asymptotic_variance", "conditional_cdf_estimate", "conditional_pseudo_obs",
    "confidence_interval", "cvine", "derive_labels", "deserialize", "dvine", "edge_copula",
    "empirical_copula", "expansion_residual", "fit", "gof_test", "independence_test",
    "make_copula", "max_spanning_tree", "multiplier_resample", "normalized_ranks",
    "partial_derivative_estimate", "plugin_variance", "possible_pairs", "sample_vine",
    "schedule_models", "select_structure", "serialize", "spearman_ci", "spearman_resample",
    "spearman_rho", "validate",
]
