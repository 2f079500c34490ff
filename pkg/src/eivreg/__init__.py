"""Errors-in-variables regression with intrinsic scatter.

Fits ``y = f(x) + scatter`` when both coordinates carry measurement errors,
treating the latent true abscissae by uniform, profile, single-Gaussian or
Gaussian-mixture priors.
"""

__version__ = "0.1.0"

from .core import (Dataset, LikelihoodSpec, ParamVector, ValidationError, assemble_covariance,
                   validate_dataset)
from .cubic import real_roots
from .models import ModelFunction, expression_model, linear, power_law_log
from .likelihood import (LikelihoodDomainError, SingularCovarianceError, loglike, loglike_general,
                         loglike_gmm_diag, loglike_mnr_diag, loglike_prof_diag, loglike_unif_diag)
from .inference import (MLEResult, PosteriorResult, SamplerConfig, bic, fit_mle, sample_posterior,
                        select_ngauss, sigma_int_summary)
from .mock import FIDUCIAL, MockConfig, gen_mock
from .causality import CausalityReport, assess_causality

__all__ = [
    "Dataset", "LikelihoodSpec", "ParamVector", "ValidationError", "assemble_covariance",
    "validate_dataset", "real_roots", "ModelFunction", "expression_model", "linear", "power_law_log",
    "LikelihoodDomainError", "SingularCovarianceError", "loglike", "loglike_general",
    "loglike_gmm_diag", "loglike_mnr_diag", "loglike_prof_diag", "loglike_unif_diag", "MLEResult",
    "PosteriorResult", "SamplerConfig", "bic", "fit_mle", "sample_posterior", "select_ngauss",
    "sigma_int_summary", "FIDUCIAL", "MockConfig", "gen_mock", "CausalityReport", "assess_causality",
]
