"""Built-in desk-scale statistical backends.

GLM fitting by IRLS, Bayesian regression by random-walk Metropolis, the
Geweke convergence diagnostic, Wald intervals, information criteria, and
DerSimonian-Laird random-effects pooling.
"""

from .bayes import PosteriorSummary, PriorSpec, fit_bayes_mh
from .diagnostics import geweke_pvalue
from .glm import (
    Dataset,
    FitResult,
    GlmSpec,
    fit_glm_irls,
    information_criteria,
    wald_ci,
)
from .meta import MetaResult, meta_analysis_dl

__all__ = [
    "Dataset",
    "FitResult",
    "GlmSpec",
    "MetaResult",
    "PosteriorSummary",
    "PriorSpec",
    "fit_bayes_mh",
    "fit_glm_irls",
    "geweke_pvalue",
    "information_criteria",
    "meta_analysis_dl",
    "wald_ci",
]
