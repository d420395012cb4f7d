"""Bayesian GLM regression via random-walk Metropolis.

The chain itself runs in the kernel backend (compiled if built, numpy
otherwise); this module owns randomness generation, burn-in handling and
posterior summaries. Chains are exactly reproducible given a seed because
every random number is pre-generated from PCG64 before the kernel runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataDomainError, MixingError
from . import kernels
from .diagnostics import geweke_pvalue
from .glm import Dataset, GlmSpec, _check_counts

# Consecutive-rejection window after which a chain is declared stuck.
STUCK_WINDOW = 1000

_FAMILY_CODES = {
    "gaussian": kernels.FAMILY_GAUSSIAN,
    "poisson": kernels.FAMILY_POISSON,
    "negative_binomial": kernels.FAMILY_NEGBIN,
}


@dataclass(frozen=True)
class PriorSpec:
    """Independent normal priors, one (mean, sd) per coefficient.

    Scalars broadcast over all coefficients.
    """

    mean: float | np.ndarray = 0.0
    sd: float | np.ndarray = 1.0

    def arrays(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        mean = np.broadcast_to(np.asarray(self.mean, dtype=np.float64), (p,)).copy()
        sd = np.broadcast_to(np.asarray(self.sd, dtype=np.float64), (p,)).copy()
        if np.any(sd <= 0):
            raise DataDomainError("prior sd must be positive")
        return mean, sd


@dataclass(frozen=True)
class PosteriorSummary:
    names: tuple[str, ...]
    samples: np.ndarray  # (kept draws, coefficients)
    median: np.ndarray
    cri_lower: np.ndarray
    cri_upper: np.ndarray
    cri_level: float
    geweke_p: float
    acceptance_rate: float

    def coefficient(self, name: str) -> tuple[float, float, float]:
        i = self.names.index(name)
        return float(self.median[i]), float(self.cri_lower[i]), float(self.cri_upper[i])


def equal_tailed_interval(samples: np.ndarray, level: float) -> tuple[np.ndarray, np.ndarray]:
    """Empirical quantiles at (1-level)/2 and 1-(1-level)/2 along axis 0.

    Uses the averaged-inverted-CDF estimator (classical "type 2"): a pure
    function of the empirical distribution, so duplicating a sample vector
    never moves the interval. The median is its q=0.5 special case.
    """
    alpha = (1.0 - level) / 2.0
    lower = np.quantile(samples, alpha, axis=0, method="averaged_inverted_cdf")
    upper = np.quantile(samples, 1.0 - alpha, axis=0, method="averaged_inverted_cdf")
    return lower, upper


def fit_bayes_mh(
    data: Dataset,
    spec: GlmSpec,
    prior: PriorSpec,
    draws: int = 12000,
    burnin: int = 2000,
    proposal_sd: float | np.ndarray = 0.1,
    seed: int = 0,
    cri_level: float = 0.95,
) -> PosteriorSummary:
    """Random-walk Metropolis over the GLM log-posterior.

    ``draws`` counts all iterations; the first ``burnin`` are discarded.
    The gaussian family treats the observation variance as known
    (spec.dispersion, defaulting to 1.0). Raises MixingError when the chain
    rejects STUCK_WINDOW consecutive proposals.
    """
    if not draws > burnin >= 0:
        raise DataDomainError(f"need draws > burnin >= 0, got draws={draws} burnin={burnin}")
    y = data.outcome
    x, names = data.design_matrix()
    n, p = x.shape
    _check_counts(y, spec.family)

    family = _FAMILY_CODES[spec.family]
    if spec.family == "gaussian":
        dispersion = spec.dispersion if spec.dispersion is not None else 1.0
    elif spec.family == "negative_binomial":
        if spec.dispersion is None:
            raise DataDomainError("negative_binomial MH requires a fixed dispersion")
        dispersion = spec.dispersion
    else:
        dispersion = 0.0

    prior_mean, prior_sd = prior.arrays(p)
    step = np.broadcast_to(np.asarray(proposal_sd, dtype=np.float64), (p,)).copy()
    if np.any(step <= 0):
        raise DataDomainError("proposal sd must be positive")

    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal((draws, p))
    logu = np.log(rng.random(draws))

    states, n_accept, stuck_at = kernels.mh_chain(
        np.ascontiguousarray(x),
        np.ascontiguousarray(y),
        family,
        float(dispersion),
        prior_mean,
        prior_sd,
        step,
        prior_mean.copy(),
        z,
        logu,
        STUCK_WINDOW,
    )
    if stuck_at >= 0:
        raise MixingError(
            f"no proposal accepted for {STUCK_WINDOW} consecutive iterations "
            f"(stuck at iteration {stuck_at})"
        )

    kept = np.asarray(states)[burnin:]
    median = np.median(kept, axis=0)
    lower, upper = equal_tailed_interval(kept, cri_level)
    return PosteriorSummary(
        names=tuple(names),
        samples=kept,
        median=median,
        cri_lower=lower,
        cri_upper=upper,
        cri_level=cri_level,
        geweke_p=geweke_pvalue(kept[:, 0]),
        acceptance_rate=n_accept / draws,
    )
