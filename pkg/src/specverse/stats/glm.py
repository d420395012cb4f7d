"""Generalized linear models via iteratively reweighted least squares.

Desk-scale fitters covering the families a decision-space document can ask
for: gaussian (identity link), poisson and negative binomial (log link).
The negative-binomial dispersion is estimated once by method of moments from
a poisson pre-fit and held fixed during IRLS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm

from ..errors import DataDomainError, SingularDesignError

FAMILIES = ("gaussian", "poisson", "negative_binomial")
LINKS = ("identity", "log")

# Dispersion cap: a method-of-moments estimate at or below zero means no
# overdispersion is detectable, so the fit degenerates to near-poisson.
MAX_THETA = 1e8


@dataclass
class Dataset:
    """Outcome vector plus column-named covariates (intercept is implicit)."""

    outcome: np.ndarray
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    group: np.ndarray | None = None

    def __post_init__(self):
        self.outcome = np.asarray(self.outcome, dtype=np.float64)
        self.covariates = {k: np.asarray(v, dtype=np.float64) for k, v in self.covariates.items()}
        n = self.outcome.shape[0]
        for name, col in self.covariates.items():
            if col.shape != (n,):
                raise DataDomainError(f"covariate {name!r} has length {col.shape}, expected {n}")

    def design_matrix(self) -> tuple[np.ndarray, list[str]]:
        cols = [np.ones(self.outcome.shape[0])] + list(self.covariates.values())
        names = ["intercept"] + list(self.covariates.keys())
        return np.column_stack(cols), names


@dataclass(frozen=True)
class GlmSpec:
    family: str = "gaussian"
    link: str | None = None
    dispersion: float | None = None
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataDomainError(f"unknown family {self.family!r}")
        default_link = "identity" if self.family == "gaussian" else "log"
        link = self.link or default_link
        object.__setattr__(self, "link", link)
        if link not in LINKS:
            raise DataDomainError(f"unknown link {link!r}")
        if link != default_link:
            raise DataDomainError(f"family {self.family!r} requires {default_link!r} link")
        if self.dispersion is not None and self.dispersion <= 0:
            raise DataDomainError("dispersion must be positive")


@dataclass(frozen=True)
class FitResult:
    """Per-coefficient estimates with Wald intervals and fit criteria."""

    names: tuple[str, ...]
    estimate: np.ndarray
    se: np.ndarray
    interval_lower: np.ndarray
    interval_upper: np.ndarray
    interval_level: float
    loglik: float
    aic: float
    bic: float
    converged: bool
    iterations: int
    n_params: int
    n_obs: int

    def coefficient(self, name: str) -> tuple[float, float, float, float]:
        """(estimate, se, lower, upper) for one named coefficient."""
        i = self.names.index(name)
        return (
            float(self.estimate[i]),
            float(self.se[i]),
            float(self.interval_lower[i]),
            float(self.interval_upper[i]),
        )


def wald_ci(estimate, se, level: float = 0.95):
    """estimate +/- z(level) * se; accepts scalars or arrays."""
    z = norm.ppf(1.0 - (1.0 - level) / 2.0)
    estimate = np.asarray(estimate, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    return estimate - z * se, estimate + z * se

def information_criteria(loglik: float, k_params: int, n_obs: int) -> tuple[float, float]:
    aic = 2.0 * k_params - 2.0 * loglik
    bic = k_params * np.log(n_obs) - 2.0 * loglik
    return float(aic), float(bic)


def _check_counts(y: np.ndarray, family: str) -> None:
    if family in ("poisson", "negative_binomial"):
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise DataDomainError(f"family {family!r} requires non-negative integer counts")


def _score(x, y, mu, family, theta):
    if family == "poisson":
        resid = y - mu
    elif family == "negative_binomial":
        resid = (y - mu) * theta / (theta + mu)
    else:
        resid = y - mu
    return x.T @ resid


def log_likelihood(y, mu, family, theta=None, n_obs=None):
    """Exact log-likelihood at fitted means (gaussian uses the MLE variance)."""
    n = len(y) if n_obs is None else n_obs
    if family == "gaussian":
        rss = float(np.sum((y - mu) ** 2))
        sigma2 = rss / n
        return -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)
    if family == "poisson":
        # y * log(mu) with 0*log(0) == 0
        yl = np.where(y > 0, y * np.log(np.where(mu > 0, mu, 1.0)), 0.0)
        return float(np.sum(yl - mu - gammaln(y + 1.0)))
    theta = float(theta)
    log_denom = np.log(theta + mu)
    yl = np.where(y > 0, y * (np.log(mu) - log_denom), 0.0)
    return float(
        np.sum(gammaln(y + theta) - gammaln(theta) - gammaln(y + 1.0)
               + theta * (np.log(theta) - log_denom) + yl)
    )


def moment_dispersion(y: np.ndarray, mu: np.ndarray) -> float:
    """Method-of-moments theta from a poisson fit: Var = mu + mu^2 / theta."""
    num = float(np.sum((y - mu) ** 2 - mu))
    denom = float(np.sum(mu**2))
    if denom <= 0 or num <= 0:
        return MAX_THETA
    return min(denom / num, MAX_THETA)


def fit_glm_irls(data: Dataset, spec: GlmSpec, level: float = 0.95) -> FitResult:
    """Fit by IRLS until max |score| < tol or max_iter is reached.

    Raises SingularDesignError for rank-deficient designs and DataDomainError
    for non-integer counts under a count family.
    """
    y = data.outcome
    x, names = data.design_matrix()
    n, p = x.shape
    _check_counts(y, spec.family)
    if n < p or np.linalg.matrix_rank(x) < p:
        raise SingularDesignError(f"design matrix is not full column rank ({n}x{p})")

    theta = spec.dispersion
    if spec.family == "negative_binomial" and theta is None:
        pre = fit_glm_irls(data, GlmSpec(family="poisson", max_iter=spec.max_iter, tol=spec.tol), level)
        mu_pre = np.exp(x @ pre.estimate)
        theta = moment_dispersion(y, mu_pre)

    if spec.family == "gaussian":
        beta, fisher = _solve_weighted(x, y, np.ones(n))
        mu = x @ beta
        iterations = 1
        converged = bool(np.max(np.abs(_score(x, y, mu, "gaussian", None))) < spec.tol)
        rss = float(np.sum((y - mu) ** 2))
        sigma2_hat = rss / (n - p) if n > p else np.nan
        cov = sigma2_hat * np.linalg.inv(fisher)
        k_params = p + 1  # variance is estimated too
    else:
        mu0 = np.maximum(y, 0.0) + 0.5
        eta = np.log(mu0)
        beta = np.zeros(p)
        beta[0] = np.log(max(float(np.mean(y)), 1e-8))
        converged = False
        iterations = 0
        for iterations in range(1, spec.max_iter + 1):
            eta = x @ beta
            mu = np.exp(eta)
            if spec.family == "poisson":
                w = mu
            else:
                w = mu * theta / (theta + mu)
            w = np.maximum(w, 1e-12)
            z = eta + (y - mu) / np.maximum(mu, 1e-12)
            beta, fisher = _solve_weighted(x, z, w)
            mu = np.exp(x @ beta)
            score = _score(x, y, mu, spec.family, theta)
            if np.max(np.abs(score)) < spec.tol:
                converged = True
                break
        cov = np.linalg.inv(fisher)
        k_params = p if spec.family == "poisson" else p + 1  # + dispersion

    se = np.sqrt(np.diag(cov))
    lower, upper = wald_ci(beta, se, level)
    ll = log_likelihood(y, mu, spec.family, theta)
    aic, bic = information_criteria(ll, k_params, n)
    return FitResult(
        names=tuple(names),
        estimate=beta,
        se=se,
        interval_lower=lower,
        interval_upper=upper,
        interval_level=level,
        loglik=ll,
        aic=aic,
        bic=bic,
        converged=converged,
        iterations=iterations,
        n_params=k_params,
        n_obs=n,
    )


def _solve_weighted(x, z, w):
    """Solve the weighted normal equations; returns (beta, X'WX)."""
    xw = x * w[:, None]
    fisher = x.T @ xw
    try:
        beta = np.linalg.solve(fisher, xw.T @ z)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc)) from exc
    return beta, fisher
