"""Random-effects pooling of per-unit effect estimates (DerSimonian-Laird)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataDomainError
from .glm import wald_ci


@dataclass(frozen=True)
class MetaResult:
    pooled: float
    se: float
    interval_lower: float
    interval_upper: float
    interval_level: float
    tau2: float
    q_stat: float
    k_studies: int


def meta_analysis_dl(effects, variances, level: float = 0.95) -> MetaResult:
    """DerSimonian-Laird random-effects pooling.

    tau^2 = max(0, (Q - (k-1)) / (sum w - sum w^2 / sum w)) with w = 1/v;
    the pooled effect uses w* = 1/(v + tau^2) and a Wald interval. For a
    single study tau^2 is 0 and the study is returned as-is.
    """
    y = np.asarray(effects, dtype=np.float64)
    v = np.asarray(variances, dtype=np.float64)
    k = y.shape[0]
    if k == 0:
        raise DataDomainError("meta-analysis needs at least one study")
    if v.shape != y.shape:
        raise DataDomainError("effects and variances must have equal length")
    if np.any(v <= 0):
        raise DataDomainError("variances must be positive")

    w = 1.0 / v
    sw = float(np.sum(w))
    ybar_fixed = float(np.sum(w * y) / sw)
    q = float(np.sum(w * (y - ybar_fixed) ** 2))
    if k == 1:
        tau2 = 0.0
    else:
        c = sw - float(np.sum(w * w)) / sw
        tau2 = max(0.0, (q - (k - 1)) / c)

    w_star = 1.0 / (v + tau2)
    pooled = float(np.sum(w_star * y) / np.sum(w_star))
    se = float(np.sqrt(1.0 / np.sum(w_star)))
    lower, upper = wald_ci(pooled, se, level)
    return MetaResult(
        pooled=pooled,
        se=se,
        interval_lower=float(lower),
        interval_upper=float(upper),
        interval_level=level,
        tau2=tau2,
        q_stat=q,
        k_studies=k,
    )
