"""Chain convergence diagnostics."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from ..errors import DataDomainError

MIN_CHAIN_LENGTH = 100
# Fixed-lag window for the spectral variance: 4% of the segment length.
SPECTRAL_WINDOW_FRACTION = 0.04


def spectral_variance_of_mean(segment: np.ndarray) -> float:
    """Variance of the segment mean from a Bartlett-windowed spectral estimate.

    S(0) = gamma_0 + 2 * sum_{l=1..L} (1 - l/(L+1)) * gamma_l with
    L = max(1, floor(0.04 * m)); the returned value is S(0)/m.
    """
    m = segment.shape[0]
    xc = segment - segment.mean()
    lags = max(1, int(SPECTRAL_WINDOW_FRACTION * m))
    s0 = float(xc @ xc) / m
    for lag in range(1, lags + 1):
        gamma = float(xc[: m - lag] @ xc[lag:]) / m
        s0 += 2.0 * (1.0 - lag / (lags + 1.0)) * gamma
    return s0 / m


def geweke_pvalue(chain, frac_a: float = 0.1, frac_b: float = 0.5) -> float:
    """Two-sided p-value comparing early and late segment means.

    Compares the mean of the first ``frac_a`` fraction against the last
    ``frac_b`` fraction using spectral-density variance estimates. A chain
    with exactly equal segment means (e.g. a constant chain) returns 1.0.
    """
    chain = np.asarray(chain, dtype=np.float64)
    n = chain.shape[0]
    if n < MIN_CHAIN_LENGTH:
        raise DataDomainError(f"chain length {n} < {MIN_CHAIN_LENGTH}")
    if not (0 < frac_a < 1 and 0 < frac_b < 1 and frac_a + frac_b <= 1):
        raise DataDomainError("segment fractions must be in (0,1) and non-overlapping")
    seg_a = chain[: int(frac_a * n)]
    seg_b = chain[n - int(frac_b * n):]
    mean_a = float(seg_a.mean())
    mean_b = float(seg_b.mean())
    if mean_a == mean_b:
        return 1.0
    var = spectral_variance_of_mean(seg_a) + spectral_variance_of_mean(seg_b)
    if var <= 0:
        return 0.0  # distinct constant segments: unambiguous drift
    z = (mean_a - mean_b) / np.sqrt(var)
    return float(2.0 * norm.sf(abs(z)))
