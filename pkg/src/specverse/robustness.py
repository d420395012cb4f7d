"""Classify per-universe effects against the original finding and summarize.

The reference estimate and direction always come from the decision-space
document (the original study's reported effect), never from the multiverse
itself; deriving them from the results would make robustness claims circular.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataDomainError
from .orchestrator import UniverseOutcome

CLASS_SAME = "same_direction_excludes_zero"
CLASS_OPPOSITE = "opposite_direction_excludes_zero"
CLASS_OVERLAP = "overlaps_zero"
CLASS_FAILED = "failed"
CLASSES = (CLASS_SAME, CLASS_OPPOSITE, CLASS_OVERLAP, CLASS_FAILED)

DIRECTIONS = ("positive", "negative")

# Failure-rate strata bounds (lower, upper, label), descending by lower bound.
FAILURE_RATE_BINS = (
    (0.50, float("inf"), ">=50%"),
    (0.10, 0.50, "10-50%"),
    (0.01, 0.10, "1-10%"),
    (0.0, 0.01, "<1%"),
)


def classify_interval(estimate: float, interval: tuple[float, float],
                      reference_direction: str) -> str:
    """Interval-based direction class relative to the original finding."""
    if reference_direction not in DIRECTIONS:
        raise ConfigurationError(f"unknown reference direction {reference_direction!r}")
    lower, upper = interval
    if lower > upper:
        raise DataDomainError(f"interval bounds out of order: ({lower}, {upper})")
    if lower > 0:
        found = "positive"
    elif upper < 0:
        found = "negative"
    else:
        return CLASS_OVERLAP
    return CLASS_SAME if found == reference_direction else CLASS_OPPOSITE


def classify_outcome(outcome: UniverseOutcome, reference_direction: str) -> str:
    if outcome.failed:
        return CLASS_FAILED
    pooled = outcome.pooled
    if pooled.interval_lower is None or pooled.interval_upper is None:
        return CLASS_OVERLAP  # no interval: zero cannot be excluded
    return classify_interval(
        pooled.estimate, (pooled.interval_lower, pooled.interval_upper), reference_direction
    )


def vibration_ratio(estimates) -> tuple[float, bool]:
    """max/min of the raw estimates plus a mixed-sign flag.

    The ratio presumes same-sign estimates; with a sign change it is still
    reported but flagged non-interpretable. A zero minimum has no defined
    ratio and raises.
    """
    values = np.asarray(list(estimates), dtype=np.float64)
    if values.size == 0:
        raise DataDomainError("vibration ratio needs at least one estimate")
    lo, hi = float(values.min()), float(values.max())
    if lo == 0.0:
        raise DataDomainError("vibration ratio undefined: smallest estimate is 0")
    return hi / lo, lo < 0.0 < hi


@dataclass(frozen=True)
class RobustnessSummary:
    n_total: int
    n_failed: int
    class_counts: dict[str, int]
    fraction_same_direction_excluding_zero: float | None
    fraction_overlapping_zero: float | None
    fraction_exceeding_reference: float | None
    median_estimate: float | None
    vibration_ratio: float | None
    sign_change_flag: bool

    def to_doc(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_failed": self.n_failed,
            "class_counts": dict(self.class_counts),
            "fraction_same_direction_excluding_zero":
                self.fraction_same_direction_excluding_zero,
            "fraction_overlapping_zero": self.fraction_overlapping_zero,
            "fraction_exceeding_reference": self.fraction_exceeding_reference,
            "median_estimate": self.median_estimate,
            "vibration_ratio": self.vibration_ratio,
            "sign_change_flag": self.sign_change_flag,
        }


def summarize(outcomes, reference_estimate: float, reference_direction: str) -> RobustnessSummary:
    """Multiverse-level robustness statistics over the non-failed outcomes."""
    outcomes = list(outcomes)
    counts = {c: 0 for c in CLASSES}
    estimates = []
    for outcome in outcomes:
        counts[classify_outcome(outcome, reference_direction)] += 1
        if not outcome.failed:
            estimates.append(outcome.pooled.estimate)

    n_total = len(outcomes)
    n_failed = counts[CLASS_FAILED]
    n_ok = n_total - n_failed
    if n_ok == 0:
        return RobustnessSummary(
            n_total=n_total,
            n_failed=n_failed,
            class_counts=counts,
            fraction_same_direction_excluding_zero=None,
            fraction_overlapping_zero=None,
            fraction_exceeding_reference=None,
            median_estimate=None,
            vibration_ratio=None,
            sign_change_flag=False,
        )

    if reference_direction == "positive":
        n_exceed = sum(1 for e in estimates if e > reference_estimate)
    else:
        n_exceed = sum(1 for e in estimates if e < reference_estimate)
    try:
        ratio, sign_change = vibration_ratio(estimates)
    except DataDomainError:
        ratio, sign_change = None, min(estimates) < 0.0 < max(estimates)

    return RobustnessSummary(
        n_total=n_total,
        n_failed=n_failed,
        class_counts=counts,
        fraction_same_direction_excluding_zero=counts[CLASS_SAME] / n_ok,
        fraction_overlapping_zero=counts[CLASS_OVERLAP] / n_ok,
        fraction_exceeding_reference=n_exceed / n_ok,
        median_estimate=float(np.median(estimates)),
        vibration_ratio=ratio,
        sign_change_flag=sign_change,
    )


STRATIFY_KEYS = ("convergence_count", "failure_rate_bin")


def failure_rate_bin(rate: float) -> str:
    for lower, _upper, label in FAILURE_RATE_BINS:
        if rate >= lower:
            return label
    return FAILURE_RATE_BINS[-1][2]


def stratify(outcomes, key: str) -> dict:
    """Partition outcomes into strata ordered descending by stratum key.

    convergence_count groups by the number of successful trials (requires a
    multi-trial run). failure_rate_bin groups by the mean ``failure_rate``
    diagnostic into the documented bins; outcomes without the diagnostic are
    only tolerated when they carry no successful trials at all (stratum
    "unavailable", ordered last).
    """
    outcomes = list(outcomes)
    if key == "convergence_count":
        if outcomes and all(len(o.trials) <= 1 for o in outcomes):
            raise ConfigurationError(
                "convergence_count stratification requires trials_per_universe > 1"
            )
        strata: dict = {}
        for outcome in outcomes:
            strata.setdefault(outcome.convergence_count, []).append(outcome)
        return {k: strata[k] for k in sorted(strata, reverse=True)}

    if key == "failure_rate_bin":
        binned: dict = {}
        unavailable = []
        for outcome in outcomes:
            rates = outcome.diagnostic_values("failure_rate")
            if not rates:
                if outcome.successful_trials():
                    raise ConfigurationError(
                        f"universe {outcome.universe_id} has no failure_rate diagnostic"
                    )
                unavailable.append(outcome)
                continue
            binned.setdefault(failure_rate_bin(float(np.mean(rates))), []).append(outcome)
        ordered_labels = [label for *_bounds, label in FAILURE_RATE_BINS if label in binned]
        result = {label: binned[label] for label in ordered_labels}
        if unavailable:
            result["unavailable"] = unavailable
        return result

    raise ConfigurationError(f"unknown stratification key {key!r}")
