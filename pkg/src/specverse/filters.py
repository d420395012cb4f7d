"""Automated convergence / goodness-of-fit rules over universe outcomes.

Rules are evaluated in pipeline order and the first failure wins. They only
ever inspect the successful trials of an outcome; a rule whose diagnostic is
missing rejects conservatively (at multiverse scale, silently keeping
unverifiable fits would bias robustness summaries toward survivorship).
Across repeated trials: wall-time uses the maximum, warning and information
criteria rules reject when any trial violates, and Geweke p-values combine by
Bonferroni min-p before comparison against the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import SpecverseError
from .orchestrator import FailureKind, UniverseOutcome

RULE_KINDS = (
    "wall_time_max",
    "warning_class_reject",
    "geweke_min_p",
    "aic_no_increase",
    "bic_max_increase_pct",
)

_NEEDS_THRESHOLD = ("wall_time_max", "geweke_min_p")
DEFAULT_BIC_INCREASE_PCT = 0.10


@dataclass(frozen=True)
class FilterRule:
    name: str
    kind: str
    threshold: float | None = None
    warning_patterns: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise SpecverseError(f"unknown filter kind {self.kind!r}")
        if self.kind in _NEEDS_THRESHOLD and (self.threshold is None or self.threshold <= 0):
            raise SpecverseError(f"filter {self.name!r} ({self.kind}) needs a positive threshold")
        if self.kind == "bic_max_increase_pct" and self.threshold is not None and self.threshold <= 0:
            raise SpecverseError(f"filter {self.name!r} needs a positive threshold")
        if self.kind == "warning_class_reject" and not self.warning_patterns:
            raise SpecverseError(f"filter {self.name!r} needs at least one warning pattern")


@dataclass(frozen=True)
class FilterVerdict:
    kept: bool
    failed_rule: str | None = None
    detail: str = ""

    def __post_init__(self):
        assert self.kept == (self.failed_rule is None)


def _keep() -> FilterVerdict:
    return FilterVerdict(kept=True)


def _reject(rule: FilterRule, detail: str) -> FilterVerdict:
    return FilterVerdict(kept=False, failed_rule=rule.name, detail=detail)


def ic_delta_filter(null_aic, null_bic, final_aic, final_bic,
                    bic_pct: float = DEFAULT_BIC_INCREASE_PCT) -> FilterVerdict:
    """Keep a fit whose AIC did not increase over the null model and whose
    BIC increased by at most ``bic_pct``; non-finite inputs reject."""
    values = (null_aic, null_bic, final_aic, final_bic)
    if any(v is None or not math.isfinite(v) for v in values):
        return FilterVerdict(
            kept=False, failed_rule="ic_delta", detail=f"non-finite criteria: {values}"
        )
    if final_aic > null_aic:
        return FilterVerdict(
            kept=False,
            failed_rule="ic_delta",
            detail=f"AIC increased: {final_aic} > {null_aic}",
        )
    bound = null_bic * (1.0 + bic_pct)
    if final_bic > bound:
        return FilterVerdict(
            kept=False,
            failed_rule="ic_delta",
            detail=f"BIC increased by more than {bic_pct:.0%}: {final_bic} > {bound}",
        )
    return _keep()


def _trial_diagnostics(outcome, key):
    """(values, missing_from) across successful trials."""
    values = []
    missing = []
    for t in outcome.successful_trials():
        if key in t.diagnostics:
            values.append(t.diagnostics[key])
        else:
            missing.append(t.trial_index)
    return values, missing


def _eval_rule(rule: FilterRule, outcome: UniverseOutcome) -> FilterVerdict:
    successes = outcome.successful_trials()

    if rule.kind == "wall_time_max":
        worst = max(t.wall_time for t in successes)
        if worst > rule.threshold:
            return _reject(rule, f"wall time {worst:.3f} s > {rule.threshold} s")
        return _keep()

    if rule.kind == "warning_class_reject":
        for t in successes:
            for warning in t.warnings:
                for pattern in rule.warning_patterns:
                    if pattern in warning:
                        return _reject(rule, f"trial {t.trial_index} warned: {warning!r}")
        return _keep()

    if rule.kind == "geweke_min_p":
        values, missing = _trial_diagnostics(outcome, "geweke_p")
        if missing or not values:
            return _reject(rule, "missing diagnostic geweke_p")
        combined = min(1.0, len(values) * min(values))  # Bonferroni min-p
        if combined < rule.threshold:
            return _reject(rule, f"Bonferroni min-p {combined:.4g} < {rule.threshold}")
        return _keep()

    if rule.kind == "aic_no_increase":
        for key in ("null_aic", "final_aic"):
            _, missing = _trial_diagnostics(outcome, key)
            if missing:
                return _reject(rule, f"missing diagnostic {key}")
        for t in successes:
            null_aic, final_aic = t.diagnostics["null_aic"], t.diagnostics["final_aic"]
            if not (math.isfinite(null_aic) and math.isfinite(final_aic)):
                return _reject(rule, f"non-finite AIC in trial {t.trial_index}")
            if final_aic > null_aic:
                return _reject(
                    rule, f"trial {t.trial_index} AIC increased: {final_aic} > {null_aic}"
                )
        return _keep()

    # bic_max_increase_pct
    pct = rule.threshold if rule.threshold is not None else DEFAULT_BIC_INCREASE_PCT
    for key in ("null_bic", "final_bic"):
        _, missing = _trial_diagnostics(outcome, key)
        if missing:
            return _reject(rule, f"missing diagnostic {key}")
    for t in successes:
        null_bic, final_bic = t.diagnostics["null_bic"], t.diagnostics["final_bic"]
        if not (math.isfinite(null_bic) and math.isfinite(final_bic)):
            return _reject(rule, f"non-finite BIC in trial {t.trial_index}")
        bound = null_bic * (1.0 + pct)
        if final_bic > bound:
            return _reject(
                rule,
                f"trial {t.trial_index} BIC increased by more than {pct:.0%}: "
                f"{final_bic} > {bound}",
            )
    return _keep()


def apply_filters(outcome: UniverseOutcome, rules) -> FilterVerdict:
    """First failing rule wins; already-failed outcomes pass through unjudged."""
    if outcome.failed:
        return FilterVerdict(kept=True, detail="outcome already failed; rules not applied")
    for rule in rules:
        verdict = _eval_rule(rule, outcome)
        if not verdict.kept:
            return verdict
    return _keep()


def reject_outcome(outcome: UniverseOutcome, verdict: FilterVerdict) -> UniverseOutcome:
    """Rewrite a filtered-out outcome: pooled result dropped, typed rejection."""
    return UniverseOutcome(
        universe_id=outcome.universe_id,
        assignment=outcome.assignment,
        trials=outcome.trials,
        convergence_count=outcome.convergence_count,
        pooled=None,
        failure=FailureKind("diagnostic_reject", f"{verdict.failed_rule}: {verdict.detail}"),
    )


def filter_outcomes(outcomes, rules) -> tuple[list[UniverseOutcome], list[FilterVerdict]]:
    """Apply the pipeline to every outcome; returns (new outcomes, verdicts)."""
    rules = list(rules)
    filtered = []
    verdicts = []
    for outcome in outcomes:
        verdict = apply_filters(outcome, rules)
        verdicts.append(verdict)
        filtered.append(outcome if verdict.kept else reject_outcome(outcome, verdict))
    return filtered, verdicts


def parse_filter_rules(docs) -> list[FilterRule]:
    """Rules from the decision-space document's ``filters`` array."""
    rules = []
    for i, doc in enumerate(docs):
        rules.append(
            FilterRule(
                name=doc.get("name", f"{doc['kind']}#{i}"),
                kind=doc["kind"],
                threshold=doc.get("threshold"),
                warning_patterns=tuple(doc.get("patterns", ())),
            )
        )
    return rules


def parse_filter_flag(flag: str, index: int = 0) -> FilterRule:
    """One ``--filter`` flag: ``kind``, ``kind=threshold`` or
    ``warning_class_reject=substring[,substring...]``."""
    kind, _, value = flag.partition("=")
    kind = kind.strip()
    if kind == "warning_class_reject":
        patterns = tuple(p for p in value.split(",") if p)
        return FilterRule(name=f"cli:{kind}", kind=kind, warning_patterns=patterns)
    threshold = float(value) if value else None
    return FilterRule(name=f"cli:{kind}", kind=kind, threshold=threshold)
