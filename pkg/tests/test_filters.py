"""Filter rule pipeline: golden threshold cases and pipeline properties."""

import pytest

from specverse.errors import SpecverseError
from specverse.filters import (
    FilterRule,
    apply_filters,
    filter_outcomes,
    ic_delta_filter,
    parse_filter_flag,
    parse_filter_rules,
)
from specverse.orchestrator import FailureKind, FitSummary, TrialOutcome, UniverseOutcome


def make_outcome(uid=0, wall_time=1.0, warnings=(), diagnostics=None, n_trials=1, failed=False):
    diagnostics = diagnostics if diagnostics is not None else {"geweke_p": 0.5}
    trials = tuple(
        TrialOutcome(
            trial_index=i,
            status="failure" if failed else "success",
            seed=i,
            wall_time=wall_time,
            fit=None if failed else FitSummary(estimate=0.3, interval_lower=0.1,
                                               interval_upper=0.5, interval_level=0.95),
            diagnostics={} if failed else dict(diagnostics),
            warnings=() if failed else tuple(warnings),
            failure=FailureKind("runner_error", "boom") if failed else None,
        )
        for i in range(n_trials)
    )
    return UniverseOutcome(
        universe_id=uid,
        assignment={"d": "o"},
        trials=trials,
        convergence_count=0 if failed else n_trials,
        pooled=None if failed else FitSummary(estimate=0.3, interval_lower=0.1,
                                              interval_upper=0.5, interval_level=0.95),
        failure=FailureKind("no_successful_trials", "") if failed else None,
    )


WALL_RULE = FilterRule(name="wall-limit", kind="wall_time_max", threshold=120.0)
GEWEKE_RULE = FilterRule(name="geweke", kind="geweke_min_p", threshold=0.1)
WARN_RULE = FilterRule(
    name="bad-warnings",
    kind="warning_class_reject",
    warning_patterns=("singular approximate Hessian", "non-existing MPLE"),
)
AIC_RULE = FilterRule(name="aic", kind="aic_no_increase")
BIC_RULE = FilterRule(name="bic", kind="bic_max_increase_pct", threshold=0.10)


class TestGoldenCases:
    def test_wall_time_130_vs_limit_120_rejects(self):
        verdict = apply_filters(make_outcome(wall_time=130.0), [WALL_RULE])
        assert not verdict.kept
        assert verdict.failed_rule == "wall-limit"

    def test_wall_time_under_limit_keeps(self):
        assert apply_filters(make_outcome(wall_time=33.7), [WALL_RULE]).kept

    def test_geweke_p_005_vs_min_01_rejects(self):
        verdict = apply_filters(
            make_outcome(diagnostics={"geweke_p": 0.05}), [GEWEKE_RULE]
        )
        assert not verdict.kept
        assert verdict.failed_rule == "geweke"

    def test_geweke_p_05_keeps(self):
        assert apply_filters(make_outcome(diagnostics={"geweke_p": 0.5}), [GEWEKE_RULE]).kept

    def test_hessian_warning_rejects(self):
        verdict = apply_filters(
            make_outcome(warnings=["model fit warning: singular approximate Hessian matrix"]),
            [WARN_RULE],
        )
        assert not verdict.kept
        assert "Hessian" in verdict.detail

    def test_aic_increase_rejects(self):
        out = make_outcome(
            diagnostics={"null_aic": 100.0, "final_aic": 101.0,
                         "null_bic": 100.0, "final_bic": 100.0}
        )
        verdict = apply_filters(out, [AIC_RULE])
        assert not verdict.kept

    def test_bic_increase_11pct_rejects(self):
        out = make_outcome(diagnostics={"null_bic": 100.0, "final_bic": 111.0})
        verdict = apply_filters(out, [BIC_RULE])
        assert not verdict.kept

    def test_bic_increase_5pct_keeps(self):
        out = make_outcome(
            diagnostics={"null_aic": 100.0, "final_aic": 99.0,
                         "null_bic": 100.0, "final_bic": 105.0}
        )
        assert apply_filters(out, [AIC_RULE, BIC_RULE]).kept


class TestIcDelta:
    def test_spec_threshold_cases(self):
        assert not ic_delta_filter(100.0, 100.0, 101.0, 100.0).kept
        assert not ic_delta_filter(100.0, 100.0, 99.0, 111.0).kept
        assert ic_delta_filter(100.0, 100.0, 99.0, 105.0).kept

    def test_non_finite_rejects(self):
        assert not ic_delta_filter(float("nan"), 100.0, 99.0, 100.0).kept
        assert not ic_delta_filter(100.0, 100.0, float("inf"), 100.0).kept
        verdict = ic_delta_filter(None, 1.0, 1.0, 1.0)
        assert not verdict.kept and "non-finite" in verdict.detail


class TestPipeline:
    def test_missing_diagnostic_rejects_conservatively(self):
        out = make_outcome(diagnostics={})
        verdict = apply_filters(out, [GEWEKE_RULE])
        assert not verdict.kept
        assert "missing diagnostic" in verdict.detail

    def test_empty_rule_list_keeps_everything(self):
        for outcome in (make_outcome(), make_outcome(failed=True)):
            assert apply_filters(outcome, []).kept

    def test_first_failing_rule_wins(self):
        out = make_outcome(wall_time=500.0, diagnostics={"geweke_p": 0.01})
        verdict = apply_filters(out, [WALL_RULE, GEWEKE_RULE])
        assert verdict.failed_rule == "wall-limit"
        verdict = apply_filters(out, [GEWEKE_RULE, WALL_RULE])
        assert verdict.failed_rule == "geweke"

    def test_adding_a_rule_never_unrejects(self):
        out = make_outcome(wall_time=500.0, diagnostics={"geweke_p": 0.5})
        base = [WALL_RULE]
        assert not apply_filters(out, base).kept
        for extra in (GEWEKE_RULE, WARN_RULE, AIC_RULE, BIC_RULE):
            assert not apply_filters(out, [extra, *base]).kept
            assert not apply_filters(out, [*base, extra]).kept

    def test_verdicts_are_pure(self):
        out = make_outcome(wall_time=130.0)
        assert apply_filters(out, [WALL_RULE]) == apply_filters(out, [WALL_RULE])

    def test_rejection_rewrites_failure(self):
        outcomes = [make_outcome(uid=0, wall_time=130.0), make_outcome(uid=1, wall_time=1.0)]
        filtered, verdicts = filter_outcomes(outcomes, [WALL_RULE])
        assert not verdicts[0].kept and verdicts[1].kept
        assert filtered[0].failed
        assert filtered[0].failure.kind == "diagnostic_reject"
        assert filtered[0].failure.detail.startswith("wall-limit")
        assert filtered[0].convergence_count == 1  # trials untouched
        assert filtered[1] is outcomes[1]

    def test_already_failed_outcome_passes_through(self):
        out = make_outcome(failed=True)
        filtered, verdicts = filter_outcomes([out], [WALL_RULE, GEWEKE_RULE])
        assert verdicts[0].kept
        assert filtered[0] is out

    def test_multi_trial_geweke_uses_bonferroni(self):
        # two trials at p=0.08: Bonferroni joint = 0.16, above the 0.1 threshold
        out = make_outcome(diagnostics={"geweke_p": 0.08}, n_trials=2)
        assert apply_filters(out, [GEWEKE_RULE]).kept
        # but a single trial at 0.08 rejects
        assert not apply_filters(make_outcome(diagnostics={"geweke_p": 0.08}), [GEWEKE_RULE]).kept


class TestParsing:
    def test_document_rules(self):
        rules = parse_filter_rules(
            [
                {"name": "wall", "kind": "wall_time_max", "threshold": 120},
                {"kind": "aic_no_increase"},
                {"name": "warn", "kind": "warning_class_reject", "patterns": ["bad"]},
            ]
        )
        assert [r.kind for r in rules] == [
            "wall_time_max", "aic_no_increase", "warning_class_reject"
        ]
        assert rules[1].name == "aic_no_increase#1"

    def test_cli_flags(self):
        rule = parse_filter_flag("geweke_min_p=0.1")
        assert rule.kind == "geweke_min_p" and rule.threshold == 0.1
        rule = parse_filter_flag("aic_no_increase")
        assert rule.threshold is None
        rule = parse_filter_flag("warning_class_reject=singular,MPLE")
        assert rule.warning_patterns == ("singular", "MPLE")

    def test_invalid_rules_rejected(self):
        with pytest.raises(SpecverseError):
            FilterRule(name="x", kind="nope")
        with pytest.raises(SpecverseError):
            FilterRule(name="x", kind="wall_time_max")
        with pytest.raises(SpecverseError):
            FilterRule(name="x", kind="warning_class_reject")
