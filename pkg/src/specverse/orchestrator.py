"""Failure-aware execution of universes through runner processes.

Trials run sequentially within a universe with individually derived seeds;
parallelism is across universes via worker threads, each owning one runner
subprocess. A trial exceeding the timeout kills its runner process (respawned
for the next request). All failures are data: they become typed FailureKind
records, never engine exceptions. The store is the only shared mutable
resource; writes go through a single lock.
"""

from __future__ import annotations

import hashlib
import logging
import os
import queue
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SpecverseError
from .protocol import (
    AnalysisRequest,
    DispatchTimeout,
    ProtocolError,
    RunnerCrashed,
    RunnerHandle,
    RunnerSpec,
    dispatch,
)
from .space import Universe, ValidatedSpace
from .store import RunStore, canonical_digest
from .stats.bayes import equal_tailed_interval
from .stats.glm import information_criteria

log = logging.getLogger(__name__)

FAILURE_KINDS = (
    "timeout",
    "runner_error",
    "protocol_error",
    "diagnostic_reject",
    "no_successful_trials",
)

POOLING_POLICIES = ("combine_samples", "median_of_estimates")

# Documented grace bound: a timed-out trial's wall time may exceed the
# configured limit by at most this much (process kill + bookkeeping).
TIMEOUT_GRACE_SECONDS = 0.25

PARALLEL_ENV_VAR = "SPECVERSE_PARALLEL"


def default_parallelism() -> int:
    raw = os.environ.get(PARALLEL_ENV_VAR, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RunConfig:
    run_seed: int = 0
    timeout_per_trial: float = 120.0
    trials_per_universe: int = 1
    max_parallel: int = 0  # 0: resolve from SPECVERSE_PARALLEL (default 1)
    pooling_policy: str = "combine_samples"
    fixed_trial_seed: bool = False  # reuse trial 0's seed for every trial

    def __post_init__(self):
        if self.timeout_per_trial <= 0:
            raise SpecverseError("timeout_per_trial must be positive")
        if self.trials_per_universe < 1:
            raise SpecverseError("trials_per_universe must be >= 1")
        if self.pooling_policy not in POOLING_POLICIES:
            raise SpecverseError(f"unknown pooling policy {self.pooling_policy!r}")

    def resolved_parallelism(self) -> int:
        return self.max_parallel if self.max_parallel >= 1 else default_parallelism()

    def key_subset(self, runner_spec: RunnerSpec) -> dict:
        """The run-relevant fields that participate in outcome identity."""
        return {
            "seed": self.run_seed,
            "trials": self.trials_per_universe,
            "timeout": self.timeout_per_trial,
            "pooling": self.pooling_policy,
            "fixed_trial_seed": self.fixed_trial_seed,
            "runner": runner_spec.describe(),
        }


@dataclass(frozen=True)
class FailureKind:
    kind: str
    detail: str = ""

    def to_doc(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}

    @classmethod
    def from_doc(cls, doc):
        return None if doc is None else cls(kind=doc["kind"], detail=doc["detail"])


@dataclass(frozen=True)
class FitSummary:
    """Scalar effect summary of one trial or one pooled universe."""

    estimate: float
    interval_lower: float | None = None
    interval_upper: float | None = None
    interval_level: float | None = None
    se: float | None = None
    loglik: float | None = None
    aic: float | None = None
    bic: float | None = None
    n_params: int | None = None
    n_obs: int | None = None

    def to_doc(self) -> dict:
        return {
            "estimate": self.estimate,
            "interval_lower": self.interval_lower,
            "interval_upper": self.interval_upper,
            "interval_level": self.interval_level,
            "se": self.se,
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
        }

    @classmethod
    def from_doc(cls, doc):
        return None if doc is None else cls(**doc)


@dataclass(frozen=True)
class TrialOutcome:
    trial_index: int
    status: str  # "success" | "failure"
    seed: int
    wall_time: float
    fit: FitSummary | None = None
    samples: tuple[float, ...] | None = None
    diagnostics: dict[str, float] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    failure: FailureKind | None = None

    def to_doc(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "status": self.status,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "fit": self.fit.to_doc() if self.fit else None,
            "samples": list(self.samples) if self.samples is not None else None,
            "diagnostics": dict(self.diagnostics),
            "warnings": list(self.warnings),
            "failure": self.failure.to_doc() if self.failure else None,
        }

    @classmethod
    def from_doc(cls, doc):
        return cls(
            trial_index=doc["trial_index"],
            status=doc["status"],
            seed=doc["seed"],
            wall_time=doc["wall_time"],
            fit=FitSummary.from_doc(doc["fit"]),
            samples=tuple(doc["samples"]) if doc["samples"] is not None else None,
            diagnostics=dict(doc["diagnostics"]),
            warnings=tuple(doc["warnings"]),
            failure=FailureKind.from_doc(doc["failure"]),
        )


@dataclass(frozen=True)
class UniverseOutcome:
    universe_id: int
    assignment: dict[str, str]
    trials: tuple[TrialOutcome, ...]
    convergence_count: int
    pooled: FitSummary | None
    failure: FailureKind | None

    @property
    def failed(self) -> bool:
        return self.pooled is None

    def successful_trials(self) -> list[TrialOutcome]:
        return [t for t in self.trials if t.status == "success"]

    def diagnostic_values(self, key: str) -> list[float]:
        return [t.diagnostics[key] for t in self.successful_trials() if key in t.diagnostics]

    def to_doc(self) -> dict:
        return {
            "universe_id": self.universe_id,
            "assignment": dict(self.assignment),
            "trials": [t.to_doc() for t in self.trials],
            "convergence_count": self.convergence_count,
            "pooled": self.pooled.to_doc() if self.pooled else None,
            "failure": self.failure.to_doc() if self.failure else None,
        }

    @classmethod
    def from_doc(cls, doc):
        return cls(
            universe_id=doc["universe_id"],
            assignment=dict(doc["assignment"]),
            trials=tuple(TrialOutcome.from_doc(t) for t in doc["trials"]),
            convergence_count=doc["convergence_count"],
            pooled=FitSummary.from_doc(doc["pooled"]),
            failure=FailureKind.from_doc(doc["failure"]),
        )


def derive_seed(run_seed: int, universe_id: int, trial_index: int) -> int:
    """Deterministic 63-bit seed from (run seed, universe, trial).

    blake2b over the big-endian packed triple, top bit cleared so the value
    fits every signed consumer. Documented in README; identical across
    platforms and runs.
    """
    packed = struct.pack(">qqq", run_seed, universe_id, trial_index)
    digest = hashlib.blake2b(packed, digest_size=8).digest()
    return int.from_bytes(digest, "big") & 0x7FFF_FFFF_FFFF_FFFF


class RunnerSession:
    """Owns one runner subprocess; respawns it after timeouts and crashes.

    A spawn failure is retried once; the second failure surfaces as a
    runner_error for the affected trial.
    """

    def __init__(self, spec: RunnerSpec):
        self.spec = spec
        self.handle: RunnerHandle | None = None

    def _ensure(self) -> RunnerHandle:
        if self.handle is not None and self.handle.alive():
            return self.handle
        last_exc = None
        for _ in range(2):
            try:
                self.handle = RunnerHandle(self.spec)
                return self.handle
            except OSError as exc:
                last_exc = exc
                log.warning("runner spawn failed (%s); retrying once", exc)
        raise RunnerCrashed(f"could not spawn runner: {last_exc}")

    def dispatch(self, request: AnalysisRequest, timeout: float):
        handle = self._ensure()
        try:
            return dispatch(handle, request, timeout)
        except (DispatchTimeout, RunnerCrashed):
            self._drop()
            raise

    def _drop(self) -> None:
        if self.handle is not None:
            self.handle.close()
            self.handle = None

    def close(self) -> None:
        self._drop()


def _fit_from_response(resp) -> FitSummary:
    lower = upper = level = None
    if resp.interval is not None:
        lower, upper, level = resp.interval
    aic = bic = None
    if resp.loglik is not None and resp.n_params is not None and resp.n_obs is not None:
        aic, bic = information_criteria(resp.loglik, resp.n_params, resp.n_obs)
    return FitSummary(
        estimate=resp.estimate,
        interval_lower=lower,
        interval_upper=upper,
        interval_level=level,
        loglik=resp.loglik,
        aic=aic,
        bic=bic,
        n_params=resp.n_params,
        n_obs=resp.n_obs,
    )


def run_trial(universe: Universe, payloads: dict, trial_index: int, config: RunConfig,
              session: RunnerSession) -> TrialOutcome:
    seed = derive_seed(
        config.run_seed, universe.id, 0 if config.fixed_trial_seed else trial_index
    )
    request = AnalysisRequest(
        universe_id=universe.id,
        trial_index=trial_index,
        seed=seed,
        assignment=universe.as_dict(),
        payloads=payloads,
        timeout_hint=config.timeout_per_trial,
    )
    started = time.monotonic()
    failure = None
    response = None
    try:
        response = session.dispatch(request, config.timeout_per_trial)
    except DispatchTimeout:
        failure = FailureKind("timeout", f"exceeded {config.timeout_per_trial} s")
    except ProtocolError as exc:
        failure = FailureKind("protocol_error", str(exc))
    except RunnerCrashed as exc:
        failure = FailureKind("runner_error", str(exc))
    wall = time.monotonic() - started

    if failure is None and response.status == "error":
        failure = FailureKind("runner_error", response.error_message or "runner error")
    if failure is not None:
        return TrialOutcome(
            trial_index=trial_index, status="failure", seed=seed, wall_time=wall,
            failure=failure,
        )
    return TrialOutcome(
        trial_index=trial_index,
        status="success",
        seed=seed,
        wall_time=wall,
        fit=_fit_from_response(response),
        samples=tuple(response.samples) if response.samples is not None else None,
        diagnostics=dict(response.diagnostics),
        warnings=tuple(response.warnings),
    )


def pool_trials(trials, policy: str) -> FitSummary:
    """Summarize the successful trials of one universe.

    combine_samples concatenates posterior sample vectors and takes the
    median plus equal-tailed interval; when any successful trial lacks
    samples it falls back to median_of_estimates (component-wise medians of
    estimates and interval bounds).
    """
    successes = [t for t in trials if t.status == "success"]
    if not successes:
        raise SpecverseError("pool_trials requires at least one successful trial")

    def _median_of(values):
        values = [v for v in values if v is not None]
        return float(np.median(values)) if values else None

    level = next((t.fit.interval_level for t in successes if t.fit.interval_level), 0.95)
    shared = {
        "loglik": _median_of([t.fit.loglik for t in successes]),
        "aic": _median_of([t.fit.aic for t in successes]),
        "bic": _median_of([t.fit.bic for t in successes]),
        "n_params": successes[0].fit.n_params,
        "n_obs": successes[0].fit.n_obs,
    }

    if policy == "combine_samples" and all(t.samples for t in successes):
        combined = np.concatenate([np.asarray(t.samples, dtype=np.float64) for t in successes])
        lower, upper = equal_tailed_interval(combined[:, None], level)
        return FitSummary(
            estimate=float(np.median(combined)),
            interval_lower=float(lower[0]),
            interval_upper=float(upper[0]),
            interval_level=level,
            se=float(np.std(combined, ddof=1)) if combined.size > 1 else 0.0,
            **shared,
        )

    return FitSummary(
        estimate=_median_of([t.fit.estimate for t in successes]),
        interval_lower=_median_of([t.fit.interval_lower for t in successes]),
        interval_upper=_median_of([t.fit.interval_upper for t in successes]),
        interval_level=level,
        **shared,
    )


def run_universe(universe: Universe, payloads: dict, config: RunConfig,
                 session: RunnerSession) -> UniverseOutcome:
    """Execute all trials of one universe and pool the successful ones."""
    trials = tuple(
        run_trial(universe, payloads, t, config, session)
        for t in range(config.trials_per_universe)
    )
    successes = [t for t in trials if t.status == "success"]
    if successes:
        pooled = pool_trials(trials, config.pooling_policy)
        failure = None
    else:
        pooled = None
        if len(trials) == 1:
            failure = trials[0].failure
        else:
            kinds = sorted({t.failure.kind for t in trials})
            failure = FailureKind(
                "no_successful_trials",
                f"0 of {len(trials)} trials succeeded (kinds: {', '.join(kinds)})",
            )
    return UniverseOutcome(
        universe_id=universe.id,
        assignment=universe.as_dict(),
        trials=trials,
        convergence_count=len(successes),
        pooled=pooled,
        failure=failure,
    )


@dataclass
class RunResult:
    outcomes: list[UniverseOutcome]
    n_executed: int
    n_resumed: int

    @property
    def n_failed(self) -> int:
        return sum(1 for o in self.outcomes if o.failed)


def payload_lookup(space: ValidatedSpace) -> dict[str, dict[str, dict]]:
    return {d.name: {o.label: o.payload for o in d.options} for d in space.decisions}


def universe_payloads(universe: Universe, lookup) -> dict[str, dict]:
    out = {}
    for name, label in universe.assignment:
        out[name] = lookup.get(name, {}).get(label, {})
    return out


def universe_key(space_doc: dict, universe: Universe, config: RunConfig,
                 runner_spec: RunnerSpec) -> str:
    return canonical_digest(space_doc, universe.as_dict(), config.key_subset(runner_spec))


def run_multiverse(
    universes: list[Universe],
    config: RunConfig,
    runner_spec: RunnerSpec,
    store: RunStore,
    space: ValidatedSpace,
    progress=None,
) -> RunResult:
    """Run every universe once, resume-aware, with bounded parallelism.

    Outcomes are persisted as they complete and reported sorted by
    universe_id. Universes whose (space, assignment, config) key is already
    stored are loaded, not re-executed.
    """
    manifest = store.read_manifest()
    if manifest is None:
        raise SpecverseError("store has no manifest; create it with RunStore.create")
    space_doc = manifest["space"]
    lookup = payload_lookup(space)

    keyed = [(universe_key(space_doc, u, config, runner_spec), u) for u in universes]
    pending, completed = store.resume_plan(keyed)

    outcomes: list[UniverseOutcome] = []
    for key, _universe in completed:
        outcomes.append(UniverseOutcome.from_doc(store.load_outcome(key)))

    state = {"done": len(outcomes), "failed": sum(1 for o in outcomes if o.failed)}
    total = len(universes)
    lock = threading.Lock()
    work: queue.Queue = queue.Queue()
    for item in pending:
        work.put(item)
    errors: list[BaseException] = []

    def report():
        if progress is not None:
            progress(state["done"], state["failed"], total - state["done"])

    def worker():
        session = RunnerSession(runner_spec)
        try:
            while True:
                try:
                    key, universe = work.get_nowait()
                except queue.Empty:
                    return
                outcome = run_universe(
                    universe, universe_payloads(universe, lookup), config, session
                )
                with lock:
                    if errors:
                        return
                    store.persist_outcome(key, outcome.to_doc())
                    outcomes.append(outcome)
                    state["done"] += 1
                    state["failed"] += outcome.failed
                    report()
        except BaseException as exc:  # store I/O errors abort the run
            with lock:
                errors.append(exc)
        finally:
            session.close()

    n_workers = min(config.resolved_parallelism(), max(1, len(pending)))
    threads = [threading.Thread(target=worker, daemon=True) for _ in range(n_workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]

    store.finish_manifest()
    outcomes.sort(key=lambda o: o.universe_id)
    return RunResult(outcomes=outcomes, n_executed=len(pending), n_resumed=len(completed))
