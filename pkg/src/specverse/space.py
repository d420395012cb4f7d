"""Decision-space model: declare, validate, enumerate, prune, sample, partition.

A decision space is an ordered list of decisions, each with labeled options.
A decision may carry a guard (``active_when``) that makes it active only under
certain option labels of a parent decision; guards express nested option menus.
Constraints exclude implausible label combinations. Enumeration produces the
canonical universe list: decisions in declaration order, options in declaration
order, last decision varying fastest, ids dense from 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SampleSizeError, SpaceValidationError

DECISION_TYPES = ("E", "N", "U")
DECISION_FUNCTIONS = ("selectional", "operationalizational", "statistical")
CONSTRAINT_KINDS = ("forbid", "require")


@dataclass(frozen=True)
class OptionSpec:
    """One defensible option of a decision; payload is forwarded to runners."""

    label: str
    payload: dict = field(default_factory=dict)
    is_original: bool = False


@dataclass(frozen=True)
class Guard:
    """Activation condition: parent decision assigned one of these labels."""

    parent: str
    labels: frozenset[str]

    def satisfied_by(self, assignment: dict[str, str]) -> bool:
        return assignment.get(self.parent) in self.labels


@dataclass(frozen=True)
class Decision:
    name: str
    options: tuple[OptionSpec, ...]
    decision_type: str = "U"
    function: str = "statistical"
    active_when: Guard | None = None

    def option_labels(self) -> list[str]:
        return [o.label for o in self.options]


@dataclass(frozen=True)
class Constraint:
    """Conjunction of (decision, allowed-label-set) literals.

    ``forbid``: an assignment matching every clause is excluded.
    ``require``: an assignment must satisfy every clause to survive; a clause
    on an inactive decision cannot be satisfied.
    """

    kind: str
    clauses: tuple[tuple[str, frozenset[str]], ...]

    def matches(self, assignment: dict[str, str]) -> bool:
        return all(assignment.get(d) in labels for d, labels in self.clauses)

    def allows(self, assignment: dict[str, str]) -> bool:
        if self.kind == "forbid":
            return not self.matches(assignment)
        return self.matches(assignment)


@dataclass(frozen=True)
class DecisionSpace:
    decisions: tuple[Decision, ...]
    constraints: tuple[Constraint, ...] = ()
    estimand_key: str | None = None
    # Assignments fixed by partition_by_estimand; merged into every universe.
    fixed: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ValidatedSpace:
    """A DecisionSpace that passed validation, plus the guard evaluation order.

    ``evaluation_order`` indexes ``space.decisions`` topologically with respect
    to guards (parents before children), stable w.r.t. declaration order.
    Canonical universe ids are always assigned in declaration order.
    """

    space: DecisionSpace
    evaluation_order: tuple[int, ...]

    @property
    def decisions(self) -> tuple[Decision, ...]:
        return self.space.decisions

    @property
    def constraints(self) -> tuple[Constraint, ...]:
        return self.space.constraints

    @property
    def estimand_key(self) -> str | None:
        return self.space.estimand_key


@dataclass(frozen=True)
class Universe:
    """One concrete assignment of an option label to every active decision."""

    id: int
    assignment: tuple[tuple[str, str], ...]

    def as_dict(self) -> dict[str, str]:
        return dict(self.assignment)


def validate_space(space: DecisionSpace) -> ValidatedSpace:
    """Check structural invariants and compute the guard evaluation order.

    Every violation is collected; the error carries the full list, not only
    the first one found.
    """
    violations: list[str] = []
    fixed_names = {name for name, _ in space.fixed}
    by_name = {}
    for d in space.decisions:
        if d.name in by_name:
            violations.append(f"duplicate decision name: {d.name!r}")
        if d.name in fixed_names:
            violations.append(f"decision {d.name!r} is also in the fixed assignment")
        by_name[d.name] = d

    for d in space.decisions:
        if len(d.options) < 1:
            violations.append(f"decision {d.name!r} has no options")
        labels = d.option_labels()
        for label in sorted({l for l in labels if labels.count(l) > 1}):
            violations.append(f"decision {d.name!r} has duplicate option label {label!r}")
        n_original = sum(1 for o in d.options if o.is_original)
        if n_original > 1:
            violations.append(f"decision {d.name!r} marks {n_original} options as original")
        if d.decision_type not in DECISION_TYPES:
            violations.append(f"decision {d.name!r} has unknown type {d.decision_type!r}")
        if d.function not in DECISION_FUNCTIONS:
            violations.append(f"decision {d.name!r} has unknown function {d.function!r}")
        if d.active_when is not None:
            g = d.active_when
            if g.parent not in by_name and g.parent not in fixed_names:
                violations.append(f"guard of {d.name!r} references unknown decision {g.parent!r}")
            elif g.parent == d.name:
                violations.append(f"guard of {d.name!r} references itself")
            elif g.parent in by_name:
                unknown = g.labels - set(by_name[g.parent].option_labels())
                for label in sorted(unknown):
                    violations.append(
                        f"guard of {d.name!r} references unknown label {label!r} of {g.parent!r}"
                    )
            if not g.labels:
                violations.append(f"guard of {d.name!r} has an empty label set")

    for i, c in enumerate(space.constraints):
        if c.kind not in CONSTRAINT_KINDS:
            violations.append(f"constraint #{i} has unknown kind {c.kind!r}")
        if not c.clauses:
            violations.append(f"constraint #{i} has no clauses")
        for dname, labels in c.clauses:
            if dname not in by_name:
                if dname not in fixed_names:
                    violations.append(f"constraint #{i} references unknown decision {dname!r}")
                continue  # labels of fixed decisions are no longer checkable
            unknown = labels - set(by_name[dname].option_labels())
            for label in sorted(unknown):
                violations.append(
                    f"constraint #{i} references unknown label {label!r} of {dname!r}"
                )

    if space.estimand_key is not None:
        target = by_name.get(space.estimand_key)
        if target is None:
            violations.append(f"estimand_key names unknown decision {space.estimand_key!r}")
        elif target.decision_type != "N":
            violations.append(
                f"estimand_key decision {space.estimand_key!r} has type "
                f"{target.decision_type!r}, expected N"
            )

    order, cycle = _topological_order(space.decisions)
    if cycle:
        violations.append("guard cycle: " + " -> ".join(cycle))

    if violations:
        raise SpaceValidationError(violations)
    assert order is not None
    return ValidatedSpace(space=space, evaluation_order=tuple(order))


def _topological_order(decisions):
    """Stable topological order of decision indices w.r.t. guard edges.

    Returns (order, None) or (None, cycle_path) when guards form a cycle.
    Unknown guard parents are ignored here; they are reported separately.
    """
    index = {d.name: i for i, d in enumerate(decisions)}
    children: dict[int, list[int]] = {i: [] for i in range(len(decisions))}
    indegree = [0] * len(decisions)
    for i, d in enumerate(decisions):
        if d.active_when is not None and d.active_when.parent in index:
            p = index[d.active_when.parent]
            if p != i:
                children[p].append(i)
                indegree[i] += 1

    ready = [i for i in range(len(decisions)) if indegree[i] == 0]
    order: list[int] = []
    while ready:
        ready.sort()
        i = ready.pop(0)
        order.append(i)
        for c in children[i]:
            indegree[c] -= 1
            if indegree[c] == 0:
                ready.append(c)
    if len(order) == len(decisions):
        return order, None
    # Reconstruct one cycle for the error message.
    stuck = [i for i in range(len(decisions)) if indegree[i] > 0]
    start = stuck[0]
    path = [start]
    seen = {start}
    cur = start
    while True:
        parent = index[decisions[cur].active_when.parent]
        path.append(parent)
        if parent in seen:
            break
        seen.add(parent)
        cur = parent
    return None, [decisions[i].name for i in reversed(path)]


def enumerate_universes(validated: ValidatedSpace) -> list[Universe]:
    """Produce the canonical universe list.

    Guards are evaluated in topological order; a decision whose guard is not
    satisfied is absent from the assignment. Assignments violating any of the
    space's constraints are excluded. Ids are dense 0..n-1 over the canonical
    sort: declaration-order option indices, inactive decisions sorting first.
    """
    space = validated.space
    decisions = space.decisions
    fixed = dict(space.fixed)

    assignments: list[dict[str, str]] = []

    def recurse(pos: int, current: dict[str, str]) -> None:
        if pos == len(validated.evaluation_order):
            merged = dict(fixed)
            merged.update(current)
            if all(c.allows(merged) for c in space.constraints):
                assignments.append(merged)
            return
        d = decisions[validated.evaluation_order[pos]]
        if d.active_when is not None and not d.active_when.satisfied_by({**fixed, **current}):
            recurse(pos + 1, current)
            return
        for opt in d.options:
            current[d.name] = opt.label
            recurse(pos + 1, current)
        del current[d.name]

    recurse(0, {})

    option_index = {
        d.name: {o.label: j for j, o in enumerate(d.options)} for d in decisions
    }
    decl_names = [d.name for d in decisions]

    def canonical_key(assignment: dict[str, str]) -> tuple[int, ...]:
        return tuple(
            option_index[n][assignment[n]] if n in assignment else -1 for n in decl_names
        )

    assignments.sort(key=canonical_key)
    ordered_names = decl_names + sorted(set(fixed) - set(decl_names))
    return [
        Universe(id=i, assignment=tuple((n, a[n]) for n in ordered_names if n in a))
        for i, a in enumerate(assignments)
    ]


def prune(universes: list[Universe], constraints: list[Constraint]) -> list[Universe]:
    """Keep universes satisfying the extra constraints; ids and order preserved."""
    return [u for u in universes if all(c.allows(u.as_dict()) for c in constraints)]


def sample_universes(universes: list[Universe], k: int, seed: int) -> list[Universe]:
    """Uniform sample of k universes without replacement, sorted by id.

    Deterministic given seed: PCG64 drives a partial Fisher-Yates shuffle over
    positions, so samples replicate across platforms for a fixed numpy stream.
    """
    n = len(universes)
    if k < 0:
        raise SampleSizeError(f"sample size must be non-negative, got {k}")
    if k > n:
        raise SampleSizeError(f"sample size {k} exceeds population {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pos = list(range(n))
    for i in range(k):
        j = i + int(rng.integers(n - i))
        pos[i], pos[j] = pos[j], pos[i]
    picked = sorted(pos[:k])
    return [universes[i] for i in picked]


def partition_by_estimand(validated: ValidatedSpace) -> list[tuple[str, DecisionSpace]]:
    """Split the space into one sub-space per option of the estimand decision.

    The estimand decision is removed from the free decisions and recorded in
    ``fixed``, so sub-space universes still carry its label. Guards and
    constraints referencing it are reduced under the fixed label.
    """
    space = validated.space
    if space.estimand_key is None:
        raise ConfigurationError("estimand_key is not set on this space")
    estimand = next(d for d in space.decisions if d.name == space.estimand_key)

    parts: list[tuple[str, DecisionSpace]] = []
    for opt in estimand.options:
        decisions: list[Decision] = []
        for d in space.decisions:
            if d.name == estimand.name:
                continue
            if d.active_when is not None and d.active_when.parent == estimand.name:
                if opt.label in d.active_when.labels:
                    d = Decision(
                        name=d.name,
                        options=d.options,
                        decision_type=d.decision_type,
                        function=d.function,
                        active_when=None,
                    )
                else:
                    continue  # can never activate under this fixed label
            decisions.append(d)

        constraints: list[Constraint] = []
        for c in space.constraints:
            reduced = []
            dropped = False
            for dname, labels in c.clauses:
                if dname != estimand.name:
                    reduced.append((dname, labels))
                    continue
                if opt.label in labels:
                    pass  # clause always true here
                elif c.kind == "forbid":
                    dropped = True  # conjunction can never match
                    break
                else:
                    # unsatisfiable require: keep as an impossible clause
                    reduced.append((dname, labels))
            if dropped:
                continue
            if reduced or c.kind == "forbid":
                if reduced:
                    constraints.append(Constraint(kind=c.kind, clauses=tuple(reduced)))
                # a forbid whose clauses all reduced to true would exclude
                # everything; that cannot happen for a single-option fix of a
                # multi-clause constraint unless the constraint only named the
                # estimand decision, in which case it must be kept:
                elif c.kind == "forbid":
                    constraints.append(
                        Constraint(kind=c.kind, clauses=((estimand.name, frozenset({opt.label})),))
                    )

        parts.append(
            (
                opt.label,
                DecisionSpace(
                    decisions=tuple(decisions),
                    constraints=tuple(constraints),
                    estimand_key=None,
                    fixed=space.fixed + ((estimand.name, opt.label),),
                ),
            )
        )
    return parts
