"""Load and parse decision-space documents (strict JSON, schema-checked).

The document is the single external input driving a whole analysis: decisions
and options (with runner payloads), constraints, an optional estimand split,
the original study's reference effect, run configuration, and filter rules.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import SpaceValidationError
from .space import Constraint, Decision, DecisionSpace, Guard, OptionSpec


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name!r} is not valid strict JSON")


def load_document(path: str | Path) -> dict:
    """Read a UTF-8 strict-JSON document; NaN/Infinity are rejected."""
    text = Path(path).read_text(encoding="utf-8")
    return json.loads(text, parse_constant=_reject_constant)


def document_schema() -> dict:
    with resources.files("specverse.schema").joinpath("decision_space.schema.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


def check_schema(doc: dict) -> list[str]:
    """Return all schema violations (empty when the document conforms)."""
    validator = jsonschema.Draft202012Validator(document_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    out = []
    for err in errors:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def parse_space(doc: dict) -> DecisionSpace:
    """Build a DecisionSpace from a schema-conforming document.

    Raises SpaceValidationError carrying every schema violation; semantic
    violations (cycles, dangling references) are left to validate_space.
    """
    schema_errors = check_schema(doc)
    if schema_errors:
        raise SpaceValidationError(schema_errors)

    decisions = []
    for d in doc["decisions"]:
        options = []
        for o in d["options"]:
            if isinstance(o, str):
                options.append(OptionSpec(label=o))
            else:
                options.append(
                    OptionSpec(
                        label=o["label"],
                        payload=o.get("payload", {}),
                        is_original=o.get("original", False),
                    )
                )
        guard = None
        if "active_when" in d:
            guard = Guard(
                parent=d["active_when"]["decision"],
                labels=frozenset(d["active_when"]["options"]),
            )
        decisions.append(
            Decision(
                name=d["name"],
                options=tuple(options),
                decision_type=d.get("type", "U"),
                function=d.get("function", "statistical"),
                active_when=guard,
            )
        )

    constraints = tuple(
        Constraint(
            kind=c["kind"],
            clauses=tuple(
                (clause["decision"], frozenset(clause["options"])) for clause in c["when"]
            ),
        )
        for c in doc.get("constraints", [])
    )

    return DecisionSpace(
        decisions=tuple(decisions),
        constraints=constraints,
        estimand_key=doc.get("estimand_key"),
    )
