"""Specification-curve data and rendering.

Panel A: effect estimates sorted ascending (ties by universe id) with
interval bars, class colors, and orange truncation arrows where a bound
leaves the display range. Panel B: one row per (decision, option) with a
tick at every slot where that option is active. Failed universes occupy a
trailing slot block marked with black stars instead of curve points. With
stratification, sorting happens within strata and strata are ordered
descending by their key.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

from .errors import ConsistencyError
from .orchestrator import UniverseOutcome
from .robustness import CLASS_FAILED, classify_outcome, stratify
from .space import ValidatedSpace, enumerate_universes

DEFAULT_COLORS = {
    "same_direction_excludes_zero": "#1b9e77",
    "opposite_direction_excludes_zero": "#7570b3",
    "overlaps_zero": "#e7298a",
    "failed": "#000000",
}
TRUNCATION_COLOR = "#e66101"


@dataclass(frozen=True)
class RenderOptions:
    display_min: float = -1.0
    display_max: float = 1.0
    width: int = 960
    height: int = 720
    colors: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_COLORS))
    show_strata: bool = True
    sort_descending: bool = False

    def __post_init__(self):
        if not self.display_min < self.display_max:
            raise ConsistencyError("display range must satisfy min < max")


@dataclass(frozen=True)
class CurvePoint:
    universe_id: int
    estimate: float
    lower: float | None
    upper: float | None
    level: float | None
    classification: str
    rank: int
    truncated_low: bool
    truncated_high: bool
    stratum: str | None


@dataclass(frozen=True)
class CurveData:
    points: tuple[CurvePoint, ...]
    decisions: tuple[tuple[str, tuple[str, ...]], ...]  # (name, labels) rows for panel B
    memberships: dict[tuple[str, str], tuple[int, ...]]  # (decision, label) -> slots
    failure_marks: tuple[tuple[int, int], ...]  # (slot, universe_id)
    strata_order: tuple[str, ...] | None
    n_slots: int


def build_curve(
    outcomes: list[UniverseOutcome],
    space: ValidatedSpace,
    options: RenderOptions | None = None,
    stratify_by: str | None = None,
    reference_direction: str = "positive",
) -> CurveData:
    """Assemble sorted curve points and the decision-membership matrix."""
    options = options or RenderOptions()
    known = {u.id: u.as_dict() for u in enumerate_universes(space)}
    for outcome in outcomes:
        if outcome.universe_id not in known:
            raise ConsistencyError(f"universe {outcome.universe_id} is not in this space")
        if known[outcome.universe_id] != outcome.assignment:
            raise ConsistencyError(
                f"universe {outcome.universe_id} assignment does not match the space"
            )

    stratum_of: dict[int, str] = {}
    strata_order: tuple[str, ...] | None = None
    if stratify_by is not None:
        strata = stratify(outcomes, stratify_by)
        strata_order = tuple(str(k) for k in strata)
        for label, members in strata.items():
            for outcome in members:
                stratum_of[outcome.universe_id] = str(label)

    ok = [o for o in outcomes if not o.failed]
    failed = sorted((o for o in outcomes if o.failed), key=lambda o: o.universe_id)

    def sort_key(outcome):
        stratum_pos = (
            strata_order.index(stratum_of[outcome.universe_id]) if strata_order else 0
        )
        estimate = outcome.pooled.estimate
        if options.sort_descending:
            estimate = -estimate
        return (stratum_pos, estimate, outcome.universe_id)

    ok.sort(key=sort_key)

    points = []
    for rank, outcome in enumerate(ok):
        pooled = outcome.pooled
        lower, upper = pooled.interval_lower, pooled.interval_upper
        points.append(
            CurvePoint(
                universe_id=outcome.universe_id,
                estimate=pooled.estimate,
                lower=lower,
                upper=upper,
                level=pooled.interval_level,
                classification=classify_outcome(outcome, reference_direction),
                rank=rank,
                truncated_low=lower is not None and lower < options.display_min,
                truncated_high=upper is not None and upper > options.display_max,
                stratum=stratum_of.get(outcome.universe_id),
            )
        )

    failure_marks = tuple(
        (len(points) + i, outcome.universe_id) for i, outcome in enumerate(failed)
    )

    slot_of = {p.universe_id: p.rank for p in points}
    slot_of.update({uid: slot for slot, uid in failure_marks})
    member_slots: dict[tuple[str, str], list[int]] = {}
    for outcome in outcomes:
        for name, label in outcome.assignment.items():
            member_slots.setdefault((name, label), []).append(slot_of[outcome.universe_id])

    decisions = []
    for decision in space.decisions:
        labels = [o.label for o in decision.options if (decision.name, o.label) in member_slots]
        if labels:
            decisions.append((decision.name, tuple(labels)))

    return CurveData(
        points=tuple(points),
        decisions=tuple(decisions),
        memberships={k: tuple(sorted(v)) for k, v in member_slots.items()},
        failure_marks=failure_marks,
        strata_order=strata_order,
        n_slots=len(points) + len(failure_marks),
    )


_FIXED_COLUMNS = [
    "rank", "universe_id", "estimate", "lower", "upper", "level",
    "class", "stratum", "truncated_low", "truncated_high",
]


def export_table(curve: CurveData) -> str:
    """Flat CSV, one row per universe: the fixed columns, then one column
    per decision holding the active option label (empty when inactive)."""
    decision_names = [name for name, _ in curve.decisions]
    label_at: dict[tuple[int, str], str] = {}
    for (name, label), slots in curve.memberships.items():
        for slot in slots:
            label_at[(slot, name)] = label

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_FIXED_COLUMNS + decision_names)

    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        return repr(value) if isinstance(value, float) else str(value)

    for p in curve.points:
        row = [p.rank, p.universe_id, fmt(p.estimate), fmt(p.lower), fmt(p.upper),
               fmt(p.level), p.classification, p.stratum or "",
               fmt(p.truncated_low), fmt(p.truncated_high)]
        writer.writerow(row + [label_at.get((p.rank, n), "") for n in decision_names])
    for slot, uid in curve.failure_marks:
        row = [slot, uid, "", "", "", "", CLASS_FAILED, "", "", ""]
        writer.writerow(row + [label_at.get((slot, n), "") for n in decision_names])
    return buf.getvalue()


def parse_table(text: str) -> CurveData:
    """Inverse of export_table on the data fields.

    Option labels within a decision come back in first-seen slot order, not
    declaration order; everything else round-trips exactly.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    decision_names = header[len(_FIXED_COLUMNS):]

    points = []
    failure_marks = []
    memberships: dict[tuple[str, str], list[int]] = {}
    labels_seen: dict[str, list[str]] = {name: [] for name in decision_names}
    strata_seen: list[str] = []

    for row in reader:
        fixed, labels = row[: len(_FIXED_COLUMNS)], row[len(_FIXED_COLUMNS):]
        slot = int(fixed[0])
        uid = int(fixed[1])
        for name, label in zip(decision_names, labels):
            if label:
                memberships.setdefault((name, label), []).append(slot)
                if label not in labels_seen[name]:
                    labels_seen[name].append(label)
        if fixed[6] == CLASS_FAILED:
            failure_marks.append((slot, uid))
            continue
        stratum = fixed[7] or None
        if stratum is not None and stratum not in strata_seen:
            strata_seen.append(stratum)
        points.append(
            CurvePoint(
                universe_id=uid,
                estimate=float(fixed[2]),
                lower=float(fixed[3]) if fixed[3] else None,
                upper=float(fixed[4]) if fixed[4] else None,
                level=float(fixed[5]) if fixed[5] else None,
                classification=fixed[6],
                rank=slot,
                truncated_low=fixed[8] == "true",
                truncated_high=fixed[9] == "true",
                stratum=stratum,
            )
        )

    decisions = tuple(
        (name, tuple(labels_seen[name])) for name in decision_names if labels_seen[name]
    )
    return CurveData(
        points=tuple(points),
        decisions=decisions,
        memberships={k: tuple(sorted(v)) for k, v in memberships.items()},
        failure_marks=tuple(failure_marks),
        strata_order=tuple(strata_seen) if strata_seen else None,
        n_slots=len(points) + len(failure_marks),
    )


def _f(value: float) -> str:
    return f"{value:.2f}"


def _star_path(cx: float, cy: float, r: float) -> str:
    # 5-point star, fixed offsets so output is deterministic
    import math

    parts = []
    for i in range(10):
        radius = r if i % 2 == 0 else r * 0.45
        angle = -math.pi / 2 + i * math.pi / 5
        x = cx + radius * math.cos(angle)
        y = cy + radius * math.sin(angle)
        parts.append(f"{'M' if i == 0 else 'L'}{_f(x)},{_f(y)}")
    return "".join(parts) + "Z"


def render_svg(curve: CurveData, options: RenderOptions | None = None) -> str:
    """Deterministic standalone SVG: identical inputs, identical bytes."""
    options = options or RenderOptions()
    width, height = options.width, options.height
    margin_left, margin_right, margin_top = 180, 20, 40
    panel_gap = 30
    panel_a_h = int((height - margin_top - panel_gap - 20) * 0.45)
    panel_b_y = margin_top + panel_a_h + panel_gap
    panel_b_h = height - panel_b_y - 20
    content_w = width - margin_left - margin_right

    n_slots = max(curve.n_slots, 1)
    slot_w = content_w / n_slots

    lo, hi = options.display_min, options.display_max

    def x_of(slot: int) -> float:
        return margin_left + slot * slot_w + slot_w / 2.0

    def y_of(value: float) -> float:
        clipped = min(max(value, lo), hi)
        frac = (clipped - lo) / (hi - lo)
        return margin_top + panel_a_h * (1.0 - frac)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{margin_left}" y="{margin_top - 24}" font-family="sans-serif" '
        f'font-size="13" fill="#333333">Panel A: estimates with intervals</text>',
    ]

    # panel A frame, axis ticks, zero line
    out.append(
        f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" '
        f'y2="{margin_top + panel_a_h}" stroke="#333333" stroke-width="1"/>'
    )
    for i in range(5):
        value = lo + (hi - lo) * i / 4.0
        y = y_of(value)
        out.append(
            f'<line x1="{margin_left - 4}" y1="{_f(y)}" x2="{margin_left}" y2="{_f(y)}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{margin_left - 8}" y="{_f(y + 4)}" font-family="sans-serif" '
            f'font-size="10" fill="#333333" text-anchor="end">{value:.4g}</text>'
        )
    if lo < 0.0 < hi:
        zero_y = y_of(0.0)
        out.append(
            f'<line x1="{margin_left}" y1="{_f(zero_y)}" x2="{width - margin_right}" '
            f'y2="{_f(zero_y)}" stroke="#bbbbbb" stroke-width="1" stroke-dasharray="4,3"/>'
        )

    # stratum separators and headers
    if options.show_strata and curve.strata_order:
        boundaries = []
        previous = None
        for p in curve.points:
            if p.stratum != previous:
                boundaries.append((p.rank, p.stratum))
                previous = p.stratum
        for slot, label in boundaries:
            x = margin_left + slot * slot_w
            out.append(
                f'<line x1="{_f(x)}" y1="{margin_top - 14}" x2="{_f(x)}" '
                f'y2="{height - 20}" stroke="#dddddd" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{_f(x + 3)}" y="{margin_top - 4}" font-family="sans-serif" '
                f'font-size="11" fill="#555555">{label}</text>'
            )

    # failure block separator
    if curve.failure_marks:
        x = margin_left + curve.failure_marks[0][0] * slot_w
        out.append(
            f'<line x1="{_f(x)}" y1="{margin_top - 14}" x2="{_f(x)}" y2="{height - 20}" '
            f'stroke="#999999" stroke-width="1" stroke-dasharray="2,2"/>'
        )
        out.append(
            f'<text x="{_f(x + 3)}" y="{margin_top - 4}" font-family="sans-serif" '
            f'font-size="11" fill="#000000">failed</text>'
        )

    # points
    for p in curve.points:
        x = x_of(p.rank)
        color = options.colors.get(p.classification, "#666666")
        if p.lower is not None and p.upper is not None:
            out.append(
                f'<line x1="{_f(x)}" y1="{_f(y_of(p.lower))}" x2="{_f(x)}" '
                f'y2="{_f(y_of(p.upper))}" stroke="{color}" stroke-width="1.2"/>'
            )
        out.append(
            f'<circle cx="{_f(x)}" cy="{_f(y_of(p.estimate))}" r="2.2" fill="{color}"/>'
        )
        arrow = max(3.0, min(6.0, slot_w * 0.8))
        if p.truncated_high:
            y = margin_top
            out.append(
                f'<path d="M{_f(x - arrow / 2)},{_f(y + arrow)} L{_f(x)},{_f(y)} '
                f'L{_f(x + arrow / 2)},{_f(y + arrow)}Z" fill="{TRUNCATION_COLOR}"/>'
            )
        if p.truncated_low:
            y = margin_top + panel_a_h
            out.append(
                f'<path d="M{_f(x - arrow / 2)},{_f(y - arrow)} L{_f(x)},{_f(y)} '
                f'L{_f(x + arrow / 2)},{_f(y - arrow)}Z" fill="{TRUNCATION_COLOR}"/>'
            )

    # panel B rows
    out.append(
        f'<text x="{margin_left}" y="{panel_b_y - 8}" font-family="sans-serif" '
        f'font-size="13" fill="#333333">Panel B: decision memberships</text>'
    )
    n_rows = sum(len(labels) for _, labels in curve.decisions)
    n_gaps = max(len(curve.decisions) - 1, 0)
    row_h = (panel_b_h - 6 * n_gaps) / max(n_rows, 1)
    failed_slots = {slot for slot, _ in curve.failure_marks}

    y = panel_b_y
    for name, labels in curve.decisions:
        for label in labels:
            cy = y + row_h / 2.0
            out.append(
                f'<text x="{margin_left - 8}" y="{_f(cy + 3)}" font-family="sans-serif" '
                f'font-size="9" fill="#333333" text-anchor="end">{name}: {label}</text>'
            )
            for slot in curve.memberships.get((name, label), ()):
                x = x_of(slot)
                if slot in failed_slots:
                    out.append(
                        f'<path d="{_star_path(x, cy, min(row_h * 0.42, 4.5))}" '
                        f'fill="#000000"/>'
                    )
                else:
                    tick_w = max(slot_w * 0.7, 1.0)
                    out.append(
                        f'<rect x="{_f(x - tick_w / 2)}" y="{_f(cy - row_h * 0.32)}" '
                        f'width="{_f(tick_w)}" height="{_f(row_h * 0.64)}" fill="#444444"/>'
                    )
            y += row_h
        y += 6  # gap between decisions

    out.append("</svg>")
    return "\n".join(out) + "\n"


def strip_render_fields(curve: CurveData) -> CurveData:
    """Normalization used by round-trip tests: label order within a decision
    is a render concern, so it is canonicalized to first-seen slot order."""
    first_slot = {
        key: slots[0] if slots else -1 for key, slots in curve.memberships.items()
    }
    decisions = tuple(
        (name, tuple(sorted(labels, key=lambda l: first_slot[(name, l)])))
        for name, labels in curve.decisions
    )
    return replace(curve, decisions=decisions)
