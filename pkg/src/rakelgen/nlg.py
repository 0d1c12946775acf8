"""Turning selected templates into feedback text.

A predicted label vector may set several templates for the same factor; a
summary keeps at most one per factor (highest vote, ties broken by reference
type: trend, then weeks, then average, then the fallback). Kept templates are
rendered in factor code order, with slots filled from the student's series.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import (
    FactorId,
    LabelVector,
    ReferenceType,
    StudentRecord,
    Template,
    TemplateRegistry,
    labelset_to_vector,
)
from .errors import ValidationError
from .features import DEFAULT_TREND_TOLERANCE, extract_features, ols_slope, trend_word
from .mlc import TrainedModel, predict_votes

REFERENCE_PRIORITY = {
    ReferenceType.TREND: 0,
    ReferenceType.WEEKS: 1,
    ReferenceType.AVERAGE: 2,
    ReferenceType.OTHER: 3,
}

DROP_REASON_CONFLICT = "factor-conflict"


@dataclass(frozen=True)
class SelectionResult:
    """Templates kept for rendering (with their vote strength) and templates
    dropped with a reason, both in factor code order."""

    chosen: tuple[tuple[Template, float], ...]
    dropped: tuple[tuple[Template, str], ...]


@dataclass(frozen=True)
class Summary:
    student_id: str
    sentences: tuple[str, ...]
    template_ids: tuple[int, ...]


def select_templates(
    prediction: LabelVector,
    registry: TemplateRegistry,
    votes: tuple[float, ...] | None = None,
) -> SelectionResult:
    """Resolve per-factor conflicts among the predicted templates.

    Without explicit votes every set bit counts 1.0, so ties fall to the
    reference-type priority.
    """
    if len(prediction) != len(registry):
        raise ValidationError(
            f"prediction length {len(prediction)} != registry size {len(registry)}"
        )
    if votes is None:
        votes = tuple(float(b) for b in prediction.bits)
    elif len(votes) != len(registry):
        raise ValidationError(
            f"votes length {len(votes)} != registry size {len(registry)}"
        )
    by_factor: dict[FactorId, list[tuple[Template, float]]] = {}
    for index, bit in enumerate(prediction.bits):
        if not bit:
            continue
        template = registry.template_at(index)
        by_factor.setdefault(template.factor, []).append((template, votes[index]))
    chosen = []
    dropped = []
    for factor in FactorId:
        candidates = by_factor.get(factor)
        if not candidates:
            continue
        winner = min(
            candidates,
            key=lambda pair: (-pair[1], REFERENCE_PRIORITY[pair[0].reference]),
        )
        chosen.append(winner)
        for template, _ in candidates:
            if template is not winner[0]:
                dropped.append((template, DROP_REASON_CONFLICT))
    return SelectionResult(chosen=tuple(chosen), dropped=tuple(dropped))


def format_number(value: float) -> str:
    """Slot numbers render with one decimal place (round-half-even)."""
    return f"{value:.1f}"


def _slot_values(
    series: tuple[float, ...], tolerance: float
) -> dict[str, str]:
    mean = sum(series) / len(series)
    return {
        "average": format_number(mean),
        "trend_word": trend_word(ols_slope(series), tolerance),
        "first_week_value": format_number(series[0]),
        "last_week_value": format_number(series[-1]),
        "per_week_list": ", ".join(format_number(v) for v in series),
    }


def render_summary(
    selection: SelectionResult,
    record: StudentRecord,
    trend_tolerance: float = DEFAULT_TREND_TOLERANCE,
) -> Summary:
    """Fill each chosen template's slots from the record's series."""
    sentences = []
    template_ids = []
    for template, _ in selection.chosen:
        values = _slot_values(record.series[template.factor], trend_tolerance)
        sentences.append(template.surface_text.format(**values))
        template_ids.append(template.id)
    return Summary(
        student_id=record.student_id,
        sentences=tuple(sentences),
        template_ids=tuple(template_ids),
    )


def feedback_for_record(
    model: TrainedModel,
    record: StudentRecord,
    registry: TemplateRegistry,
    trend_tolerance: float = DEFAULT_TREND_TOLERANCE,
) -> Summary:
    """Predict, resolve conflicts, render: one summary for one student."""
    x = extract_features(record, model.feature_mode)
    gold = None
    if model.strategy == "chain-real":
        if record.expert_labels is None:
            raise ValidationError(
                f"record {record.student_id}: chain-real prediction needs expert labels"
            )
        gold = labelset_to_vector(record.expert_labels, registry)
    prediction, votes = predict_votes(model, x, gold)
    selection = select_templates(prediction, registry, votes)
    return render_summary(selection, record, trend_tolerance)


def render_text(summary: Summary) -> str:
    """Student id header plus one indented sentence per line."""
    lines = [f"{summary.student_id}:"]
    if summary.sentences:
        lines.extend(f"  {sentence}" for sentence in summary.sentences)
    else:
        lines.append("  (no feedback selected)")
    return "\n".join(lines)


def summary_to_json(summary: Summary) -> dict:
    return {
        "student_id": summary.student_id,
        "feedback": [
            {"template_id": tid, "sentence": sentence}
            for tid, sentence in zip(summary.template_ids, summary.sentences)
        ],
    }
