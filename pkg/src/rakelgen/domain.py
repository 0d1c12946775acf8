"""Task vocabulary: learning factors, reference types, templates, records and label vectors.

All types here are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path

from .errors import ValidationError

#: Slot names a template surface text may reference.
SLOT_NAMES = frozenset(
    {"average", "trend_word", "first_week_value", "last_week_value", "per_week_list"}
)

_SLOT_RE = re.compile(r"\{([^{}]*)\}")


class FactorId(IntEnum):
    """The nine weekly learning factors, with stable codes 1..9."""

    MARKS = 1
    HOURS_STUDIED = 2
    UNDERSTANDABILITY = 3
    DIFFICULTY = 4
    DEADLINES = 5
    HEALTH_ISSUES = 6
    PERSONAL_ISSUES = 7
    LECTURES_ATTENDED = 8
    REVISION = 9

    @property
    def key(self) -> str:
        """Lowercase name used in JSON files."""
        return self.name.lower()

    @classmethod
    def from_key(cls, key: str) -> "FactorId":
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValidationError(f"unknown factor name: {key!r}") from None


class ReferenceType(Enum):
    """The four ways a factor can be described in feedback."""

    TREND = "trend"
    WEEKS = "weeks"
    AVERAGE = "average"
    OTHER = "other"

    @classmethod
    def from_key(cls, key: str) -> "ReferenceType":
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"unknown reference type: {key!r}") from None


@dataclass(frozen=True)
class FactorUnits:
    """Value range of a factor's weekly measurements."""

    lo: float
    hi: float | None
    integer: bool


#: Native units per factor: marks are percentages, the five self-reported
#: factors are 1..5 Likert scores, attendance and revision are weekly counts.
FACTOR_UNITS: dict[FactorId, FactorUnits] = {
    FactorId.MARKS: FactorUnits(0.0, 100.0, False),
    FactorId.HOURS_STUDIED: FactorUnits(0.0, None, False),
    FactorId.UNDERSTANDABILITY: FactorUnits(1.0, 5.0, True),
    FactorId.DIFFICULTY: FactorUnits(1.0, 5.0, True),
    FactorId.DEADLINES: FactorUnits(1.0, 5.0, True),
    FactorId.HEALTH_ISSUES: FactorUnits(1.0, 5.0, True),
    FactorId.PERSONAL_ISSUES: FactorUnits(1.0, 5.0, True),
    FactorId.LECTURES_ATTENDED: FactorUnits(0.0, None, True),
    FactorId.REVISION: FactorUnits(0.0, None, True),
}


@dataclass(frozen=True)
class Template:
    """One selectable unit of feedback content.

    The surface text may contain named slots (e.g. ``{average}``) that are
    filled from the student's statistics at rendering time.
    """

    id: int
    factor: FactorId
    reference: ReferenceType
    surface_text: str

    def __post_init__(self):
        for slot in self.slots():
            if slot not in SLOT_NAMES:
                raise ValidationError(
                    f"template {self.id}: unknown slot {{{slot}}} in surface text"
                )

    def slots(self) -> tuple[str, ...]:
        return tuple(_SLOT_RE.findall(self.surface_text))


@dataclass(frozen=True)
class TemplateRegistry:
    """Ordered collection of templates; a template's label index is its position."""

    templates: tuple[Template, ...]
    version: str = "custom"
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)
    _index_of: dict = field(default_factory=dict, repr=False, compare=False)
    _by_pair: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.templates:
            raise ValidationError("registry must contain at least one template")
        for position, template in enumerate(self.templates):
            if template.id in self._by_id:
                raise ValidationError(f"duplicate template id {template.id}")
            pair = (template.factor, template.reference)
            if pair in self._by_pair:
                raise ValidationError(
                    f"duplicate (factor, reference) pair "
                    f"({template.factor.key}, {template.reference.value}) "
                    f"in templates {self._by_pair[pair].id} and {template.id}"
                )
            self._by_id[template.id] = template
            self._index_of[template.id] = position
            self._by_pair[pair] = template

    def __len__(self) -> int:
        return len(self.templates)

    def ids(self) -> tuple[int, ...]:
        return tuple(t.id for t in self.templates)

    def get(self, template_id: int) -> Template:
        try:
            return self._by_id[template_id]
        except KeyError:
            raise ValidationError(f"unknown template id {template_id}") from None

    def label_index(self, template_id: int) -> int:
        try:
            return self._index_of[template_id]
        except KeyError:
            raise ValidationError(f"unknown template id {template_id}") from None

    def template_at(self, label_index: int) -> Template:
        return self.templates[label_index]

    def find(self, factor: FactorId, reference: ReferenceType) -> Template | None:
        return self._by_pair.get((factor, reference))


@dataclass(frozen=True)
class StudentRecord:
    """One student's weekly time-series over all nine factors.

    ``expert_labels`` holds the template ids an annotator chose for this
    student, or ``None`` for unlabeled records.
    """

    student_id: str
    weeks: int
    series: dict[FactorId, tuple[float, ...]]
    expert_labels: frozenset[int] | None = None

    def __post_init__(self):
        if self.weeks < 1:
            raise ValidationError(f"record {self.student_id}: weeks must be >= 1")
        missing = set(FactorId) - set(self.series)
        if missing:
            names = ", ".join(sorted(f.key for f in missing))
            raise ValidationError(f"record {self.student_id}: missing factors: {names}")
        extra = set(self.series) - set(FactorId)
        if extra:
            raise ValidationError(f"record {self.student_id}: unknown series keys: {extra}")
        normalized = {}
        for factor, values in self.series.items():
            values = tuple(float(v) for v in values)
            if len(values) != self.weeks:
                raise ValidationError(
                    f"record {self.student_id}: series {factor.key} has "
                    f"{len(values)} values, expected {self.weeks}"
                )
            normalized[factor] = values
        object.__setattr__(self, "series", normalized)
        if self.expert_labels is not None:
            object.__setattr__(self, "expert_labels", frozenset(int(i) for i in self.expert_labels))

    @property
    def labeled(self) -> bool:
        return self.expert_labels is not None


@dataclass(frozen=True)
class LabelVector:
    """Fixed-length binary decision vector, one bit per registry template."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValidationError("label vector bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def weight(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True)
class Dataset:
    """A registry plus the student records labeled against it."""

    registry: TemplateRegistry
    records: tuple[StudentRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        weeks = {r.weeks for r in self.records}
        if len(weeks) > 1:
            raise ValidationError(f"records disagree on week count: {sorted(weeks)}")
        valid_ids = set(self.registry.ids())
        for record in self.records:
            if record.expert_labels is None:
                continue
            unknown = record.expert_labels - valid_ids
            if unknown:
                raise ValidationError(
                    f"record {record.student_id}: expert labels {sorted(unknown)} "
                    f"not in registry"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def weeks(self) -> int:
        if not self.records:
            raise ValidationError("dataset has no records")
        return self.records[0].weeks

    def require_labeled(self) -> None:
        unlabeled = [r.student_id for r in self.records if not r.labeled]
        if unlabeled:
            raise ValidationError(f"records without expert labels: {unlabeled[:5]}")


def labelset_to_vector(ids, registry: TemplateRegistry) -> LabelVector:
    """Encode a set of template ids as a binary vector in registry order."""
    bits = [0] * len(registry)
    for template_id in ids:
        bits[registry.label_index(template_id)] = 1
    return LabelVector(tuple(bits))


def vector_to_labelset(vector: LabelVector, registry: TemplateRegistry) -> frozenset[int]:
    """Decode a binary vector back to the template ids of its set bits."""
    if len(vector) != len(registry):
        raise ValidationError(
            f"label vector length {len(vector)} != registry size {len(registry)}"
        )
    return frozenset(
        registry.template_at(j).id for j, bit in enumerate(vector.bits) if bit
    )


def _parse_registry(data: dict, source: str) -> TemplateRegistry:
    if not isinstance(data, dict) or "templates" not in data:
        raise ValidationError(f"{source}: expected an object with a 'templates' array")
    version = str(data.get("version", "custom"))
    entries = data["templates"]
    if not isinstance(entries, list):
        raise ValidationError(f"{source}: 'templates' must be an array")
    templates = []
    for n, entry in enumerate(entries):
        try:
            template = Template(
                id=int(entry["id"]),
                factor=FactorId.from_key(entry["factor"]),
                reference=ReferenceType.from_key(entry["reference"]),
                surface_text=str(entry["surface_text"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{source}: template entry {n} is malformed: {exc}") from None
        templates.append(template)
    return TemplateRegistry(templates=tuple(templates), version=version)


def load_registry(path: str | Path) -> TemplateRegistry:
    """Load and validate a template registry file; label indices follow file order."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from None
    return _parse_registry(data, str(path))


def default_registry() -> TemplateRegistry:
    """The shipped 29-template registry. The surface texts and the exact
    (factor, reference) coverage are stand-ins; see the registry file notes."""
    text = resources.files("rakelgen.data").joinpath("default_registry.json").read_text("utf-8")
    return _parse_registry(json.loads(text), "default_registry.json")


def registry_to_dict(registry: TemplateRegistry) -> dict:
    return {
        "version": registry.version,
        "templates": [
            {
                "id": t.id,
                "factor": t.factor.key,
                "reference": t.reference.value,
                "surface_text": t.surface_text,
            }
            for t in registry.templates
        ],
    }


def save_registry(registry: TemplateRegistry, path: str | Path) -> None:
    payload = json.dumps(registry_to_dict(registry), indent=2) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def record_to_dict(record: StudentRecord) -> dict:
    out: dict = {
        "student_id": record.student_id,
        "weeks": record.weeks,
        "series": {f.key: list(record.series[f]) for f in FactorId},
    }
    if record.expert_labels is not None:
        out["expert_labels"] = sorted(record.expert_labels)
    return out


def record_from_dict(data: dict, source: str = "record") -> StudentRecord:
    try:
        series = {
            FactorId.from_key(name): tuple(values)
            for name, values in data["series"].items()
        }
        labels = data.get("expert_labels")
        return StudentRecord(
            student_id=str(data["student_id"]),
            weeks=int(data["weeks"]),
            series=series,
            expert_labels=None if labels is None else frozenset(labels),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{source}: malformed record: {exc}") from None


def load_dataset(path: str | Path, registry: TemplateRegistry) -> Dataset:
    """Read a JSON Lines dataset (one StudentRecord object per line)."""
    path = Path(path)
    records = []
    try:
        handle = path.open(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    with handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            records.append(record_from_dict(data, f"{path}:{lineno}"))
    return Dataset(registry=registry, records=tuple(records))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset as JSON Lines, deterministically."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for record in dataset.records:
            handle.write(json.dumps(record_to_dict(record)) + "\n")
