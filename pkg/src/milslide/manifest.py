"""Dataset manifest parsing and task label resolution.

A manifest is a UTF-8 text file whose first line is exactly
``slide_id,bag_path,label`` followed by one three-field row per slide.
No quoting or embedded commas; label matching is case-insensitive after
trimming whitespace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_HEADER = "slide_id,bag_path,label"


class ManifestError(ValueError):
    """Malformed manifest content (bad header, wrong arity, duplicate id)."""


class TaskError(ValueError):
    """Labels in the manifest not covered by the task definition."""


@dataclass(frozen=True)
class SlideRecord:
    slide_id: str
    bag_path: str
    raw_label: str


@dataclass(frozen=True)
class Manifest:
    records: tuple[SlideRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


def _norm_label(label: str) -> str:
    return label.strip().lower()


@dataclass(frozen=True)
class TaskSpec:
    """Binary task: which raw labels count as positive and negative.

    With ``negative_catch_all`` any label outside ``positive_labels`` maps
    to the negative class, so ``negative_labels`` may be empty.
    """

    name: str
    positive_labels: frozenset[str]
    negative_labels: frozenset[str] = frozenset()
    negative_catch_all: bool = False

    def __post_init__(self):
        pos = frozenset(_norm_label(l) for l in self.positive_labels)
        neg = frozenset(_norm_label(l) for l in self.negative_labels)
        object.__setattr__(self, "positive_labels", pos)
        object.__setattr__(self, "negative_labels", neg)
        if not pos:
            raise ValueError(f"task {self.name!r}: positive_labels must be non-empty")
        if not neg and not self.negative_catch_all:
            raise ValueError(f"task {self.name!r}: negative_labels must be non-empty unless negative_catch_all is set")
        if pos & neg:
            raise ValueError(f"task {self.name!r}: labels {sorted(pos & neg)} are both positive and negative")


@dataclass(frozen=True)
class LabeledItem:
    slide_id: str
    bag_path: str
    label: int


@dataclass(frozen=True)
class LabeledDataset:
    items: tuple[LabeledItem, ...]
    task: TaskSpec

    def __post_init__(self):
        labels = {it.label for it in self.items}
        if labels != {0, 1}:
            raise ValueError(
                f"task {self.task.name!r}: dataset needs at least one item of each class, got labels {sorted(labels)}"
            )

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self) -> list[int]:
        return [it.label for it in self.items]


def parse_manifest(path: str | Path) -> Manifest:
    """Parse a manifest file, preserving row order.

    Raises ManifestError with a line number for malformed rows and
    duplicate slide ids; missing files raise the usual OSError.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        got = lines[0] if lines else "<empty file>"
        raise ManifestError(f"{path}: line 1: expected header {MANIFEST_HEADER!r}, got {got!r}")
    records: list[SlideRecord] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise ManifestError(f"{path}: line {lineno}: expected 3 comma-separated fields, got {len(fields)}")
        slide_id, bag_path, raw_label = fields
        if not slide_id:
            raise ManifestError(f"{path}: line {lineno}: empty slide_id")
        if not raw_label:
            raise ManifestError(f"{path}: line {lineno}: empty label")
        if slide_id in seen:
            raise ManifestError(
                f"{path}: line {lineno}: duplicate slide_id {slide_id!r} (first seen on line {seen[slide_id]})"
            )
        seen[slide_id] = lineno
        records.append(SlideRecord(slide_id=slide_id, bag_path=bag_path, raw_label=raw_label))
    return Manifest(records=tuple(records))


def load_dataset(manifest_path: str | Path, task: TaskSpec) -> LabeledDataset:
    """Parse a manifest and resolve a task in one step.

    Relative bag paths are resolved against the manifest's directory, so
    a dataset directory stays valid when moved.
    """
    manifest_path = Path(manifest_path)
    manifest = parse_manifest(manifest_path)
    base = manifest_path.parent
    resolved = []
    for rec in manifest.records:
        p = Path(rec.bag_path)
        if not p.is_absolute():
            p = base / p
        resolved.append(SlideRecord(slide_id=rec.slide_id, bag_path=str(p), raw_label=rec.raw_label))
    return resolve_task(Manifest(records=tuple(resolved)), task)


def resolve_task(manifest: Manifest, task: TaskSpec) -> LabeledDataset:
    """Map raw labels to binary labels (positive -> 1), preserving order."""
    items: list[LabeledItem] = []
    unresolved: list[str] = []
    for rec in manifest.records:
        label = _norm_label(rec.raw_label)
        if label in task.positive_labels:
            value = 1
        elif label in task.negative_labels or task.negative_catch_all:
            value = 0
        else:
            unresolved.append(rec.slide_id)
            continue
        items.append(LabeledItem(slide_id=rec.slide_id, bag_path=rec.bag_path, label=value))
    if unresolved:
        raise TaskError(
            f"task {task.name!r}: labels of slides {unresolved} are neither positive nor negative"
        )
    return LabeledDataset(items=tuple(items), task=task)
