"""Human-prior rule matrices: aggregation, thresholding, validation, I/O.

A rule matrix maps each HOI class to ten per-part weights in [0, 1].
Three kinds exist: "decimal" (mean of annotator labels for rare classes,
ones elsewhere), "boolean" (decimal thresholded at 0.5), and "all_ones"
(the do-nothing control). Weights multiply part attentions during
scoring.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    CoverageError,
    DomainError,
    NotFoundError,
    ParseError,
)
from .taxonomy import N_PARTS, PART_NAMES, ClassPartition, ClassTable, part_index

log = logging.getLogger("rbp.rules")

KIND_DECIMAL = "decimal"
KIND_BOOLEAN = "boolean"
KIND_ALL_ONES = "all_ones"
KINDS = (KIND_DECIMAL, KIND_BOOLEAN, KIND_ALL_ONES)

ALLOWED_LABELS = (0.0, 0.5, 1.0)

RULES_FORMAT_VERSION = 1

ANNOTATION_CSV_HEADER = ("annotator_id", "class_id", "part", "label")


@dataclass
class AnnotatorLabelSet:
    """One annotator's labels: class_id -> vector of 10 values in {0, 0.5, 1}."""

    annotator_id: str
    labels: dict[int, np.ndarray]


@dataclass(frozen=True)
class RuleValidationReport:
    ok: bool
    violations: tuple[tuple[int, str], ...] = ()


class RuleMatrix:
    """Immutable per-class x per-part weight table."""

    def __init__(self, kind: str, rows: dict[int, np.ndarray]):
        if kind not in KINDS:
            raise DomainError(f"unknown rule-matrix kind {kind!r}")
        self.kind = kind
        self._rows = {}
        for class_id, weights in rows.items():
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (N_PARTS,):
                raise DomainError(
                    f"rule row for class {class_id} has shape {w.shape}, expected ({N_PARTS},)"
                )
            w = w.copy()
            w.flags.writeable = False
            self._rows[int(class_id)] = w
        self.parts = PART_NAMES

    def __len__(self):
        return len(self._rows)

    def __contains__(self, class_id):
        return class_id in self._rows

    def class_ids(self) -> list[int]:
        return sorted(self._rows)

    def row(self, class_id: int) -> np.ndarray:
        try:
            return self._rows[class_id]
        except KeyError:
            raise NotFoundError(f"no rule row for class_id {class_id}")

    def rows(self) -> dict[int, np.ndarray]:
        return dict(self._rows)

    def with_weight(self, class_id: int, part: str, weight: float) -> "RuleMatrix":
        """New matrix with one cell replaced; result kind is always decimal."""
        if not (0.0 <= weight <= 1.0):
            raise DomainError(f"weight {weight} outside [0, 1]")
        row = self.row(class_id).copy()
        row[part_index(part)] = weight
        new_rows = self.rows()
        new_rows[class_id] = row
        return RuleMatrix(KIND_DECIMAL, new_rows)

    def __eq__(self, other):
        if not isinstance(other, RuleMatrix):
            return NotImplemented
        if self.kind != other.kind or set(self._rows) != set(other._rows):
            return False
        return all(np.array_equal(self._rows[c], other._rows[c]) for c in self._rows)


def aggregate_annotations(
    sets: list[AnnotatorLabelSet],
    table: ClassTable,
    partition: ClassPartition,
) -> RuleMatrix:
    """Average annotator labels into a decimal rule matrix.

    Rare-class rows are the per-part arithmetic mean across annotators;
    non-rare rows are all ones. Every annotator must cover every rare
    class, and labels must lie in {0, 0.5, 1}.
    """
    if not sets:
        raise CoverageError("need at least one annotator label set")
    for s in sets:
        for class_id, row in s.labels.items():
            if class_id not in table:
                raise DomainError(
                    f"annotator {s.annotator_id!r} labels unknown class_id {class_id}"
                )
            for p, value in enumerate(np.asarray(row, dtype=np.float64)):
                if value not in ALLOWED_LABELS:
                    raise DomainError(
                        f"annotator {s.annotator_id!r}, class {class_id}, "
                        f"part {PART_NAMES[p]}: label {value} not in {{0, 0.5, 1}}"
                    )
    rows: dict[int, np.ndarray] = {}
    for c in table:
        if partition.is_rare(c.class_id):
            stack = []
            for s in sets:
                if c.class_id not in s.labels:
                    raise CoverageError(
                        f"annotator {s.annotator_id!r} is missing rare class {c.class_id}"
                    )
                stack.append(np.asarray(s.labels[c.class_id], dtype=np.float64))
            rows[c.class_id] = np.mean(stack, axis=0)
        else:
            rows[c.class_id] = np.ones(N_PARTS)
    return RuleMatrix(KIND_DECIMAL, rows)


def booleanize(matrix: RuleMatrix, threshold: float = 0.5) -> RuleMatrix:
    """Threshold a decimal (or all-ones) matrix: weight >= threshold -> 1."""
    if matrix.kind == KIND_BOOLEAN:
        raise DomainError("matrix is already boolean; booleanize is the identity there")
    if not (0.0 < threshold <= 1.0):
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    rows = {
        class_id: np.where(row >= threshold, 1.0, 0.0)
        for class_id, row in matrix.rows().items()
    }
    return RuleMatrix(KIND_BOOLEAN, rows)


def all_ones(table: ClassTable) -> RuleMatrix:
    """The control matrix: every part of every class weighted 1."""
    return RuleMatrix(KIND_ALL_ONES, {c.class_id: np.ones(N_PARTS) for c in table})


def validate_rules(matrix: RuleMatrix, partition: ClassPartition) -> RuleValidationReport:
    """Check range, the all-ones convention for non-rare rows, kind purity,
    and row coverage of the partition. Violations are reported, not raised."""
    violations: list[tuple[int, str]] = []
    all_ids = partition.rare | partition.non_rare
    for class_id in sorted(all_ids):
        if class_id not in matrix:
            violations.append((class_id, "missing rule row"))
    for class_id in matrix.class_ids():
        row = matrix.row(class_id)
        if not np.all(np.isfinite(row)):
            violations.append((class_id, "non-finite weight"))
            continue
        if np.any(row < 0.0) or np.any(row > 1.0):
            violations.append((class_id, "weight outside [0, 1]"))
        if class_id in partition.non_rare and not np.all(row == 1.0):
            violations.append((class_id, "non-rare class row is not all ones"))
        if matrix.kind == KIND_BOOLEAN and not np.all(np.isin(row, (0.0, 1.0))):
            violations.append((class_id, "boolean row contains a non-{0,1} value"))
        if matrix.kind == KIND_ALL_ONES and not np.all(row == 1.0):
            violations.append((class_id, "all-ones row is not all ones"))
    return RuleValidationReport(ok=not violations, violations=tuple(violations))


def rule_row_mean(matrix: RuleMatrix, class_id: int) -> float:
    """Arithmetic mean of a class's ten weights."""
    return float(np.mean(matrix.row(class_id)))


def ensure_coverage(
    matrix: RuleMatrix, table: ClassTable, partition: ClassPartition
) -> RuleMatrix:
    """Fill missing non-rare rows with ones; missing rare rows are an error."""
    missing_rare = [c for c in partition.rare if c in table and c not in matrix]
    if missing_rare:
        raise CoverageError(
            f"rules file is missing rare classes {sorted(missing_rare)[:10]}"
        )
    missing_common = [c.class_id for c in table if c.class_id not in matrix]
    if not missing_common:
        return matrix
    log.info("auto-filling %d missing non-rare rule rows with ones", len(missing_common))
    rows = matrix.rows()
    for class_id in missing_common:
        rows[class_id] = np.ones(N_PARTS)
    return RuleMatrix(matrix.kind, rows)


# ---------------------------------------------------------------------------
# File formats


def load_annotations(path) -> list[AnnotatorLabelSet]:
    """Parse the annotation CSV (annotator_id,class_id,part,label).

    Structural problems (bad field count, unknown part, duplicate cell,
    incomplete 10-part coverage) raise ParseError with line context.
    Label values are parsed but not restricted here; aggregation owns the
    {0, 0.5, 1} domain check so it can name the offending annotator.
    """
    cells: dict[str, dict[int, dict[int, float]]] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty annotation file", path=path)
        if tuple(h.strip() for h in header) != ANNOTATION_CSV_HEADER:
            raise ParseError(
                f"expected header {','.join(ANNOTATION_CSV_HEADER)}",
                path=path,
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=lineno)
            annotator, class_field, part_name, label_field = (x.strip() for x in row)
            try:
                class_id = int(class_field)
            except ValueError:
                raise ParseError(f"bad class_id {class_field!r}", path=path, line=lineno)
            if part_name not in PART_NAMES:
                raise ParseError(f"unknown part {part_name!r}", path=path, line=lineno)
            try:
                label = float(label_field)
            except ValueError:
                raise ParseError(f"bad label {label_field!r}", path=path, line=lineno)
            if annotator not in cells:
                cells[annotator] = {}
                order.append(annotator)
            row_cells = cells[annotator].setdefault(class_id, {})
            p = part_index(part_name)
            if p in row_cells:
                raise ParseError(
                    f"duplicate label for annotator {annotator!r}, class {class_id}, "
                    f"part {part_name}",
                    path=path,
                    line=lineno,
                )
            row_cells[p] = label
    sets = []
    for annotator in order:
        labels = {}
        for class_id, row_cells in cells[annotator].items():
            if len(row_cells) != N_PARTS:
                missing = [PART_NAMES[i] for i in range(N_PARTS) if i not in row_cells]
                raise ParseError(
                    f"annotator {annotator!r}, class {class_id}: missing parts {missing}",
                    path=path,
                )
            labels[class_id] = np.array([row_cells[i] for i in range(N_PARTS)])
        sets.append(AnnotatorLabelSet(annotator, labels))
    return sets


def rules_to_dict(matrix: RuleMatrix) -> dict:
    return {
        "version": RULES_FORMAT_VERSION,
        "kind": matrix.kind,
        "parts": list(PART_NAMES),
        "rows": {str(c): [float(x) for x in matrix.row(c)] for c in matrix.class_ids()},
    }


def rules_from_dict(payload: dict, source: str = "<rules>") -> RuleMatrix:
    if not isinstance(payload, dict):
        raise ParseError("rules payload must be a JSON object", path=source)
    version = payload.get("version")
    if version != RULES_FORMAT_VERSION:
        raise ParseError(f"unsupported rules version {version!r}", path=source)
    kind = payload.get("kind")
    if kind not in KINDS:
        raise ParseError(f"unknown rules kind {kind!r}", path=source)
    parts = payload.get("parts")
    if tuple(parts or ()) != PART_NAMES:
        raise ParseError(
            "parts list does not match the canonical part order", path=source
        )
    raw_rows = payload.get("rows")
    if not isinstance(raw_rows, dict):
        raise ParseError("rows must be an object keyed by class_id", path=source)
    rows = {}
    for key, values in raw_rows.items():
        try:
            class_id = int(key)
        except ValueError:
            raise ParseError(f"bad class_id key {key!r}", path=source)
        if not isinstance(values, list) or len(values) != N_PARTS:
            raise ParseError(
                f"row for class {key} must hold {N_PARTS} numbers", path=source
            )
        rows[class_id] = np.array(values, dtype=np.float64)
    return RuleMatrix(kind, rows)


def load_rules(path) -> RuleMatrix:
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", path=str(path))
    return rules_from_dict(payload, source=str(path))


def save_rules(matrix: RuleMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(rules_to_dict(matrix), f, indent=2)
        f.write("\n")


def write_heatmap_csv(matrix: RuleMatrix, path) -> None:
    """Class x part weight grid, rows in ascending class_id order."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["class_id", *PART_NAMES])
        for class_id in matrix.class_ids():
            writer.writerow([class_id, *[float(x) for x in matrix.row(class_id)]])
