"""HOI class taxonomy: verb-object classes, body parts, rarity partition.

The ten body parts and their column order are frozen here; every rule
file, attention vector, and feature matrix in the engine indexes parts
by this order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import ConfigError, NotFoundError, ParseError, UniquenessError

PART_NAMES: tuple[str, ...] = (
    "RFoot",
    "RThigh",
    "LThigh",
    "LFoot",
    "Hip",
    "Head",
    "RHand",
    "RArm",
    "LArm",
    "LHand",
)
N_PARTS = len(PART_NAMES)
PART_INDEX = {name: i for i, name in enumerate(PART_NAMES)}

CLASS_CSV_HEADER = ("class_id", "verb", "object", "train_count")


def part_index(name: str) -> int:
    """Ordinal of a canonical part name."""
    try:
        return PART_INDEX[name]
    except KeyError:
        raise NotFoundError(f"unknown body part {name!r}; expected one of {PART_NAMES}")


@dataclass(frozen=True)
class HoiClass:
    class_id: int
    verb: str
    object: str
    train_count: int


class ClassTable:
    """Ordered, immutable collection of HOI classes.

    Enforces uniqueness of both ``class_id`` and the (verb, object) pair.
    """

    def __init__(self, classes):
        classes = tuple(classes)
        if not classes:
            raise UniquenessError("class table must not be empty")
        by_id: dict[int, HoiClass] = {}
        pairs = set()
        for c in classes:
            if c.class_id in by_id:
                raise UniquenessError(f"duplicate class_id {c.class_id}")
            pair = (c.verb, c.object)
            if pair in pairs:
                raise UniquenessError(f"duplicate (verb, object) pair {pair}")
            by_id[c.class_id] = c
            pairs.add(pair)
        self.classes = classes
        self._by_id = by_id
        self._index = {c.class_id: i for i, c in enumerate(classes)}

    def __len__(self):
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def __contains__(self, class_id):
        return class_id in self._by_id

    def ids(self) -> list[int]:
        return [c.class_id for c in self.classes]

    def get(self, class_id: int) -> HoiClass:
        try:
            return self._by_id[class_id]
        except KeyError:
            raise NotFoundError(f"unknown class_id {class_id}")

    def index_of(self, class_id: int) -> int:
        """Row position of a class, e.g. for aligning parameter matrices."""
        try:
            return self._index[class_id]
        except KeyError:
            raise NotFoundError(f"unknown class_id {class_id}")

    def classes_for_object(self, object_name: str) -> list[int]:
        """All class ids whose object equals ``object_name``, in id order."""
        ids = sorted(c.class_id for c in self.classes if c.object == object_name)
        if not ids:
            raise NotFoundError(f"no class with object {object_name!r}")
        return ids

    def objects(self) -> set[str]:
        return {c.object for c in self.classes}


@dataclass(frozen=True)
class ClassPartition:
    rare: frozenset[int]
    non_rare: frozenset[int]
    threshold: int

    def is_rare(self, class_id: int) -> bool:
        return class_id in self.rare


def load_class_table(path) -> ClassTable:
    """Parse the class-metadata CSV (header: class_id,verb,object,train_count)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty class-metadata file", path=path)
        if tuple(h.strip() for h in header) != CLASS_CSV_HEADER:
            raise ParseError(
                f"expected header {','.join(CLASS_CSV_HEADER)}, got {','.join(header)}",
                path=path,
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=lineno)
            try:
                class_id = int(row[0])
                train_count = int(row[3])
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno)
            if class_id < 0:
                raise ParseError(f"negative class_id {class_id}", path=path, line=lineno)
            if train_count < 0:
                raise ParseError(f"negative train_count {train_count}", path=path, line=lineno)
            rows.append(HoiClass(class_id, row[1].strip(), row[2].strip(), train_count))
    return ClassTable(rows)


def save_class_table(table: ClassTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CLASS_CSV_HEADER)
        for c in table:
            writer.writerow([c.class_id, c.verb, c.object, c.train_count])


def partition_by_rarity(
    table: ClassTable,
    threshold: int = 10,
    always_common_verbs: frozenset[str] = frozenset(),
) -> ClassPartition:
    """Split classes into rare (train_count strictly below threshold) and non-rare.

    ``always_common_verbs`` forces matching classes (e.g. no-interaction
    placeholders) into the non-rare set regardless of count, so they are
    never treated as rule-tuning targets.
    """
    if threshold < 1:
        raise ConfigError(f"rarity threshold must be >= 1, got {threshold}")
    rare = set()
    non_rare = set()
    for c in table:
        if c.verb in always_common_verbs or c.train_count >= threshold:
            non_rare.add(c.class_id)
        else:
            rare.add(c.class_id)
    return ClassPartition(frozenset(rare), frozenset(non_rare), threshold)
