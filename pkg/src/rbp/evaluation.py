"""Benchmark-protocol evaluation: pair matching, per-class AP, mAP aggregation.

A detection is a scored (human box, object box) pair for one class. It
counts as a true positive when an unmatched ground-truth pair of the same
class on the same image overlaps both boxes at or above the IoU
threshold; each ground-truth pair is consumed at most once. Per-class
average precision uses all-points interpolation, and mAP is averaged
over the full / rare / non-rare class sets under either the Default or
the Known-Object setting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotFoundError, ParseError
from .taxonomy import ClassPartition, ClassTable

SETTING_DEFAULT = "default"
SETTING_KNOWN_OBJECT = "ko"
SETTINGS = (SETTING_DEFAULT, SETTING_KNOWN_OBJECT)


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise DomainError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    score: float
    human_box: Box
    object_box: Box


@dataclass(frozen=True)
class GtPair:
    image_id: str
    class_id: int
    human_box: Box
    object_box: Box


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class ClassMatches:
    """TP/FP flags in descending-score order plus the ground-truth count."""

    flags: tuple[bool, ...]
    n_gt: int


def _match_class(dets, gts, iou_thresh: float) -> ClassMatches:
    """Greedy one-to-one matching of one class's detections to its GT pairs."""
    ordered = sorted(dets, key=lambda d: -d.score)
    gt_by_image: dict[str, list[int]] = {}
    for i, g in enumerate(gts):
        gt_by_image.setdefault(g.image_id, []).append(i)
    matched: set[int] = set()
    flags = []
    for det in ordered:
        best_overlap = -1.0
        best_gt = None
        for i in gt_by_image.get(det.image_id, ()):
            if i in matched:
                continue
            g = gts[i]
            iou_h = iou(det.human_box, g.human_box)
            if iou_h < iou_thresh:
                continue
            iou_o = iou(det.object_box, g.object_box)
            if iou_o < iou_thresh:
                continue
            overlap = min(iou_h, iou_o)
            if overlap > best_overlap:
                best_overlap = overlap
                best_gt = i
        if best_gt is not None:
            matched.add(best_gt)
            flags.append(True)
        else:
            flags.append(False)
    return ClassMatches(tuple(flags), len(gts))


def match_detections(dets, gts, iou_thresh: float = 0.5) -> dict[int, ClassMatches]:
    """Per-class ordered TP/FP flags and GT counts over a whole test set."""
    if not (0.0 < iou_thresh <= 1.0):
        raise DomainError(f"iou threshold must lie in (0, 1], got {iou_thresh}")
    classes = {d.class_id for d in dets} | {g.class_id for g in gts}
    out = {}
    for c in sorted(classes):
        out[c] = _match_class(
            [d for d in dets if d.class_id == c],
            [g for g in gts if g.class_id == c],
            iou_thresh,
        )
    return out


def average_precision(flags, n_gt: int) -> float | None:
    """All-points interpolated AP; None when the class has no ground truth."""
    if n_gt < 0:
        raise DomainError(f"n_gt must be >= 0, got {n_gt}")
    if n_gt == 0:
        return None
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    ranks = np.arange(1, flags.size + 1)
    precision = tp / ranks
    # interpolated precision: max precision at this rank or any later one
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    # recall increases by 1/n_gt at each TP; sum the interpolated precision there
    return float(np.sum(interp[flags]) / n_gt)


@dataclass(frozen=True)
class EvalReport:
    setting: str
    per_class_ap: dict[int, float]
    undefined_classes: tuple[int, ...]
    map_full: float | None
    map_rare: float | None
    map_nonrare: float | None

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "per_class_ap": {str(c): ap for c, ap in sorted(self.per_class_ap.items())},
            "undefined_classes": list(self.undefined_classes),
            "map_full": self.map_full,
            "map_rare": self.map_rare,
            "map_nonrare": self.map_nonrare,
        }


def _mean_ap(per_class_ap: dict[int, float], members) -> float | None:
    values = [per_class_ap[c] for c in members if c in per_class_ap]
    if not values:
        return None
    return float(sum(values) / len(values))


def evaluate(
    dets,
    gts,
    table: ClassTable,
    partition: ClassPartition,
    setting: str = SETTING_DEFAULT,
    iou_thresh: float = 0.5,
) -> EvalReport:
    """Score detections against ground truth under one evaluation setting.

    Default evaluates every detection of a class across the full test set.
    Known-Object first restricts a class's detections to images whose
    ground truth contains at least one pair with the class's target object
    category, which can only remove false positives.
    """
    if setting not in SETTINGS:
        raise DomainError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    for d in dets:
        if d.class_id not in table:
            raise NotFoundError(f"detection references unknown class_id {d.class_id}")
    for g in gts:
        if g.class_id not in table:
            raise NotFoundError(f"ground truth references unknown class_id {g.class_id}")

    gts_by_class: dict[int, list[GtPair]] = {}
    for g in gts:
        gts_by_class.setdefault(g.class_id, []).append(g)
    dets_by_class: dict[int, list[Detection]] = {}
    for d in dets:
        dets_by_class.setdefault(d.class_id, []).append(d)

    if setting == SETTING_KNOWN_OBJECT:
        images_with_object: dict[str, set[str]] = {}
        for g in gts:
            obj = table.get(g.class_id).object
            images_with_object.setdefault(obj, set()).add(g.image_id)

    per_class_ap: dict[int, float] = {}
    undefined = []
    for c in table.ids():
        class_dets = dets_by_class.get(c, [])
        if setting == SETTING_KNOWN_OBJECT:
            allowed = images_with_object.get(table.get(c).object, set())
            class_dets = [d for d in class_dets if d.image_id in allowed]
        matches = _match_class(class_dets, gts_by_class.get(c, []), iou_thresh)
        ap = average_precision(matches.flags, matches.n_gt)
        if ap is None:
            undefined.append(c)
        else:
            per_class_ap[c] = ap

    return EvalReport(
        setting=setting,
        per_class_ap=per_class_ap,
        undefined_classes=tuple(undefined),
        map_full=_mean_ap(per_class_ap, table.ids()),
        map_rare=_mean_ap(per_class_ap, sorted(partition.rare)),
        map_nonrare=_mean_ap(per_class_ap, sorted(partition.non_rare)),
    )


def format_percent(value: float | None) -> str:
    return "n/a" if value is None else f"{100.0 * value:.2f}"


def format_report_table(report: EvalReport) -> str:
    """Aligned text table: Full / Rare / Non-rare columns, percentages."""
    header = ["Setting", "Full", "Rare", "Non-rare"]
    row = [
        report.setting,
        format_percent(report.map_full),
        format_percent(report.map_rare),
        format_percent(report.map_nonrare),
    ]
    widths = [max(len(h), len(v)) for h, v in zip(header, row)]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    return fmt.format(*header) + "\n" + fmt.format(*row)


# ---------------------------------------------------------------------------
# File formats (JSON lines)


def _box_from(values, source, line) -> Box:
    try:
        x1, y1, x2, y2 = (float(v) for v in values)
        return Box(x1, y1, x2, y2)
    except (TypeError, ValueError, DomainError) as exc:
        raise ParseError(f"bad box {values!r}: {exc}", path=source, line=line)


def load_detections(path) -> list[Detection]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                r = json.loads(raw)
                out.append(
                    Detection(
                        image_id=str(r["image_id"]),
                        class_id=int(r["class_id"]),
                        score=float(r["score"]),
                        human_box=_box_from(r["human_box"], str(path), lineno),
                        object_box=_box_from(r["object_box"], str(path), lineno),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad detection record: {exc}", path=str(path), line=lineno)
    return out


def write_detections(dets, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in dets:
            f.write(
                json.dumps(
                    {
                        "image_id": d.image_id,
                        "class_id": d.class_id,
                        "score": d.score,
                        "human_box": d.human_box.as_list(),
                        "object_box": d.object_box.as_list(),
                    }
                )
                + "\n"
            )


def load_gt(path) -> list[GtPair]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                r = json.loads(raw)
                out.append(
                    GtPair(
                        image_id=str(r["image_id"]),
                        class_id=int(r["class_id"]),
                        human_box=_box_from(r["human_box"], str(path), lineno),
                        object_box=_box_from(r["object_box"], str(path), lineno),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad gt record: {exc}", path=str(path), line=lineno)
    return out


def write_gt(gts, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for g in gts:
            f.write(
                json.dumps(
                    {
                        "image_id": g.image_id,
                        "class_id": g.class_id,
                        "human_box": g.human_box.as_list(),
                        "object_box": g.object_box.as_list(),
                    }
                )
                + "\n"
            )


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
