"""Forward scoring path: part attention, rule modulation, class scores, fusion.

Per candidate human-object pair the engine predicts one attention scalar
per body part from [part feature; object feature] through a small
per-part perceptron, multiplies the attentions elementwise by the rule
row of the class being scored, and reads out a per-class sigmoid score
from the attention-weighted part features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FusionError, NotFoundError, ParseError, ShapeError
from .rules import RuleMatrix
from .taxonomy import N_PARTS, PART_NAMES, ClassTable

SCORE_EPS = 1e-12


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def clamp_score(s: float) -> float:
    """Keep scores strictly inside (0, 1) so downstream logs stay finite."""
    return min(max(s, SCORE_EPS), 1.0 - SCORE_EPS)


@dataclass(frozen=True)
class PartFeature:
    part: str
    values: np.ndarray


@dataclass
class AttentionParams:
    """Per-part two-layer perceptron (rectifier hidden, sigmoid output).

    Shapes: w1 (10, h, d+d_o), b1 (10, h), w2 (10, h), b2 (10,).
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[1]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[2]

    def copy(self) -> "AttentionParams":
        return AttentionParams(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy()
        )


@dataclass
class HeadParams:
    """Per-class, per-part linear read-out: w (C, 10, d) and bias b (C,)."""

    class_ids: tuple[int, ...]
    w: np.ndarray
    b: np.ndarray
    _index: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {c: i for i, c in enumerate(self.class_ids)}
        if len(self._index) != len(self.class_ids):
            raise DomainError("duplicate class_ids in head parameters")
        if self.w.shape[0] != len(self.class_ids) or self.b.shape != (len(self.class_ids),):
            raise ShapeError(
                f"head shapes {self.w.shape}/{self.b.shape} inconsistent with "
                f"{len(self.class_ids)} classes"
            )

    @property
    def feature_dim(self) -> int:
        return self.w.shape[2]

    def row_of(self, class_id: int) -> int:
        try:
            return self._index[class_id]
        except KeyError:
            raise NotFoundError(f"head has no class_id {class_id}")

    def copy(self) -> "HeadParams":
        return HeadParams(self.class_ids, self.w.copy(), self.b.copy())


@dataclass
class Params:
    attention: AttentionParams
    head: HeadParams

    def copy(self) -> "Params":
        return Params(self.attention.copy(), self.head.copy())


@dataclass(frozen=True)
class ClassScores:
    scores: dict[int, float]

    def __getitem__(self, class_id: int) -> float:
        return self.scores[class_id]

    def keys(self):
        return self.scores.keys()


def init_attention_params(d: int, d_o: int, hidden: int, seed) -> AttentionParams:
    """Seeded uniform initialization in [-0.1, 0.1]."""
    rng = np.random.default_rng(seed)
    din = d + d_o
    return AttentionParams(
        w1=rng.uniform(-0.1, 0.1, size=(N_PARTS, hidden, din)),
        b1=rng.uniform(-0.1, 0.1, size=(N_PARTS, hidden)),
        w2=rng.uniform(-0.1, 0.1, size=(N_PARTS, hidden)),
        b2=rng.uniform(-0.1, 0.1, size=N_PARTS),
    )


def init_head_params(table: ClassTable, d: int, seed) -> HeadParams:
    rng = np.random.default_rng(seed)
    n = len(table)
    return HeadParams(
        class_ids=tuple(table.ids()),
        w=rng.uniform(-0.1, 0.1, size=(n, N_PARTS, d)),
        b=rng.uniform(-0.1, 0.1, size=n),
    )


def parts_to_matrix(parts) -> np.ndarray:
    """Normalize part features to a (10, d) array in canonical part order.

    Accepts an ndarray already in canonical order, a mapping from part
    name to vector, or a list of PartFeature.
    """
    if isinstance(parts, np.ndarray):
        if parts.ndim != 2 or parts.shape[0] != N_PARTS:
            raise ShapeError(f"part matrix has shape {parts.shape}, expected (10, d)")
        return np.asarray(parts, dtype=np.float64)
    if isinstance(parts, dict):
        items = parts
    else:
        items = {pf.part: pf.values for pf in parts}
    if set(items) != set(PART_NAMES):
        missing = sorted(set(PART_NAMES) - set(items))
        extra = sorted(set(items) - set(PART_NAMES))
        raise ShapeError(f"bad part set: missing {missing}, unexpected {extra}")
    rows = [np.asarray(items[name], dtype=np.float64) for name in PART_NAMES]
    for name, r in zip(PART_NAMES, rows):
        if r.ndim != 1:
            raise ShapeError(f"part {name}: feature must be a vector, got shape {r.shape}")
        if r.shape != rows[0].shape:
            raise ShapeError(
                f"part {name}: feature dim {r.shape[0]} differs from "
                f"{PART_NAMES[0]}'s dim {rows[0].shape[0]}"
            )
    return np.stack(rows)


def predict_attention(parts, obj, params: AttentionParams) -> np.ndarray:
    """Per-part attention: sigmoid(MLP([f_part; f_object])), one scalar per part."""
    f = parts_to_matrix(parts)
    obj = np.asarray(obj, dtype=np.float64)
    if obj.ndim != 1:
        raise ShapeError(f"object feature must be a vector, got shape {obj.shape}")
    din = f.shape[1] + obj.shape[0]
    if din != params.input_dim:
        raise ShapeError(
            f"part feature dim {f.shape[1]} + object dim {obj.shape[0]} "
            f"!= parameter input dim {params.input_dim}"
        )
    u = np.concatenate([f, np.broadcast_to(obj, (N_PARTS, obj.shape[0]))], axis=1)
    z1 = np.einsum("phk,pk->ph", params.w1, u) + params.b1
    h = np.maximum(z1, 0.0)
    z2 = np.einsum("ph,ph->p", params.w2, h) + params.b2
    return sigmoid(z2)


def apply_rules(attention: np.ndarray, rule_row: np.ndarray) -> np.ndarray:
    """Elementwise product of attentions and rule weights (both in [0, 1])."""
    attention = np.asarray(attention, dtype=np.float64)
    rule_row = np.asarray(rule_row, dtype=np.float64)
    if attention.shape != (N_PARTS,) or rule_row.shape != (N_PARTS,):
        raise ShapeError(
            f"expected two length-{N_PARTS} vectors, got {attention.shape} and {rule_row.shape}"
        )
    if np.any(rule_row < 0.0) or np.any(rule_row > 1.0):
        raise DomainError("rule weights must lie in [0, 1]")
    return attention * rule_row


def score_class(parts, attention_rb: np.ndarray, head: HeadParams, class_id: int) -> float:
    """sigmoid(sum_i a_i^rb * <w_{c,i}, f_i> + b_c) for one class."""
    f = parts_to_matrix(parts)
    row = head.row_of(class_id)
    dots = np.einsum("pd,pd->p", head.w[row], f)
    logit = float(np.dot(attention_rb, dots) + head.b[row])
    return clamp_score(float(sigmoid(logit)))


def score_all(
    parts,
    obj,
    attn_params: AttentionParams,
    rules: RuleMatrix | None,
    head: HeadParams,
) -> ClassScores:
    """Score every head class: attention once, then per-class rule modulation.

    ``rules=None`` omits the modulation step entirely (the control
    pipeline); it is score-for-score identical to all-ones rules.
    """
    f = parts_to_matrix(parts)
    a = predict_attention(f, obj, attn_params)
    dots = np.einsum("cpd,pd->cp", head.w, f)
    if rules is None:
        weighted = np.broadcast_to(a, dots.shape)
    else:
        rule_rows = np.stack([rules.row(c) for c in head.class_ids])
        weighted = a[None, :] * rule_rows
    logits = np.einsum("cp,cp->c", weighted, dots) + head.b
    scores = sigmoid(logits)
    return ClassScores(
        {c: clamp_score(float(s)) for c, s in zip(head.class_ids, scores)}
    )


FUSION_MODES = ("mean", "product")


def late_fuse(
    part_stream: ClassScores, instance_stream: ClassScores, mode: str = "mean"
) -> ClassScores:
    """Combine two per-class score maps with identical key sets."""
    if mode not in FUSION_MODES:
        raise DomainError(f"unknown fusion mode {mode!r}; expected one of {FUSION_MODES}")
    a, b = part_stream.scores, instance_stream.scores
    if set(a) != set(b):
        diff = sorted(set(a) ^ set(b))
        raise FusionError(f"class-id key sets differ; symmetric difference {diff}")
    if mode == "mean":
        fused = {c: (a[c] + b[c]) / 2.0 for c in a}
    else:
        fused = {c: a[c] * b[c] for c in a}
    return ClassScores(fused)


# ---------------------------------------------------------------------------
# Instance feature file (JSON lines)


@dataclass
class Instance:
    """One candidate human-object pair with precomputed features."""

    instance_id: str
    image_id: str
    object_name: str
    object_feature: np.ndarray
    parts: np.ndarray  # (10, d), canonical part order
    gt_class_ids: tuple[int, ...] = ()
    instance_stream_scores: dict[int, float] | None = None
    human_box: tuple[float, float, float, float] | None = None
    object_box: tuple[float, float, float, float] | None = None


def instance_from_dict(record: dict, source="<instances>", line=None) -> Instance:
    try:
        parts = parts_to_matrix(
            {k: np.asarray(v, dtype=np.float64) for k, v in record["parts"].items()}
        )
        stream = record.get("instance_stream_scores")
        if stream is not None:
            stream = {int(k): float(v) for k, v in stream.items()}
        return Instance(
            instance_id=str(record["instance_id"]),
            image_id=str(record["image_id"]),
            object_name=str(record["object"]),
            object_feature=np.asarray(record["object_feature"], dtype=np.float64),
            parts=parts,
            gt_class_ids=tuple(int(c) for c in record.get("gt_class_ids", ())),
            instance_stream_scores=stream,
            human_box=tuple(record["human_box"]) if "human_box" in record else None,
            object_box=tuple(record["object_box"]) if "object_box" in record else None,
        )
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise ParseError(f"bad instance record: {exc}", path=source, line=line)


def instance_to_dict(inst: Instance) -> dict:
    record = {
        "instance_id": inst.instance_id,
        "image_id": inst.image_id,
        "gt_class_ids": list(inst.gt_class_ids),
        "object": inst.object_name,
        "object_feature": [float(x) for x in inst.object_feature],
        "parts": {
            name: [float(x) for x in inst.parts[i]] for i, name in enumerate(PART_NAMES)
        },
    }
    if inst.instance_stream_scores is not None:
        record["instance_stream_scores"] = {
            str(c): float(s) for c, s in sorted(inst.instance_stream_scores.items())
        }
    if inst.human_box is not None:
        record["human_box"] = [float(x) for x in inst.human_box]
    if inst.object_box is not None:
        record["object_box"] = [float(x) for x in inst.object_box]
    return record


def load_instances(path) -> list[Instance]:
    instances = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", path=str(path), line=lineno)
            instances.append(instance_from_dict(record, source=str(path), line=lineno))
    return instances


def write_instances(instances, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(instance_to_dict(inst)) + "\n")
