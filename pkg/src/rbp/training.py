"""Cross-entropy training of the scoring head (optionally the attention MLP).

Plain SGD over minibatches drawn with a fixed positive:negative ratio.
Each batch item is an (example, class) pair scored through the rule-
modulated forward path; gradients are analytic and verified against
central finite differences by ``gradient_check``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .attention import (
    AttentionParams,
    HeadParams,
    Params,
    clamp_score,
    predict_attention,
    sigmoid,
)
from .errors import ConfigError, DivergenceError, DomainError
from .rules import RuleMatrix
from .taxonomy import ClassTable

RULES_AT_MODES = ("both", "inference")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    iterations: int = 10_000
    batch_size: int = 10
    pos_neg_ratio: tuple[int, int] = (1, 4)
    seed: int = 0
    train_attention: bool = False
    rules_at: str = "both"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        pos, neg = self.pos_neg_ratio
        if pos < 0 or neg < 0 or pos + neg < 1:
            raise ConfigError(f"bad pos_neg_ratio {self.pos_neg_ratio}")
        if self.batch_size < pos + neg:
            raise ConfigError(
                f"batch_size {self.batch_size} below one ratio unit {pos + neg}"
            )
        if self.rules_at not in RULES_AT_MODES:
            raise ConfigError(f"rules_at must be one of {RULES_AT_MODES}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "pos_neg_ratio": list(self.pos_neg_ratio),
            "seed": self.seed,
            "train_attention": self.train_attention,
            "rules_at": self.rules_at,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown train-config fields {sorted(unknown)}")
        kwargs = dict(payload)
        if "pos_neg_ratio" in kwargs:
            kwargs["pos_neg_ratio"] = tuple(kwargs["pos_neg_ratio"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class LossReport:
    losses: tuple[float, ...]

    @property
    def final_loss(self) -> float | None:
        return self.losses[-1] if self.losses else None


def cross_entropy(score: float, target: int) -> float:
    """-[y ln s + (1-y) ln(1-s)] with s clamped 1e-12 from the boundaries."""
    if target not in (0, 1):
        raise DomainError(f"target must be 0 or 1, got {target!r}")
    s = clamp_score(float(score))
    if target == 1:
        return -math.log(s)
    return -math.log(1.0 - s)


@dataclass
class ExamplePools:
    """Per-class binary framing of a labeled dataset.

    An item is an (example index, class_id) pair; it is positive when the
    example's target for that class is 1.
    """

    examples: list
    positives: list[tuple[int, int]]
    negatives: list[tuple[int, int]]
    targets: list[frozenset[int]]


def build_example_pools(examples, table: ClassTable) -> ExamplePools:
    """Enumerate all (example, class) pairs against the class table.

    Ground-truth ids absent from the table are ignored so a dataset can be
    trained against a class subset.
    """
    ids = table.ids()
    positives = []
    negatives = []
    targets = []
    for i, ex in enumerate(examples):
        pos = frozenset(c for c in ex.gt_class_ids if c in table)
        targets.append(pos)
        for c in ids:
            (positives if c in pos else negatives).append((i, c))
    return ExamplePools(list(examples), positives, negatives, targets)


def sample_minibatch(pools: ExamplePools, ratio, size: int, seed):
    """Draw a batch of (example_index, class_id, target) triples.

    Quotas follow the ratio exactly; a pool smaller than its quota is
    sampled with replacement, otherwise without. Deterministic given the
    seed (an int or a numpy Generator).
    """
    pos_share, neg_share = ratio
    unit = pos_share + neg_share
    if unit < 1:
        raise ConfigError(f"bad ratio {ratio}")
    if size % unit != 0:
        raise ConfigError(f"batch size {size} not divisible by ratio unit {unit}")
    n_pos = size * pos_share // unit
    n_neg = size - n_pos
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    batch = []
    for pool, quota, target in ((pools.positives, n_pos, 1), (pools.negatives, n_neg, 0)):
        if quota == 0:
            continue
        if not pool:
            kind = "positive" if target == 1 else "negative"
            raise DomainError(f"{kind} pool is empty but the batch needs {quota}")
        idx = rng.choice(len(pool), size=quota, replace=len(pool) < quota)
        batch.extend((pool[j][0], pool[j][1], target) for j in idx)
    return batch


def _attention_forward(inst, attn: AttentionParams):
    """Part-attention forward pass keeping intermediates for backprop."""
    f = inst.parts
    obj = inst.object_feature
    u = np.concatenate(
        [f, np.broadcast_to(obj, (f.shape[0], obj.shape[0]))], axis=1
    )
    z1 = np.einsum("phk,pk->ph", attn.w1, u) + attn.b1
    h = np.maximum(z1, 0.0)
    z2 = np.einsum("ph,ph->p", attn.w2, h) + attn.b2
    a = sigmoid(z2)
    return u, z1, h, a


@dataclass
class Gradients:
    head_w: np.ndarray
    head_b: np.ndarray
    attn_w1: np.ndarray | None = None
    attn_b1: np.ndarray | None = None
    attn_w2: np.ndarray | None = None
    attn_b2: np.ndarray | None = None


def batch_loss_and_grads(
    batch,
    examples,
    params: Params,
    rules: RuleMatrix | None,
    train_attention: bool = False,
    attention_cache: dict | None = None,
) -> tuple[float, Gradients]:
    """Mean cross-entropy over the batch plus analytic parameter gradients."""
    attn, head = params.attention, params.head
    grads = Gradients(np.zeros_like(head.w), np.zeros_like(head.b))
    if train_attention:
        grads.attn_w1 = np.zeros_like(attn.w1)
        grads.attn_b1 = np.zeros_like(attn.b1)
        grads.attn_w2 = np.zeros_like(attn.w2)
        grads.attn_b2 = np.zeros_like(attn.b2)
    total = 0.0
    inv_b = 1.0 / len(batch)
    for ex_idx, class_id, y in batch:
        inst = examples[ex_idx]
        if not train_attention and attention_cache is not None:
            cached = attention_cache.get(inst.instance_id)
            if cached is None:
                cached = predict_attention(inst.parts, inst.object_feature, attn)
                attention_cache[inst.instance_id] = cached
            a = cached
            u = z1 = h = None
        else:
            u, z1, h, a = _attention_forward(inst, attn)
        r = rules.row(class_id) if rules is not None else None
        a_rb = a * r if r is not None else a
        row = head.row_of(class_id)
        f = inst.parts
        dots = np.einsum("pd,pd->p", head.w[row], f)
        logit = float(np.dot(a_rb, dots) + head.b[row])
        s = float(sigmoid(logit))
        total += cross_entropy(s, y)
        g = (s - y) * inv_b
        grads.head_w[row] += g * a_rb[:, None] * f
        grads.head_b[row] += g
        if train_attention:
            da = g * dots * (r if r is not None else 1.0)
            dz2 = da * a * (1.0 - a)
            grads.attn_w2 += dz2[:, None] * h
            grads.attn_b2 += dz2
            dh = dz2[:, None] * attn.w2
            dz1 = dh * (z1 > 0.0)
            grads.attn_w1 += np.einsum("ph,pk->phk", dz1, u)
            grads.attn_b1 += dz1
    return total * inv_b, grads


def batch_loss(batch, examples, params: Params, rules: RuleMatrix | None) -> float:
    """Value-only forward pass (used by finite differences)."""
    attn, head = params.attention, params.head
    total = 0.0
    for ex_idx, class_id, y in batch:
        inst = examples[ex_idx]
        a = predict_attention(inst.parts, inst.object_feature, attn)
        r = rules.row(class_id) if rules is not None else None
        a_rb = a * r if r is not None else a
        row = head.row_of(class_id)
        dots = np.einsum("pd,pd->p", head.w[row], inst.parts)
        logit = float(np.dot(a_rb, dots) + head.b[row])
        total += cross_entropy(float(sigmoid(logit)), y)
    return total / len(batch)


def train(
    examples,
    table: ClassTable,
    config: TrainConfig,
    rules: RuleMatrix | None,
    init: Params,
) -> tuple[Params, LossReport]:
    """Run ``config.iterations`` SGD steps; returns new params and loss trace."""
    params = init.copy()
    if config.iterations == 0:
        return params, LossReport(())
    train_rules = rules if config.rules_at == "both" else None
    pools = build_example_pools(examples, table)
    rng = np.random.default_rng(config.seed)
    cache: dict | None = None if config.train_attention else {}
    losses = []
    for it in range(config.iterations):
        batch = sample_minibatch(pools, config.pos_neg_ratio, config.batch_size, rng)
        loss, grads = batch_loss_and_grads(
            batch,
            pools.examples,
            params,
            train_rules,
            train_attention=config.train_attention,
            attention_cache=cache,
        )
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {it}", iteration=it)
        lr = config.learning_rate
        params.head.w -= lr * grads.head_w
        params.head.b -= lr * grads.head_b
        if config.train_attention:
            params.attention.w1 -= lr * grads.attn_w1
            params.attention.b1 -= lr * grads.attn_b1
            params.attention.w2 -= lr * grads.attn_w2
            params.attention.b2 -= lr * grads.attn_b2
        losses.append(loss)
    return params, LossReport(tuple(losses))


def gradient_check(
    params: Params,
    example,
    table: ClassTable,
    rules: RuleMatrix | None,
    epsilon: float = 1e-6,
    train_attention: bool = True,
) -> float:
    """Max relative error between analytic and central-FD gradients.

    The probe loss is the mean cross-entropy over every head class for one
    example, so every parameter participates (except rule-knocked-out
    entries, whose gradient must be exactly zero on both paths).
    """
    if not (1e-8 <= epsilon <= 1e-4):
        raise ConfigError(f"epsilon must lie in [1e-8, 1e-4], got {epsilon}")
    targets = set(example.gt_class_ids)
    batch = [(0, c, 1 if c in targets else 0) for c in params.head.class_ids]
    examples = [example]
    _, grads = batch_loss_and_grads(
        batch, examples, params, rules, train_attention=train_attention
    )
    pairs = [(params.head.w, grads.head_w), (params.head.b, grads.head_b)]
    if train_attention:
        attn = params.attention
        pairs += [
            (attn.w1, grads.attn_w1),
            (attn.b1, grads.attn_b1),
            (attn.w2, grads.attn_w2),
            (attn.b2, grads.attn_b2),
        ]
    max_rel = 0.0
    for array, analytic in pairs:
        flat = array.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = batch_loss(batch, examples, params, rules)
            flat[i] = orig - epsilon
            down = batch_loss(batch, examples, params, rules)
            flat[i] = orig
            fd = (up - down) / (2.0 * epsilon)
            if not (math.isfinite(fd) and math.isfinite(aflat[i])):
                raise DivergenceError("non-finite gradient during check")
            rel = abs(aflat[i] - fd) / max(1e-8, abs(aflat[i]) + abs(fd))
            max_rel = max(max_rel, rel)
    return max_rel


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(params: Params, config: TrainConfig, iterations_run: int, path):
    attn, head = params.attention, params.head
    payload = {
        "seed": config.seed,
        "iterations_run": iterations_run,
        "train_config": config.to_dict(),
        "attention": {
            "w1": attn.w1.tolist(),
            "b1": attn.b1.tolist(),
            "w2": attn.w2.tolist(),
            "b2": attn.b2.tolist(),
        },
        "head": {
            "class_ids": list(head.class_ids),
            "w": head.w.tolist(),
            "b": head.b.tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.write("\n")


def load_checkpoint(path) -> tuple[Params, TrainConfig, int]:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    attn = AttentionParams(
        w1=np.asarray(payload["attention"]["w1"], dtype=np.float64),
        b1=np.asarray(payload["attention"]["b1"], dtype=np.float64),
        w2=np.asarray(payload["attention"]["w2"], dtype=np.float64),
        b2=np.asarray(payload["attention"]["b2"], dtype=np.float64),
    )
    head = HeadParams(
        class_ids=tuple(int(c) for c in payload["head"]["class_ids"]),
        w=np.asarray(payload["head"]["w"], dtype=np.float64),
        b=np.asarray(payload["head"]["b"], dtype=np.float64),
    )
    config = TrainConfig.from_dict(payload["train_config"])
    return Params(attn, head), config, int(payload["iterations_run"])
