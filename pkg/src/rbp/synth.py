"""Seeded synthetic benchmarks with planted part-relevance ground truth.

Each class gets a sparse boolean rule row; positive instances carry a
class-specific signal vector on exactly those parts and pure noise on
the rest. Boxes sit on a unit grid, one image per test instance, so pair
matching is unambiguous and rare-class uplift can be attributed to the
rules alone. Generation is per-class substreamed from (seed, class_id)
with numpy's PCG64, so output is independent of scheduling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .attention import HeadParams, Instance
from .errors import ConfigError
from .rules import KIND_BOOLEAN, RuleMatrix
from .taxonomy import N_PARTS, ClassTable, HoiClass

HUMAN_BOX = (0.0, 0.0, 1.0, 1.0)
OBJECT_BOX = (1.0, 0.0, 2.0, 1.0)


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 30
    n_rare: int = 12
    feature_dim: int = 16
    object_feature_dim: int = 8
    shots_per_rare: int = 5
    shots_per_common: int = 30
    test_per_class: int = 8
    noise_std: float = 0.5
    rule_sparsity: float = 0.3
    n_objects: int | None = None
    rarity_threshold: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1:
            raise ConfigError("n_classes must be >= 1")
        if not (0 <= self.n_rare <= self.n_classes):
            raise ConfigError("n_rare must lie in [0, n_classes]")
        if self.feature_dim < 1 or self.object_feature_dim < 0:
            raise ConfigError("bad feature dimensions")
        if not (0 < self.shots_per_rare < self.rarity_threshold):
            raise ConfigError(
                f"shots_per_rare must lie in (0, {self.rarity_threshold})"
            )
        if self.shots_per_common < self.rarity_threshold:
            raise ConfigError("shots_per_common must reach the rarity threshold")
        if self.test_per_class < 1:
            raise ConfigError("test_per_class must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if not (0.0 < self.rule_sparsity < 1.0):
            raise ConfigError("rule_sparsity must lie in (0, 1)")

    def object_count(self) -> int:
        return self.n_objects if self.n_objects else max(1, self.n_classes // 3)


@dataclass
class SynthDataset:
    config: SynthConfig
    table: ClassTable
    planted_rules: RuleMatrix
    train_instances: list[Instance]
    test_instances: list[Instance]
    gt_pairs: list[dict]
    active_parts: dict[int, tuple[int, ...]]
    signals: dict[int, np.ndarray] = field(repr=False, default_factory=dict)


def _class_rng(seed: int, class_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, class_id])


def _make_instance(
    rng,
    inst_id: str,
    image_id: str,
    class_id: int,
    object_name: str,
    object_vec: np.ndarray,
    signal: np.ndarray,
    active: np.ndarray,
    cfg: SynthConfig,
    with_boxes: bool,
) -> Instance:
    parts = rng.normal(0.0, 1.0, size=(N_PARTS, cfg.feature_dim)) * cfg.noise_std
    parts[active] += signal
    obj_feature = object_vec + 0.1 * rng.normal(size=cfg.object_feature_dim)
    return Instance(
        instance_id=inst_id,
        image_id=image_id,
        object_name=object_name,
        object_feature=obj_feature,
        parts=parts,
        gt_class_ids=(class_id,),
        human_box=HUMAN_BOX if with_boxes else None,
        object_box=OBJECT_BOX if with_boxes else None,
    )


def generate_benchmark(config: SynthConfig) -> SynthDataset:
    """Build the full synthetic dataset deterministically from the config seed."""
    n_obj = config.object_count()
    object_names = [f"object{j:02d}" for j in range(n_obj)]
    obj_rng = np.random.default_rng([config.seed, 10**9])
    object_vectors = {
        name: obj_rng.normal(size=config.object_feature_dim) for name in object_names
    }

    classes = []
    rows = {}
    active_parts = {}
    signals = {}
    train_instances = []
    test_instances = []
    gt_pairs = []
    for c in range(config.n_classes):
        rng = _class_rng(config.seed, c)
        rare = c < config.n_rare
        shots = config.shots_per_rare if rare else config.shots_per_common
        object_name = object_names[c % n_obj]
        classes.append(HoiClass(c, f"verb{c:02d}", object_name, shots))

        active = rng.random(N_PARTS) < config.rule_sparsity
        if not active.any():
            active[rng.integers(N_PARTS)] = True
        rows[c] = active.astype(np.float64)
        active_parts[c] = tuple(int(i) for i in np.flatnonzero(active))
        signal = rng.normal(size=config.feature_dim)
        signals[c] = signal

        for j in range(shots):
            train_instances.append(
                _make_instance(
                    rng,
                    inst_id=f"train-{c:03d}-{j:03d}",
                    image_id=f"train-img-{c:03d}-{j:03d}",
                    class_id=c,
                    object_name=object_name,
                    object_vec=object_vectors[object_name],
                    signal=signal,
                    active=active,
                    cfg=config,
                    with_boxes=False,
                )
            )
        for k in range(config.test_per_class):
            image_id = f"test-img-{c:03d}-{k:03d}"
            inst = _make_instance(
                rng,
                inst_id=f"test-{c:03d}-{k:03d}",
                image_id=image_id,
                class_id=c,
                object_name=object_name,
                object_vec=object_vectors[object_name],
                signal=signal,
                active=active,
                cfg=config,
                with_boxes=True,
            )
            test_instances.append(inst)
            gt_pairs.append(
                {
                    "image_id": image_id,
                    "class_id": c,
                    "human_box": list(HUMAN_BOX),
                    "object_box": list(OBJECT_BOX),
                }
            )

    return SynthDataset(
        config=config,
        table=ClassTable(classes),
        planted_rules=RuleMatrix(KIND_BOOLEAN, rows),
        train_instances=train_instances,
        test_instances=test_instances,
        gt_pairs=gt_pairs,
        active_parts=active_parts,
        signals=signals,
    )


def oracle_head_params(dataset: SynthDataset, scale: float = 1.0) -> HeadParams:
    """Head whose class rows read out the planted signal on active parts."""
    cfg = dataset.config
    n = len(dataset.table)
    w = np.zeros((n, N_PARTS, cfg.feature_dim))
    b = np.zeros(n)
    for i, c in enumerate(dataset.table.ids()):
        for p in dataset.active_parts[c]:
            w[i, p] = scale * dataset.signals[c]
    return HeadParams(class_ids=tuple(dataset.table.ids()), w=w, b=b)


def write_benchmark(dataset: SynthDataset, out_dir) -> dict[str, str]:
    """Write all artifact files; returns the path map."""
    import os

    from .attention import write_instances
    from .rules import save_rules
    from .taxonomy import save_class_table

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "classes": os.path.join(out_dir, "classes.csv"),
        "planted_rules": os.path.join(out_dir, "planted_rules.json"),
        "train_instances": os.path.join(out_dir, "train_instances.jsonl"),
        "test_instances": os.path.join(out_dir, "test_instances.jsonl"),
        "test_gt": os.path.join(out_dir, "test_gt.jsonl"),
        "meta": os.path.join(out_dir, "meta.json"),
    }
    save_class_table(dataset.table, paths["classes"])
    save_rules(dataset.planted_rules, paths["planted_rules"])
    write_instances(dataset.train_instances, paths["train_instances"])
    write_instances(dataset.test_instances, paths["test_instances"])
    with open(paths["test_gt"], "w", encoding="utf-8") as f:
        for g in dataset.gt_pairs:
            f.write(json.dumps(g) + "\n")
    meta = {
        "config": {
            "n_classes": dataset.config.n_classes,
            "n_rare": dataset.config.n_rare,
            "feature_dim": dataset.config.feature_dim,
            "object_feature_dim": dataset.config.object_feature_dim,
            "shots_per_rare": dataset.config.shots_per_rare,
            "shots_per_common": dataset.config.shots_per_common,
            "test_per_class": dataset.config.test_per_class,
            "noise_std": dataset.config.noise_std,
            "rule_sparsity": dataset.config.rule_sparsity,
            "n_objects": dataset.config.object_count(),
            "rarity_threshold": dataset.config.rarity_threshold,
            "seed": dataset.config.seed,
        },
        "active_parts": {str(c): list(v) for c, v in dataset.active_parts.items()},
        "signals": {str(c): [float(x) for x in v] for c, v in dataset.signals.items()},
    }
    with open(paths["meta"], "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    return paths
