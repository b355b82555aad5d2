"""Local HTTP facade for the rule-tuning workbench.

Holds one session: a class table, a scored dataset, fixed model
parameters, and named rule-matrix variants (original / decimal /
boolean / custom). Rule edits apply to the custom variant only and are
serialized behind a lock; every edit bumps a revision id. Evaluation is
pure, so reports are cached by (variant, revision, setting) and a report
is always tagged with the revision that produced it.
"""

from __future__ import annotations

import logging
import threading
from collections import OrderedDict

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .errors import EngineError
from .evaluation import SETTINGS, load_gt
from .pipeline import evaluate_scored_instances
from .rules import (
    KIND_BOOLEAN,
    KIND_DECIMAL,
    RuleMatrix,
    all_ones,
    booleanize,
    ensure_coverage,
    load_rules,
    rules_to_dict,
    save_rules,
)
from .taxonomy import PART_NAMES, load_class_table, partition_by_rarity
from .training import load_checkpoint

log = logging.getLogger("rbp.service")

VARIANTS = ("original", "decimal", "boolean", "custom")
CACHE_LIMIT = 64


class SessionState:
    def __init__(
        self,
        table,
        partition,
        instances,
        gts,
        params,
        rules: RuleMatrix | None = None,
        fusion: str = "mean",
        iou_thresh: float = 0.5,
        save_path=None,
    ):
        self.table = table
        self.partition = partition
        self.instances = instances
        self.gts = gts
        self.params = params
        self.fusion = fusion
        self.iou_thresh = iou_thresh
        self.save_path = save_path
        self.variants: dict[str, RuleMatrix] = {"original": all_ones(table)}
        if rules is not None:
            rules = ensure_coverage(rules, table, partition)
            if rules.kind == KIND_DECIMAL:
                self.variants["decimal"] = rules
                self.variants["boolean"] = booleanize(rules)
            elif rules.kind == KIND_BOOLEAN:
                self.variants["boolean"] = rules
            else:
                pass  # all-ones input adds nothing beyond the original variant
        self.variants["custom"] = RuleMatrix(
            KIND_DECIMAL, self.variants["original"].rows()
        )
        self.revision = 0
        self.lock = threading.Lock()
        self._report_cache: OrderedDict = OrderedDict()

    @classmethod
    def load(
        cls,
        classes_path,
        instances_path,
        gt_path,
        params_path,
        rules_path=None,
        rarity_threshold: int = 10,
        fusion: str = "mean",
        iou_thresh: float = 0.5,
        save_path=None,
    ) -> "SessionState":
        from .attention import load_instances

        table = load_class_table(classes_path)
        partition = partition_by_rarity(table, rarity_threshold)
        params, _, _ = load_checkpoint(params_path)
        rules = load_rules(rules_path) if rules_path else None
        return cls(
            table,
            partition,
            load_instances(instances_path),
            load_gt(gt_path),
            params,
            rules=rules,
            fusion=fusion,
            iou_thresh=iou_thresh,
            save_path=save_path,
        )

    def variant_revision(self, variant: str) -> int:
        return self.revision if variant == "custom" else 0

    def report_for(self, variant: str, setting: str):
        """Cached evaluation of one variant at its current revision."""
        with self.lock:
            matrix = self.variants[variant]
            revision = self.variant_revision(variant)
            key = (variant, revision, setting)
            cached = self._report_cache.get(key)
        if cached is not None:
            return revision, cached
        report = evaluate_scored_instances(
            self.instances,
            self.gts,
            self.params,
            matrix,
            self.table,
            self.partition,
            setting=setting,
            fusion=self.fusion,
            iou_thresh=self.iou_thresh,
        )
        payload = report.to_dict()
        with self.lock:
            self._report_cache[key] = payload
            while len(self._report_cache) > CACHE_LIMIT:
                self._report_cache.popitem(last=False)
        return revision, payload


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


async def _json_body(request: Request):
    try:
        body = await request.json()
    except Exception:
        return None
    return body if isinstance(body, dict) else None


def create_app(state: SessionState, ui_dir=None) -> FastAPI:
    app = FastAPI(title="rule workbench service")

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "revision": state.revision,
            "variants": [v for v in VARIANTS if v in state.variants],
        }

    @app.get("/api/classes")
    def classes():
        return {
            "rarity_threshold": state.partition.threshold,
            "parts": list(PART_NAMES),
            "classes": [
                {
                    "class_id": c.class_id,
                    "verb": c.verb,
                    "object": c.object,
                    "train_count": c.train_count,
                    "rare": state.partition.is_rare(c.class_id),
                }
                for c in state.table
            ],
        }

    @app.get("/api/rules/{variant}")
    def get_rules(variant: str):
        if variant not in state.variants:
            return _error(404, f"unknown rules variant {variant!r}")
        with state.lock:
            payload = rules_to_dict(state.variants[variant])
            revision = state.variant_revision(variant)
        payload["revision"] = revision
        return payload

    @app.patch("/api/rules/custom/{class_id}")
    async def patch_custom(class_id: int, request: Request):
        body = await _json_body(request)
        if body is None:
            return _error(400, "body must be a JSON object")
        part = body.get("part")
        weight = body.get("weight")
        if not isinstance(part, str) or part not in PART_NAMES:
            return _error(400, f"part must be one of {list(PART_NAMES)}")
        if not isinstance(weight, (int, float)) or isinstance(weight, bool):
            return _error(400, "weight must be a number")
        if not (0.0 <= float(weight) <= 1.0):
            return _error(422, f"weight {weight} outside [0, 1]")
        if class_id not in state.table:
            return _error(404, f"unknown class_id {class_id}")
        with state.lock:
            state.variants["custom"] = state.variants["custom"].with_weight(
                class_id, part, float(weight)
            )
            state.revision += 1
            revision = state.revision
        return {"revision": revision}

    @app.post("/api/evaluate")
    async def evaluate_variant(request: Request):
        body = await _json_body(request)
        if body is None:
            return _error(400, "body must be a JSON object")
        variant = body.get("variant")
        setting = body.get("setting", "default")
        if not isinstance(variant, str):
            return _error(400, "variant must be a string")
        if variant not in state.variants:
            return _error(404, f"unknown rules variant {variant!r}")
        if setting not in SETTINGS:
            return _error(400, f"setting must be one of {list(SETTINGS)}")
        requested = body.get("revision")
        if requested is not None:
            if not isinstance(requested, int):
                return _error(400, "revision must be an integer")
            if requested != state.variant_revision(variant):
                return _error(
                    409,
                    f"revision {requested} is stale; current is "
                    f"{state.variant_revision(variant)}",
                )
        revision, report = state.report_for(variant, setting)
        if requested is not None and revision != state.variant_revision(variant):
            return _error(409, f"revision {revision} went stale during evaluation")
        return {"variant": variant, "setting": setting, "revision": revision, "report": report}

    @app.get("/api/diff")
    def diff(a: str = "original", b: str = "custom", setting: str = "default"):
        for name in (a, b):
            if name not in state.variants:
                return _error(404, f"unknown rules variant {name!r}")
        if setting not in SETTINGS:
            return _error(400, f"setting must be one of {list(SETTINGS)}")
        rev_a, report_a = state.report_for(a, setting)
        rev_b, report_b = state.report_for(b, setting)
        ids = sorted(
            set(report_a["per_class_ap"]) | set(report_b["per_class_ap"]), key=int
        )
        per_class = {}
        for cid in ids:
            ap_a = report_a["per_class_ap"].get(cid)
            ap_b = report_b["per_class_ap"].get(cid)
            per_class[cid] = None if ap_a is None or ap_b is None else ap_b - ap_a

        def _delta(key):
            if report_a[key] is None or report_b[key] is None:
                return None
            return report_b[key] - report_a[key]

        return {
            "setting": setting,
            "a": a,
            "b": b,
            "a_revision": rev_a,
            "b_revision": rev_b,
            "per_class_delta": per_class,
            "map_full_delta": _delta("map_full"),
            "map_rare_delta": _delta("map_rare"),
            "map_nonrare_delta": _delta("map_nonrare"),
        }

    @app.post("/api/rules/custom/save")
    async def save_custom(request: Request):
        body = await _json_body(request)
        if body is None:
            body = {}
        path = body.get("path") or state.save_path
        if not path:
            return _error(400, "no save path configured; pass {\"path\": ...}")
        with state.lock:
            matrix = state.variants["custom"]
            revision = state.revision
        save_rules(matrix, path)
        return {"path": str(path), "revision": revision}

    @app.exception_handler(EngineError)
    async def engine_error(_request, exc: EngineError):
        log.warning("engine error: %s", exc)
        return JSONResponse({"error": str(exc), "code": exc.code}, status_code=400)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="workbench")

    return app
