"""HTTP facade over the engine: datasets, prototype refining, runs, and
self-training, as consumed by the browser workbench."""

from __future__ import annotations

import base64
import io
import os

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from PIL import Image
from pydantic import BaseModel

from .data import SyntheticSpec
from .engine import Engine, config_from_preset
from .errors import (ConfigError, DataError, EngineError, SequencingError,
                     ValidationError)
from .trainer import RunConfig


class SyntheticRequest(BaseModel):
    num_classes: int = 4
    samples_per_class: int = 250
    image_size: int = 16
    difficulty: float = 0.0
    seed: int = 0


class Cifar10Request(BaseModel):
    paths: list[str]


class ProtosetRequest(BaseModel):
    dataset_id: str
    per_class_indices: list[list[int]]


class ReplaceRequest(BaseModel):
    class_id: int
    index: int


class RunRequest(BaseModel):
    dataset_id: str
    prototype_set_id: str
    preset: str | None = None
    overrides: dict = {}


class SelfTrainRequest(BaseModel):
    k_per_class: int = 5
    overrides: dict = {}


def _png_b64(img_chw: np.ndarray) -> str:
    arr = np.clip(np.asarray(img_chw) * 255.0, 0, 255).astype(np.uint8)
    pil = Image.fromarray(arr.transpose(1, 2, 0))
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(root=None) -> FastAPI:
    root = root or os.environ.get("ONESHOT_SSL_ROOT", "./oneshot-ssl-root")
    engine = Engine(root)
    app = FastAPI(title="one-shot ssl workbench")
    app.state.engine = engine

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DataError as exc:
            raise HTTPException(404, str(exc))
        except SequencingError as exc:
            raise HTTPException(409, str(exc))
        except (ValidationError, ConfigError) as exc:
            raise HTTPException(422, str(exc))

    @app.post("/datasets/synthetic")
    def make_synthetic(req: SyntheticRequest):
        spec = guard(SyntheticSpec, **req.model_dump())
        return {"dataset_id": guard(engine.create_synthetic, spec)}

    @app.post("/datasets/cifar10")
    def make_cifar10(req: Cifar10Request):
        for p in req.paths:
            if not os.path.exists(p):
                raise HTTPException(404, f"no such file {p}")
        try:
            return {"dataset_id": engine.create_cifar10(req.paths)}
        except EngineError as exc:
            raise HTTPException(422, str(exc))

    @app.get("/datasets/{dataset_id}/samples")
    def samples(dataset_id: str, offset: int = 0, limit: int = 24,
                unlabeled: bool = True, audit: bool = False):
        ds = guard(engine.dataset, dataset_id)
        pool = ds.train_indices if unlabeled else np.arange(len(ds))
        window = pool[offset:offset + limit]
        out = []
        truths = ds.true_labels_for(window, purpose="audit") if audit else None
        for j, idx in enumerate(window):
            rec = {"index": int(idx), "thumbnail": _png_b64(ds.images[idx])}
            if audit:
                rec["true_label"] = int(truths[j])
            out.append(rec)
        return {"total": int(len(pool)), "offset": offset, "samples": out}

    @app.post("/prototype-sets")
    def make_protoset(req: ProtosetRequest):
        return {"set_id": guard(engine.create_protoset, req.dataset_id,
                                req.per_class_indices)}

    @app.get("/prototype-sets/{set_id}")
    def get_protoset(set_id: str):
        return guard(engine.store.load_protoset, set_id).to_dict()

    @app.post("/prototype-sets/{set_id}/replace")
    def replace(set_id: str, req: ReplaceRequest):
        return {"set_id": guard(engine.replace_protoset, set_id,
                                req.class_id, req.index)}

    @app.post("/runs")
    def start_run(req: RunRequest):
        if req.preset:
            config = guard(config_from_preset, req.preset, req.dataset_id,
                           req.prototype_set_id, req.overrides)
        else:
            body = dict(req.overrides)
            body["dataset_id"] = req.dataset_id
            body["prototype_set_id"] = req.prototype_set_id
            config = guard(RunConfig.from_dict, body)
        guard(engine.store.load_protoset, config.prototype_set_id)
        guard(engine.dataset, config.dataset_id)
        return {"run_id": engine.start_run(config)}

    @app.get("/runs/{run_id}")
    def run_summary(run_id: str):
        return guard(engine.summary, run_id)

    @app.get("/runs/{run_id}/metrics")
    def run_metrics(run_id: str, since: int = Query(default=None)):
        return {"records": guard(engine.metrics, run_id, since)}

    @app.get("/runs/{run_id}/class-accuracies")
    def class_accuracies(run_id: str):
        evals = [r for r in guard(engine.metrics, run_id) if r["type"] == "eval"]
        latest = evals[-1] if evals else None
        return {
            "latest": None if latest is None else
            {"step": latest["step"], "accuracy": latest["accuracy"],
             "per_class": latest["per_class"]},
            "history": [{"step": e["step"], "accuracy": e["accuracy"],
                         "per_class": e["per_class"]} for e in evals],
        }

    @app.get("/runs/{run_id}/class-counts")
    def class_counts(run_id: str):
        evals = [r for r in guard(engine.metrics, run_id) if r["type"] == "eval"]
        if not evals:
            return {"counts": None, "confident_counts": None, "thresholds": None}
        latest = evals[-1]
        return {"counts": latest["class_counts"]["counts"],
                "confident_counts": latest["class_counts"]["confident_counts"],
                "thresholds": latest["thresholds"]}

    @app.get("/runs/{run_id}/diagnosis")
    def run_diagnosis(run_id: str):
        summary = guard(engine.summary, run_id)
        return summary.get("diagnosis") or {"verdict": "undetermined",
                                            "suggestions": []}

    @app.get("/runs/{run_id}/pseudo-labels")
    def pseudo_labels(run_id: str, top: int = 10, cls: int = Query(default=None, alias="class")):
        dump = guard(engine.run_dump, run_id)
        out = []
        for label, conf, idx in zip(dump["pseudo_labels"], dump["confidences"],
                                    dump["pool_indices"]):
            if cls is not None and int(label) != cls:
                continue
            out.append({"pool_index": int(idx), "pseudo_label": int(label),
                        "confidence": float(conf)})
            if len(out) >= top:
                break
        return {"records": out}

    @app.post("/runs/{run_id}/self-train")
    def self_train(run_id: str, req: SelfTrainRequest):
        return {"run_id": guard(engine.self_train, run_id, req.k_per_class,
                                req.overrides)}

    @app.post("/runs/{run_id}/stop")
    def stop(run_id: str):
        summary = guard(engine.stop_run, run_id)
        return {"run_id": run_id, "state": summary["state"]}

    return app
