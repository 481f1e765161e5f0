"""Run orchestration shared by the HTTP service and the CLI: owns the store,
launches training runs (optionally in background threads), and wires the
prototype-refining and self-training workflows."""

from __future__ import annotations

import json
import os
import threading
import uuid

import numpy as np

from . import selftrain, trainer
from .data import (Dataset, PrototypeSet, SyntheticSpec, generate_synthetic,
                   ingest_cifar10, replace_prototype, select_prototypes)
from .errors import DataError, SequencingError, ValidationError
from .presets import get_preset
from .store import Store
from .trainer import RunConfig, diagnose, read_dump


def config_from_preset(name: str, dataset_id: str, prototype_set_id: str,
                       overrides: dict = None) -> RunConfig:
    """RunConfig from a named preset plus flat overrides."""
    from .balance import BalanceConfig

    p = get_preset(name)
    base = {
        "dataset_id": dataset_id,
        "prototype_set_id": prototype_set_id,
        "balance": {"method": p["balance_method"], "tau": p["tau"],
                    "delta": p["delta"], "lambda_u": p["lambda_u"]},
        "batch_size": p["batch_size"],
        "unlabeled_ratio": p["unlabeled_ratio"],
        "learning_rate": p["learning_rate"],
        "momentum": p["momentum"],
        "weight_decay": p["weight_decay"],
    }
    for key, val in (overrides or {}).items():
        if key in ("method", "tau", "delta", "lambda_u"):
            base["balance"][key] = val
        else:
            base[key] = val
    return RunConfig.from_dict(base)


class Engine:
    def __init__(self, root):
        self.store = Store(root)
        self._datasets = {}
        self._lock = threading.Lock()
        self._stop_flags = {}
        self._threads = {}

    # datasets -----------------------------------------------------------

    def create_synthetic(self, spec: SyntheticSpec) -> str:
        ds = generate_synthetic(spec)
        self.store.save_dataset(ds)
        with self._lock:
            self._datasets[ds.id] = ds
        return ds.id

    def create_cifar10(self, paths) -> str:
        ds = ingest_cifar10(paths)
        self.store.save_dataset(ds)
        with self._lock:
            self._datasets[ds.id] = ds
        return ds.id

    def dataset(self, dataset_id) -> Dataset:
        with self._lock:
            if dataset_id not in self._datasets:
                self._datasets[dataset_id] = self.store.load_dataset(dataset_id)
            return self._datasets[dataset_id]

    # prototype sets -------------------------------------------------------

    def create_protoset(self, dataset_id, per_class_indices) -> str:
        proto = select_prototypes(self.dataset(dataset_id), per_class_indices)
        self.store.save_protoset(proto)
        return proto.set_id

    def replace_protoset(self, set_id, class_id, new_index) -> str:
        proto = self.store.load_protoset(set_id)
        ds = self.dataset(proto.dataset_id)
        if not 0 <= new_index < len(ds):
            raise ValidationError(f"index {new_index} out of range")
        newer = replace_prototype(proto, class_id, new_index)
        self.store.save_protoset(newer)
        return newer.set_id

    # runs ------------------------------------------------------------------

    def start_run(self, config: RunConfig, run_id=None, background=True,
                  lineage=None) -> str:
        run_id = run_id or f"run-{uuid.uuid4().hex[:8]}"
        run_dir = self.store.run_dir(run_id)
        os.makedirs(run_dir, exist_ok=True)
        summary = {"run_id": run_id, "state": "pending", "config": config.to_dict(),
                   "best_accuracy": None, "diagnosis": None,
                   "lineage": lineage or {"source_run": None,
                                          "prototype_set": config.prototype_set_id}}
        self.store.write_summary(run_id, summary)
        stop = threading.Event()
        self._stop_flags[run_id] = stop

        def work():
            try:
                dataset = self.dataset(config.dataset_id)
                protoset = self.store.load_protoset(config.prototype_set_id)
                summary["state"] = "running"
                self.store.write_summary(run_id, summary)
                result = trainer.train(dataset, protoset, config, run_dir=run_dir,
                                       stop_flag=stop.is_set)
            except Exception as exc:  # a failed run must still reach a terminal state
                summary["state"] = "diverged"
                summary["error"] = str(exc)
                self.store.write_summary(run_id, summary)
                return
            summary["state"] = result.state
            summary["best_accuracy"] = result.best_accuracy
            summary["steps_done"] = result.steps_done
            summary["diagnosis"] = diagnose(result.metrics).to_dict()
            self.store.write_summary(run_id, summary)

        if background:
            t = threading.Thread(target=work, daemon=True)
            self._threads[run_id] = t
            t.start()
        else:
            work()
        return run_id

    def stop_run(self, run_id) -> dict:
        summary = self.store.read_summary(run_id)  # raises on unknown id
        flag = self._stop_flags.get(run_id)
        if flag is not None:
            flag.set()
        return self.store.read_summary(run_id)

    def wait(self, run_id, timeout=None):
        t = self._threads.get(run_id)
        if t is not None:
            t.join(timeout)

    def summary(self, run_id) -> dict:
        return self.store.read_summary(run_id)

    def metrics(self, run_id, since_step=None):
        self.store.read_summary(run_id)
        return self.store.read_metrics(run_id, since_step)

    def run_dump(self, run_id) -> dict:
        dump_dir = os.path.join(self.store.run_dir(run_id), "dump")
        if not os.path.isdir(dump_dir):
            raise SequencingError(f"run {run_id} has no pseudo-label dump yet")
        return read_dump(dump_dir)

    # self-training -----------------------------------------------------------

    def self_train(self, run_id, k_per_class, overrides=None, background=True) -> str:
        """Promote top-k pseudo-labels from a completed run and launch the
        follow-up training run with self-training preset defaults."""
        summary = self.store.read_summary(run_id)
        if summary["state"] != "completed":
            raise SequencingError(f"run {run_id} is {summary['state']}, not completed")
        dump = self.run_dump(run_id)
        config = RunConfig.from_dict(summary["config"])
        protoset = self.store.load_protoset(config.prototype_set_id)
        dataset = self.dataset(config.dataset_id)

        plan = selftrain.build_plan(run_id, dump, k_per_class, protoset, dataset)
        new_set = selftrain.assemble_labeled_set(protoset, plan.promotions)
        self.store.save_protoset(new_set)

        new_config = config_from_preset("cifar-selftrain", config.dataset_id,
                                        new_set.set_id, overrides)
        # keep run-shape knobs from the source run unless overridden
        for key in ("total_kimg", "eval_interval", "precision", "hidden",
                    "count_mode", "count_ema_decay", "seed"):
            if not (overrides and key in overrides):
                setattr(new_config, key, getattr(config, key))
        # desk-scale pools are small; clamp the batch shape to stay feasible
        if new_config.mu > len(dataset.train_indices):
            new_config.batch_size = config.batch_size
            new_config.unlabeled_ratio = config.unlabeled_ratio

        new_id = self.start_run(new_config, background=background,
                                lineage={"source_run": run_id,
                                         "prototype_set": new_set.set_id,
                                         "k_per_class": k_per_class})
        plan_path = os.path.join(self.store.run_dir(new_id), "selftrain_plan.json")
        with open(plan_path, "w") as f:
            json.dump(selftrain.plan_to_dict(plan), f, indent=2)
        return new_id
