"""Plain run-directory persistence: datasets, prototype sets, and runs live
under one root directory as inspectable files (no database)."""

from __future__ import annotations

import json
import os

import numpy as np

from .data import Dataset, PrototypeSet, SyntheticSpec
from .errors import DataError


class Store:
    def __init__(self, root):
        self.root = str(root)
        for sub in ("datasets", "protosets", "runs"):
            os.makedirs(os.path.join(self.root, sub), exist_ok=True)

    # datasets ---------------------------------------------------------

    def dataset_dir(self, dataset_id):
        return os.path.join(self.root, "datasets", dataset_id)

    def save_dataset(self, ds: Dataset) -> None:
        d = self.dataset_dir(ds.id)
        os.makedirs(d, exist_ok=True)
        np.save(os.path.join(d, "images.npy"), ds.images)
        np.save(os.path.join(d, "labels.npy"), ds._true_labels)
        with open(os.path.join(d, "meta.json"), "w") as f:
            json.dump({"id": ds.id, "num_classes": ds.num_classes, "meta": ds.meta}, f, indent=2)

    def load_dataset(self, dataset_id) -> Dataset:
        d = self.dataset_dir(dataset_id)
        if not os.path.isdir(d):
            raise DataError(f"unknown dataset {dataset_id}")
        with open(os.path.join(d, "meta.json")) as f:
            meta = json.load(f)
        images = np.load(os.path.join(d, "images.npy"))
        labels = np.load(os.path.join(d, "labels.npy"))
        return Dataset(images, labels, meta["id"], meta["num_classes"], meta["meta"])

    def list_datasets(self):
        return sorted(os.listdir(os.path.join(self.root, "datasets")))

    # prototype sets ----------------------------------------------------

    def protoset_path(self, set_id):
        return os.path.join(self.root, "protosets", f"{set_id}.json")

    def save_protoset(self, proto: PrototypeSet) -> None:
        with open(self.protoset_path(proto.set_id), "w") as f:
            json.dump(proto.to_dict(), f, indent=2)

    def load_protoset(self, set_id) -> PrototypeSet:
        path = self.protoset_path(set_id)
        if not os.path.exists(path):
            raise DataError(f"unknown prototype set {set_id}")
        with open(path) as f:
            return PrototypeSet.from_dict(json.load(f))

    def list_protosets(self):
        return sorted(p[:-5] for p in os.listdir(os.path.join(self.root, "protosets"))
                      if p.endswith(".json"))

    # runs ---------------------------------------------------------------

    def run_dir(self, run_id):
        return os.path.join(self.root, "runs", run_id)

    def run_exists(self, run_id):
        return os.path.isdir(self.run_dir(run_id))

    def list_runs(self):
        return sorted(os.listdir(os.path.join(self.root, "runs")))

    def write_summary(self, run_id, summary: dict) -> None:
        path = os.path.join(self.run_dir(run_id), "summary.json")
        tmp = path + ".tmp"
        with open(tmp, "w") as f:
            json.dump(summary, f, indent=2)
        os.replace(tmp, path)

    def read_summary(self, run_id) -> dict:
        path = os.path.join(self.run_dir(run_id), "summary.json")
        if not os.path.exists(path):
            raise DataError(f"unknown run {run_id}")
        with open(path) as f:
            return json.load(f)

    def read_metrics(self, run_id, since_step: int = None):
        path = os.path.join(self.run_dir(run_id), "metrics.jsonl")
        records = []
        if not os.path.exists(path):
            return records
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if since_step is not None and rec.get("step", 0) <= since_step:
                    continue
                records.append(rec)
        return records
