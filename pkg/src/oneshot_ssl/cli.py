"""Command-line mirror of the HTTP API.

Exit codes: 0 success, 2 validation/config error, 3 diverged run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import SyntheticSpec
from .engine import Engine, config_from_preset
from .errors import (EngineError, ValidationError, ConfigError, DataError,
                     FormatError, SequencingError)
from .nn import load_checkpoint, Classifier
from .presets import get_preset
from .trainer import RunConfig, diagnose, evaluate, dump_pseudo_labels, RunMetrics

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3


def _root(args):
    return args.root or os.environ.get("ONESHOT_SSL_ROOT", "./oneshot-ssl-root")


def _load_config(args, engine) -> RunConfig:
    body = {}
    if args.config:
        with open(args.config) as f:
            body = json.load(f)
    if args.dataset:
        body["dataset_id"] = args.dataset
    if args.protoset:
        body["prototype_set_id"] = args.protoset
    overrides = dict(body.pop("overrides", {}))
    for key in ("seed", "total_kimg", "eval_interval", "batch_size",
                "unlabeled_ratio", "learning_rate", "weight_decay", "momentum"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            overrides[key] = val
    if args.balance is not None:
        overrides["method"] = args.balance
    if args.preset:
        return config_from_preset(args.preset, body["dataset_id"],
                                  body["prototype_set_id"], {**body, **overrides})
    body.update(overrides)
    return RunConfig.from_dict(body)


def _add_train_flags(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help="named hyper-parameter preset")
    p.add_argument("--dataset", help="dataset id")
    p.add_argument("--protoset", help="prototype set id")
    p.add_argument("--balance", type=int, help="balance method 0-4")
    p.add_argument("--seed", type=int)
    p.add_argument("--total-kimg", dest="total_kimg", type=int)
    p.add_argument("--eval-interval", dest="eval_interval", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--unlabeled-ratio", dest="unlabeled_ratio", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--momentum", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="oneshot-ssl")
    parser.add_argument("--root", help="run-root directory (env ONESHOT_SSL_ROOT)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=250)
    p.add_argument("--image-size", type=int, default=16)
    p.add_argument("--difficulty", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest-cifar10", help="ingest CIFAR-10 binary batches")
    p.add_argument("paths", nargs="+")

    p = sub.add_parser("protoset", help="manage prototype sets")
    psub = p.add_subparsers(dest="action", required=True)
    pc = psub.add_parser("create")
    pc.add_argument("--dataset", required=True)
    pc.add_argument("--indices", required=True,
                    help="JSON per-class index lists, e.g. [[3],[17],[42],[8]]")
    pr = psub.add_parser("replace")
    pr.add_argument("set_id")
    pr.add_argument("--class", dest="class_id", type=int, required=True)
    pr.add_argument("--index", type=int, required=True)
    psub.add_parser("list")

    p = sub.add_parser("train", help="run training synchronously")
    _add_train_flags(p)
    p.add_argument("--run-id")

    p = sub.add_parser("eval", help="evaluate a run checkpoint on the test split")
    p.add_argument("run_id")
    p.add_argument("--checkpoint", default="best", choices=["best", "last"])

    p = sub.add_parser("dump", help="re-dump sorted pseudo-labels from a checkpoint")
    p.add_argument("run_id")
    p.add_argument("--checkpoint", default="last", choices=["best", "last"])
    p.add_argument("--out", help="output directory (default: run's dump/)")

    p = sub.add_parser("diagnose", help="classify a run's trajectory")
    p.add_argument("run_id")

    p = sub.add_parser("self-train", help="promote top-k pseudo-labels and retrain")
    p.add_argument("run_id")
    p.add_argument("-k", "--k-per-class", type=int, default=5)
    p.add_argument("--overrides", help="JSON config overrides")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)

    return parser


def _rebuild_model(engine, run_id, which):
    summary = engine.summary(run_id)
    config = RunConfig.from_dict(summary["config"])
    dataset = engine.dataset(config.dataset_id)
    c, h, _ = dataset.image_shape
    model = Classifier(in_channels=c, image_size=h, num_classes=dataset.num_classes,
                       hidden=config.hidden, seed=config.seed, dtype=config.dtype)
    ckpt = os.path.join(engine.store.run_dir(run_id), "checkpoints", f"{which}.ckpt")
    if not os.path.exists(ckpt):
        raise SequencingError(f"run {run_id} has no {which} checkpoint")
    model.set_params(load_checkpoint(ckpt))
    return model, dataset, config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    engine = Engine(_root(args))
    try:
        if args.cmd == "gen-data":
            spec = SyntheticSpec(num_classes=args.classes, samples_per_class=args.per_class,
                                 image_size=args.image_size, difficulty=args.difficulty,
                                 seed=args.seed)
            print(engine.create_synthetic(spec))

        elif args.cmd == "ingest-cifar10":
            print(engine.create_cifar10(args.paths))

        elif args.cmd == "protoset":
            if args.action == "create":
                print(engine.create_protoset(args.dataset, json.loads(args.indices)))
            elif args.action == "replace":
                print(engine.replace_protoset(args.set_id, args.class_id, args.index))
            else:
                for s in engine.store.list_protosets():
                    print(s)

        elif args.cmd == "train":
            config = _load_config(args, engine)
            run_id = engine.start_run(config, run_id=args.run_id, background=False)
            summary = engine.summary(run_id)
            print(json.dumps({"run_id": run_id, "state": summary["state"],
                              "best_accuracy": summary.get("best_accuracy")}))
            if summary["state"] == "diverged":
                return EXIT_DIVERGED

        elif args.cmd == "eval":
            model, dataset, _ = _rebuild_model(engine, args.run_id, args.checkpoint)
            labels = dataset.true_labels_for(dataset.test_indices, purpose="evaluate")
            acc, per_class = evaluate(model, dataset.images[dataset.test_indices], labels)
            print(json.dumps({"accuracy": acc, "per_class": per_class.tolist()}))

        elif args.cmd == "dump":
            model, dataset, config = _rebuild_model(engine, args.run_id, args.checkpoint)
            out = args.out or os.path.join(engine.store.run_dir(args.run_id), "dump")
            dump_pseudo_labels(model, dataset, dataset.train_indices, config.seed,
                               out, config.weak_policy)
            print(out)

        elif args.cmd == "diagnose":
            metrics = RunMetrics()
            for rec in engine.metrics(args.run_id):
                if rec["type"] == "eval":
                    metrics.add_eval(dict(rec))
            diag = diagnose(metrics)
            print(json.dumps(diag.to_dict()))

        elif args.cmd == "self-train":
            overrides = json.loads(args.overrides) if args.overrides else {}
            new_id = engine.self_train(args.run_id, args.k_per_class, overrides,
                                       background=False)
            summary = engine.summary(new_id)
            print(json.dumps({"run_id": new_id, "state": summary["state"],
                              "best_accuracy": summary.get("best_accuracy")}))
            if summary["state"] == "diverged":
                return EXIT_DIVERGED

        elif args.cmd == "serve":
            import uvicorn
            from .service import create_app
            uvicorn.run(create_app(_root(args)), host=args.host, port=args.port)

    except (ValidationError, ConfigError, DataError, FormatError,
            SequencingError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
