import json
import os

import numpy as np
import pytest

from oneshot_ssl.augment import AugmentPolicy, rng_key, TAG_COMPOSE
from oneshot_ssl.balance import BalanceConfig
from oneshot_ssl.data import SyntheticSpec, generate_synthetic, select_prototypes
from oneshot_ssl.errors import ConfigError, DataError
from oneshot_ssl.nn import Classifier
from oneshot_ssl.trainer import (Diagnosis, RunConfig, RunMetrics,
                                 compose_batches, diagnose,
                                 dump_pseudo_labels, evaluate, read_dump,
                                 train)


@pytest.fixture(scope="module")
def small_dataset():
    ds = generate_synthetic(SyntheticSpec(3, 20, 12, 0.1, seed=5), "small")
    return ds


@pytest.fixture(scope="module")
def small_protoset(small_dataset):
    labels = small_dataset.true_labels_for(
        np.arange(len(small_dataset)), purpose="audit")
    train_set = set(small_dataset.train_indices.tolist())
    pcs = [[int(i) for i in np.flatnonzero(labels == c) if i in train_set][:1]
           for c in range(3)]
    return select_prototypes(small_dataset, pcs, "small-proto")


def small_config(**over):
    base = dict(dataset_id="small", prototype_set_id="small-proto",
                balance=BalanceConfig(0, 0.8, 0.0, 1.0),
                batch_size=4, unlabeled_ratio=4, total_kimg=1,
                learning_rate=0.02, momentum=0.88, weight_decay=5e-4,
                seed=11, eval_interval=10, precision="f32", hidden=32)
    base.update(over)
    return RunConfig(**base)


# ---------------------------------------------------------------- config math

def test_mu_and_total_steps():
    cfg = RunConfig("d", "p", batch_size=64, unlabeled_ratio=7, total_kimg=64)
    assert cfg.mu == 448
    assert cfg.total_steps == 128  # ceil(64*1024 / (64+448))
    cfg = RunConfig("d", "p", batch_size=30, unlabeled_ratio=9, total_kimg=64)
    assert cfg.mu == 270
    assert cfg.total_steps == 219  # ceil(65536 / 300)


def test_config_validation_and_round_trip():
    with pytest.raises(ConfigError):
        RunConfig("d", "p", precision="f16")
    with pytest.raises(ConfigError):
        RunConfig("d", "p", eval_interval=0)
    with pytest.raises(ConfigError):
        RunConfig("d", "p", unlabeled_ratio=0, batch_size=0)
    cfg = small_config()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- batches

def test_compose_batches_stratified():
    ds = generate_synthetic(SyntheticSpec(4, 10, 12, 0.0, seed=0), "d4")
    proto = select_prototypes(ds, [[0], [1], [2], [3]])
    rng = np.random.default_rng(0)
    lab_idx, lab_lab, unl = compose_batches(rng, proto, ds.train_indices, 8, 2, step=0)
    assert np.bincount(lab_lab, minlength=4).tolist() == [2, 2, 2, 2]
    assert len(unl) == 16
    assert len(set(unl.tolist())) == 16  # no replacement
    assert set(unl.tolist()) <= set(ds.train_indices.tolist())


def test_compose_batches_round_robin_over_class_slots():
    ds = generate_synthetic(SyntheticSpec(2, 20, 12, 0.0, seed=1), "d2")
    proto = select_prototypes(ds, [[0, 2, 4], [1]])
    rng = np.random.default_rng(0)
    # batch of 6 over 2 classes: class 0 cycles through its 3 prototypes
    lab_idx, lab_lab, _ = compose_batches(rng, proto, ds.train_indices, 6, 1, step=0)
    assert lab_idx[lab_lab == 0].tolist() == [0, 2, 4]
    assert lab_idx[lab_lab == 1].tolist() == [1, 1, 1]
    # the step offset rotates the cycle so later steps see other prototypes
    lab_idx, lab_lab, _ = compose_batches(rng, proto, ds.train_indices, 6, 1, step=1)
    assert lab_idx[lab_lab == 0].tolist() == [2, 4, 0]


def test_compose_batches_pool_too_small():
    ds = generate_synthetic(SyntheticSpec(2, 4, 12, 0.0, seed=2), "d8")
    proto = select_prototypes(ds, [[0], [1]])
    with pytest.raises(ConfigError):
        compose_batches(np.random.default_rng(0), proto, ds.train_indices, 8, 4)


def test_compose_batches_deterministic_under_key():
    ds = generate_synthetic(SyntheticSpec(2, 20, 12, 0.0, seed=3), "dd")
    proto = select_prototypes(ds, [[0], [1]])
    a = compose_batches(rng_key(7, TAG_COMPOSE, 0, 5), proto, ds.train_indices, 4, 2, 5)
    b = compose_batches(rng_key(7, TAG_COMPOSE, 0, 5), proto, ds.train_indices, 4, 2, 5)
    assert np.array_equal(a[2], b[2])


# ---------------------------------------------------------------- evaluate

class StubModel:
    def __init__(self, preds, n):
        self.preds = np.asarray(preds)
        self.num_classes = n

    def predict_probs(self, x):
        probs = np.zeros((len(x), self.num_classes))
        probs[np.arange(len(x)), self.preds[:len(x)]] = 1.0
        self.preds = self.preds[len(x):]
        return probs


def test_evaluate_is_mean_of_per_class():
    labels = np.array([0, 0, 0, 0, 1])  # imbalanced split
    preds = np.array([0, 0, 1, 1, 1])   # class 0: 50%, class 1: 100%
    acc, per_class = evaluate(StubModel(preds, 2), np.zeros((5, 1, 4, 4)), labels)
    assert abs(acc - 0.75) < 1e-12
    assert np.allclose(per_class, [0.5, 1.0])


def test_evaluate_empty_split():
    with pytest.raises(DataError):
        evaluate(StubModel([], 2), np.zeros((0, 1, 4, 4)), np.zeros(0, dtype=int))


# ---------------------------------------------------------------- dumps

def test_dump_sorted_and_round_trips(small_dataset, tmp_path):
    model = Classifier(3, 12, 3, hidden=16, seed=9)
    pool = small_dataset.train_indices
    dump_pseudo_labels(model, small_dataset, pool, seed=4, out_dir=tmp_path)
    d = read_dump(tmp_path)
    assert len(d["confidences"]) == len(pool)
    # confidence descending, pool index ascending on ties
    conf, idx = d["confidences"], d["pool_indices"]
    for i in range(len(conf) - 1):
        assert conf[i] > conf[i + 1] or (conf[i] == conf[i + 1] and idx[i] < idx[i + 1])
    assert sorted(idx.tolist()) == sorted(pool.tolist())
    assert d["pseudo_labels"].max() < 3
    truth = small_dataset.true_labels_for(idx, purpose="audit")
    assert np.array_equal(d["true_labels"], truth)


def test_dump_deterministic(small_dataset, tmp_path):
    model = Classifier(3, 12, 3, hidden=16, seed=9)
    pool = small_dataset.train_indices
    d1, d2 = tmp_path / "a", tmp_path / "b"
    dump_pseudo_labels(model, small_dataset, pool, 4, d1)
    dump_pseudo_labels(model, small_dataset, pool, 4, d2)
    for name in ("pseudo_labels.bin", "confidences.bin", "true_labels.bin",
                 "pool_indices.bin"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_dump_truncated_file_rejected(small_dataset, tmp_path):
    model = Classifier(3, 12, 3, hidden=16, seed=9)
    dump_pseudo_labels(model, small_dataset, small_dataset.train_indices, 4, tmp_path)
    path = tmp_path / "confidences.bin"
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DataError):
        read_dump(tmp_path)


# ---------------------------------------------------------------- diagnosis

def metrics_from_series(accs, per_class_final):
    m = RunMetrics()
    for i, a in enumerate(accs):
        rec = {"type": "eval", "step": i, "accuracy": a / 100.0,
               "per_class": [p / 100.0 for p in per_class_final] if i == len(accs) - 1
               else [a / 100.0] * len(per_class_final)}
        m.add_eval(rec)
    return m


def test_diagnose_undetermined_too_short():
    m = metrics_from_series([50, 60, 70], [70, 70, 70, 70])
    assert diagnose(m).verdict == "undetermined"


def test_diagnose_healthy_monotone():
    accs = list(np.linspace(40, 92, 14))
    d = diagnose(metrics_from_series(accs, [92, 91, 93, 92]))
    assert d.verdict == "healthy"
    assert d.max_drop <= 15.0


def test_diagnose_instability_collapse():
    # climbs past 80 then falls to 65: a >15 point drop from the running max
    accs = [40, 55, 68, 75, 80, 82, 81, 70, 65, 65, 66, 65]
    d = diagnose(metrics_from_series(accs, [65, 66, 64, 65]))
    assert d.verdict == "instability"
    assert d.max_drop > 15.0
    assert ("lambda_u", "decrease") in d.suggestions
    assert ("tau", "increase") in d.suggestions


def test_diagnose_local_minimum_plateau_with_weak_class():
    # long plateau at 77 and one class far behind the rest
    accs = [40, 55, 65, 72, 76, 77, 77, 76, 77, 77, 76, 77]
    d = diagnose(metrics_from_series(accs, [90, 88, 91, 39]))
    assert d.verdict == "local-minimum"
    assert d.weak_classes == [3]
    assert ("lambda_u", "increase") in d.suggestions
    assert ("prototypes", "refine-weak-classes") in d.suggestions


def test_diagnose_plateau_without_weak_class_is_healthy():
    accs = [40, 55, 65, 72, 76, 77, 77, 76, 77, 77, 76, 77]
    d = diagnose(metrics_from_series(accs, [78, 76, 77, 77]))
    assert d.verdict == "healthy"


# ---------------------------------------------------------------- training

def test_train_writes_artifacts_and_is_deterministic(small_dataset, small_protoset, tmp_path):
    cfg = small_config()
    r1 = train(small_dataset, small_protoset, cfg, run_dir=str(tmp_path / "r1"))
    r2 = train(small_dataset, small_protoset, cfg, run_dir=str(tmp_path / "r2"))
    assert r1.state == "completed"
    assert r1.steps_done == cfg.total_steps
    for name, p in r1.model.params().items():
        assert np.array_equal(p, r2.model.params()[name]), name
    assert [s["l"] for s in r1.metrics.steps] == [s["l"] for s in r2.metrics.steps]
    run = tmp_path / "r1"
    assert (run / "config.json").exists()
    assert (run / "checkpoints" / "best.ckpt").exists()
    assert (run / "checkpoints" / "last.ckpt").exists()
    assert (run / "diagnosis.json").exists()
    assert (run / "dump" / "confidences.bin").exists()
    lines = [json.loads(l) for l in (run / "metrics.jsonl").read_text().splitlines()]
    assert sum(1 for l in lines if l["type"] == "step") == cfg.total_steps
    evals = [l for l in lines if l["type"] == "eval"]
    assert evals and all("per_class" in e and "thresholds" in e for e in evals)


def test_train_memorizes_prototypes_supervised_only(small_dataset, small_protoset):
    # with lambda_u = 0 the labeled objective should be driven near zero
    cfg = small_config(balance=BalanceConfig(0, 0.8, 0.0, 0.0))
    res = train(small_dataset, small_protoset, cfg)
    first = np.mean([s["ls"] for s in res.metrics.steps[:5]])
    last = np.mean([s["ls"] for s in res.metrics.steps[-5:]])
    assert last < first * 0.5
    assert last < 0.2


def test_lambda_zero_removes_unlabeled_influence(small_dataset, small_protoset):
    # with lambda_u = 0, changing the strong augmentation cannot move the
    # parameters: the unlabeled gradient is scaled to exact zeros
    cfg_a = small_config(balance=BalanceConfig(0, 0.8, 0.0, 0.0))
    cfg_b = small_config(balance=BalanceConfig(0, 0.8, 0.0, 0.0),
                         strong_policy=AugmentPolicy(kind="strong", ops_per_sample=4,
                                                     cutout_fraction=0.25))
    ra = train(small_dataset, small_protoset, cfg_a)
    rb = train(small_dataset, small_protoset, cfg_b)
    for name, p in ra.model.params().items():
        assert np.array_equal(p, rb.model.params()[name]), name


def test_train_stop_flag(small_dataset, small_protoset):
    calls = {"n": 0}

    def stop():
        calls["n"] += 1
        return calls["n"] > 3

    res = train(small_dataset, small_protoset, small_config(), stop_flag=stop)
    assert res.state == "stopped"
    assert res.steps_done < small_config().total_steps


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_preserves_partial_metrics(small_dataset, small_protoset, tmp_path):
    # an absurd learning rate blows the activations up to non-finite values
    cfg = small_config(learning_rate=1e18, eval_interval=1)
    res = train(small_dataset, small_protoset, cfg, run_dir=str(tmp_path))
    assert res.state == "diverged"
    assert len(res.metrics.steps) >= 1
    assert any(e["event"] == "divergence" for e in res.metrics.events)
    assert (tmp_path / "checkpoints" / "last.ckpt").exists()
    assert not (tmp_path / "dump").exists()


def test_warmup_ignores_balancing(small_dataset, small_protoset):
    # during the first epoch-equivalent, method 4 must behave exactly like
    # method 0 (flat thresholds, unit weights)
    cfg0 = small_config(total_kimg=1)
    cfg4 = small_config(total_kimg=1, balance=BalanceConfig(4, 0.8, 0.25, 1.0))
    import math
    warmup = math.ceil(len(small_dataset.train_indices) / cfg0.mu)
    r0 = train(small_dataset, small_protoset, cfg0)
    r4 = train(small_dataset, small_protoset, cfg4)
    for a, b in zip(r0.metrics.steps[:warmup], r4.metrics.steps[:warmup]):
        assert a["l"] == b["l"]
