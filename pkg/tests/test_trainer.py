import math

import numpy as np
import pytest

from heavytail.data import LongTailDataset, generate_balanced, generate_synthetic
from heavytail.model import dumps_checkpoint
from heavytail.sampler import SamplerSchedule
from heavytail.trainer import (
    ABLATION_ARMS,
    ConfigError,
    RunRecord,
    TrainConfig,
    arm_config,
    build_model,
    cosine_lr,
    train,
)


def small(seed=0):
    return generate_synthetic(4, 24, 6, 3, seed=seed)


def ckpt_text(model):
    return dumps_checkpoint({k: p.data for k, p in model.named_parameters().items()}, model.describe())


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(method="focal")
    with pytest.raises(ConfigError):
        TrainConfig(lr=-1.0)


def test_labels_and_components():
    base = TrainConfig()
    assert base.label == "ours"
    assert [arm_config(base, e, c, i).label for _, e, c, i in ABLATION_ARMS] == [a[0] for a in ABLATION_ARMS[:-1]] + ["ours"]
    assert TrainConfig(method="ros", eis=True).components == (False, False, False)


def test_cosine_lr_trace():
    ds = small()
    cfg = TrainConfig(epochs=7, lr=0.3, batch_size=16, method="baseline_ce")
    _, rec = train(ds, cfg)
    for e in rec.epochs:
        assert abs(e.lr - 0.3 * 0.5 * (1 + math.cos(math.pi * e.epoch / 7))) < 1e-12
    assert rec.epochs[0].lr == 0.3
    assert cosine_lr(1.0, 7, 7) == pytest.approx(0.0, abs=1e-15)


def test_eis_epoch_sizes_follow_schedule():
    ds = small()
    cfg = TrainConfig(epochs=6, batch_size=16)
    _, rec = train(ds, cfg)
    sched = SamplerSchedule.for_dataset(ds, 6)
    assert [e.threshold for e in rec.epochs] == [sched(e + 1) for e in range(6)]
    assert all(e.samples == ds.num_classes * e.threshold for e in rec.epochs)
    assert rec.epochs[-1].threshold == ds.n_max


def test_resampling_baselines_epoch_sizes():
    ds = small()
    _, ros = train(ds, TrainConfig(epochs=2, method="ros"))
    _, rus = train(ds, TrainConfig(epochs=2, method="rus"))
    _, ce = train(ds, TrainConfig(epochs=2, method="baseline_ce"))
    assert ros.epochs[0].samples == ds.num_classes * ds.n_max
    assert rus.epochs[0].samples == ds.num_classes * ds.n_min
    assert ce.epochs[0].samples == len(ds)
    assert ce.epochs[0].intra is None and ce.epochs[0].tau is None


def test_determinism():
    ds = small()
    cfg = TrainConfig(epochs=4, batch_size=8, seed=3)
    m1, r1 = train(ds, cfg)
    m2, r2 = train(ds, cfg)
    assert ckpt_text(m1) == ckpt_text(m2)
    assert r1.to_jsonl() == r2.to_jsonl()
    m3, _ = train(ds, TrainConfig(epochs=4, batch_size=8, seed=4))
    assert ckpt_text(m3) != ckpt_text(m1)


def test_shared_initialisation_across_arms():
    ds = small()
    base = TrainConfig(seed=5)
    models = [build_model(ds, arm_config(base, e, c, i)) for _, e, c, i in ABLATION_ARMS]
    ref = models[0].extractor.parameters()
    for m in models[1:]:
        assert all(np.array_equal(p.data, q.data) for p, q in zip(ref, m.extractor.parameters()))
        assert np.array_equal(models[0].head.weight.data, m.head.weight.data)


def test_single_class_run_is_trivially_correct():
    rng = np.random.default_rng(0)
    ds = LongTailDataset(rng.standard_normal((7, 3)), np.zeros(7, dtype=int), 1)
    model, rec = train(ds, TrainConfig(epochs=3, batch_size=4))
    assert rec.epochs[-1].inter is None and rec.epochs[-1].intra is not None
    assert np.all(model.predict(ds.features) == 0)


def test_balanced_toy_converges():
    ds = generate_balanced(3, 30, 4, seed=2, separation=4.0)
    model, rec = train(ds, TrainConfig(epochs=100, batch_size=16, lr=0.1, method="baseline_ce"))
    assert rec.epochs[-1].ce < 0.1
    assert np.mean(model.predict(ds.features) == ds.labels) > 0.95


def test_temperature_stays_finite_and_moves():
    ds = small()
    model, rec = train(ds, TrainConfig(epochs=10, batch_size=8))
    taus = [e.tau for e in rec.epochs]
    assert all(math.isfinite(t) for t in taus)
    assert taus[-1] != 1.0


def test_eis_rejects_empty_class():
    ds = LongTailDataset(np.zeros((3, 2)), [0, 0, 2], 3)
    with pytest.raises(ConfigError):
        train(ds, TrainConfig(epochs=1, iloss=False))


def test_run_record_round_trip(tmp_path):
    _, rec = train(small(), TrainConfig(epochs=3, batch_size=16))
    rec.checkpoint = "checkpoint.ckpt"
    rec.save(tmp_path / "r.jsonl")
    back = RunRecord.load(tmp_path / "r.jsonl")
    assert back == rec
    assert len((tmp_path / "r.jsonl").read_text().splitlines()) == 3
