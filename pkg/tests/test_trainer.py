import numpy as np
import pytest

from compass import losses as L
from compass.masking import MaskConfig
from compass.modalities import ModalitySet
from compass.model import CompassModel, ModelConfig
from compass.numerics import ScheduleConfig, checkpoint, forward_backward, lr_at
from compass.synthdata import DatasetSpec, generate
from compass.trainer import (
    LOG_COLUMNS,
    TrainConfig,
    TrainingDiverged,
    loss_parts,
    read_log,
    train,
)


def small_setup(seed=0, n_classes=2, snr=5.0, per_class=32):
    spec = DatasetSpec(
        n_classes=n_classes, raw_dims=(8, 8, 8), snr=(snr,) * 3, seed=seed,
        train_per_class=per_class, val_per_class=8, test_per_class=8,
    )
    cfg = ModelConfig(raw_dims=(8, 8, 8), n_classes=n_classes, tokens=4, dim=16, heads=2, enc_hidden=16, seed=seed)
    return generate(spec), cfg


def test_task_loss_decreases_within_one_epoch():
    data, mcfg = small_setup(per_class=96)
    res = train(data, CompassModel(mcfg), TrainConfig(epochs=1, batch_size=16, warmup_epochs=0, base_lr=3e-3), mask_config=MaskConfig(3, 0.0))
    first, last = res.records[0].L_task, res.records[-1].L_task
    assert last < first


def test_alignment_improves_under_full_masking():
    data, mcfg = small_setup(seed=1)
    cfg = TrainConfig(epochs=10, batch_size=16, warmup_epochs=1, base_lr=3e-3, track_alignment=True)
    res = train(data, CompassModel(mcfg), cfg, L.LossWeights(lambda_a=1.0), MaskConfig(3, 1.0))
    mse = {h["epoch"]: h["align_mse"] for h in res.history}
    assert mse[9] < mse[0]


def test_same_seed_identical_checkpoints(tmp_path):
    blobs = []
    for run in range(2):
        data, mcfg = small_setup(seed=2)
        d = tmp_path / str(run)
        train(data, CompassModel(mcfg), TrainConfig(epochs=2, batch_size=16, warmup_epochs=1, checkpoint_dir=str(d)))
        blobs.append(((d / "best.cmps").read_bytes(), (d / "last.cmps").read_bytes()))
    assert blobs[0] == blobs[1]


def test_log_gating_lr_trace_and_monotone_best(tmp_path):
    data, mcfg = small_setup(seed=3)
    log_path = tmp_path / "log.csv"
    cfg = TrainConfig(epochs=4, batch_size=16, warmup_epochs=1, log_path=str(log_path))
    res = train(data, CompassModel(mcfg), cfg)
    full = ModalitySet.full(3).mask
    unmasked = [r for r in res.records if r.observed_mask == full]
    masked = [r for r in res.records if r.observed_mask != full]
    assert unmasked and masked
    assert all(r.L_align == 0.0 and r.L_proxy == 0.0 for r in unmasked)
    assert all(r.L_align > 0.0 and r.L_proxy > 0.0 for r in masked)
    sched = ScheduleConfig(cfg.base_lr, cfg.warmup_epochs, cfg.epochs, cfg.power)
    assert all(r.lr == lr_at(sched, r.epoch) for r in res.records)
    best = [h["best_val_acc"] for h in res.history]
    assert best == sorted(best)
    back = read_log(log_path)
    assert back == res.records
    assert log_path.read_text().splitlines()[0].split(",") == LOG_COLUMNS


def test_loss_parts_average_over_pairs_and_query_gradients():
    data, mcfg = small_setup(seed=4)
    model = CompassModel(mcfg)
    xs, y = [x[:6] for x in data.train.x], data.train.y[:6]
    obs = ModalitySet.of([0], 3)
    out = model.forward(xs, obs, train=True)
    assert out.generator_calls == 2  # |M| * |O|
    parts = loss_parts(out, y, model, L.LossWeights())
    manual = sum(
        float(((out.pair_proxies[(0, j)].data - out.globals[j].data) ** 2).sum(-1).mean()) for j in (1, 2)
    ) / 2
    assert parts.align.item() == pytest.approx(manual, abs=1e-12)
    model.params.zero_grad()
    forward_backward(L.total_loss(parts, L.LossWeights(), masked=True))
    for j in (1, 2):
        assert np.linalg.norm(model.params[f"gen.0.{j}.query"].grad) > 0
    assert not model.params["gen.1.2.query"].grad.any()


def test_detached_targets_block_gradient_into_target_encoder():
    data, mcfg = small_setup(seed=5)
    model = CompassModel(mcfg)
    xs, y = [x[:6] for x in data.train.x], data.train.y[:6]
    out = model.forward(xs, ModalitySet.of([0], 3), train=True)
    parts = loss_parts(out, y, model, L.LossWeights(), with_ss=False)
    model.params.zero_grad()
    forward_backward(parts.align)
    assert not model.params["encoder.1.fc1.weight"].grad.any()


def test_divergence_reports_last_record():
    data, mcfg = small_setup(seed=6)
    data.train.x[0][5, 0] = np.inf
    with pytest.raises(TrainingDiverged) as info:
        train(data, CompassModel(mcfg), TrainConfig(epochs=1, batch_size=4, warmup_epochs=0))
    assert "last log record" in str(info.value)


def test_per_sample_masking_mode_trains():
    data, mcfg = small_setup(seed=7)
    res = train(data, CompassModel(mcfg), TrainConfig(epochs=1, batch_size=16, warmup_epochs=0), mask_config=MaskConfig(3, 0.7, per_sample=True))
    assert res.records and all(np.isfinite(r.total) for r in res.records)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(fill="mean")


def test_best_state_is_loaded(tmp_path):
    data, mcfg = small_setup(seed=8)
    model = CompassModel(mcfg)
    res = train(data, model, TrainConfig(epochs=3, batch_size=16, warmup_epochs=1, checkpoint_dir=str(tmp_path)))
    stored = checkpoint.load(tmp_path / "best.cmps")
    for k, v in model.state_dict().items():
        np.testing.assert_allclose(stored[k], v, rtol=1e-6, atol=1e-7)
    assert res.best_val_acc == max(h["val_acc"] for h in res.history)
