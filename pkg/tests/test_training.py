import math

import numpy as np
import pytest
import torch

from twophase.core import ConfigurationError, GridSpec, ScenarioParams
from twophase.records import SimulationRecord
from twophase.surrogates import SurrogateConfig, build_model, predict_bundle
from twophase.training import (TrainConfig, TrainSample, TrainingDivergence, lr_schedule, make_sample,
                               pushforward_loss, train, unroll_schedule, valid_starts)

from surrogate_oracles import ToyModel, droplet_frames

SCHEDULE = [  # epoch, n_unroll, lr
    (0, 1, 1e-4), (24, 1, 1e-4), (25, 2, 4e-5), (125, 6, 1.6e-5), (174, 7, 1.6e-5), (175, 8, 1.6e-5),
    (250, 8, 6.4e-6), (375, 8, 2.56e-6), (400, 8, 2.56e-6), (499, 8, 2.56e-6),
]


@pytest.mark.parametrize("epoch,n,lr", SCHEDULE)
def test_schedules(epoch, n, lr):
    cfg = TrainConfig()
    assert unroll_schedule(epoch, cfg) == n
    assert lr_schedule(epoch, cfg) == pytest.approx(lr, rel=1e-12)


def record(n_frames=30, speed=1, offset=0):
    mask, frames = droplet_frames(n_frames, speed=speed, offset=offset)
    return SimulationRecord(ScenarioParams(0.2, -5.0, (), 0), mask, frames, 0.02, 5)


def toy_sample(n_unroll, k=2):
    rec = record(12)
    s = make_sample(rec, 0, k, n_unroll)
    return TrainSample(s.inputs[None].double().requires_grad_(True), s.targets[None].double(), s.mask[None])


def test_gradient_through_intermediate_steps_is_zero():
    torch.manual_seed(0)
    model = ToyModel()
    for n in (2, 3):
        s = toy_sample(n)
        loss = pushforward_loss(model, s)
        (g,) = torch.autograd.grad(loss, s.inputs, allow_unused=True)
        assert g is None or torch.count_nonzero(g) == 0
        # parameters still receive gradients through the final step
        assert all(p.grad is None for p in model.parameters())
        (gp,) = torch.autograd.grad(pushforward_loss(model, s), model.p)
        assert torch.count_nonzero(gp) > 0


def test_single_step_gradient_matches_finite_differences():
    model = ToyModel()
    s = toy_sample(1)
    loss = pushforward_loss(model, s)
    (g,) = torch.autograd.grad(loss, s.inputs)
    assert torch.count_nonzero(g) > 0
    rng = np.random.default_rng(0)
    idx = np.argwhere(s.mask[0, 0].numpy() > 0)
    for j, i in idx[rng.choice(len(idx), 6, replace=False)]:
        for c in range(2):
            h = 1e-6
            x = s.inputs.detach().clone()
            x[0, c, j, i] += h
            with torch.no_grad():
                up = pushforward_loss(model, TrainSample(x, s.targets, s.mask))
                x[0, c, j, i] -= 2 * h
                dn = pushforward_loss(model, TrainSample(x, s.targets, s.mask))
            fd = float(up - dn) / (2 * h)
            assert abs(fd - float(g[0, c, j, i])) <= 1e-3 * abs(fd) + 1e-12


def test_loss_is_zero_for_exact_prediction_and_ignores_solid():
    model = ToyModel()
    s = toy_sample(1)
    with torch.no_grad():
        target = predict_bundle(model, s.inputs, s.mask)
    solid = s.mask.expand_as(target) == 0
    target = torch.where(solid, torch.full_like(target, 5.0), target)
    loss = pushforward_loss(model, TrainSample(s.inputs, target[:, None], s.mask))
    assert loss.item() == 0.0


def test_window_bounds():
    rec = record(30)
    assert valid_starts(30, 5, 1) == 21
    make_sample(rec, 20, 5, 1)
    with pytest.raises(ValueError):
        make_sample(rec, 21, 5, 1)


SMALL = SurrogateConfig(arch="UNET", k=5, hidden=8, multipliers=(1, 2))


def test_two_epoch_smoke_writes_history(tmp_path):
    recs = [record(30), record(30, speed=2)]
    res = train(build_model(SMALL, 0), recs, recs[:1], TrainConfig(epochs=2, batch_size=8), tmp_path)
    assert len(res.history) == 2
    lines = (tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,lr,n_unroll,train_mse,val_rollout_mse"
    assert len(lines) == 3
    assert (tmp_path / "best.ckpt").exists()


def test_training_is_deterministic():
    recs = [record(30), record(30, speed=2)]
    cfg = TrainConfig(epochs=2, batch_size=8, samples_per_record=6, seed=3)
    a = train(build_model(SMALL, 0), recs, recs[:1], cfg).model
    b = train(build_model(SMALL, 0), recs, recs[:1], cfg).model
    assert all(torch.equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_divergence_aborts():
    recs = [record(30)]
    model = build_model(SMALL, 0)
    with torch.no_grad():
        model.encoder.fc1.weight.fill_(math.nan)
    with pytest.raises(TrainingDivergence):
        train(model, recs, [], TrainConfig(epochs=1))


def test_bad_configs():
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigurationError):
        train(build_model(SMALL), [], [], TrainConfig(epochs=1))


def test_overfits_single_record():
    rec = record(30)
    cfg = TrainConfig(epochs=200, lr=3e-3, lr_milestones=(100, 150), max_unroll=1, batch_size=32, val_records=0)
    res = train(build_model(SMALL, 0), [rec], [], cfg)
    first, last = res.history[0]["train_mse"], res.history[-1]["train_mse"]
    assert last <= first / 100
