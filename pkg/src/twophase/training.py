"""Pushforward training of bundle surrogates."""
from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import ConfigurationError
from .records import SimulationRecord
from .surrogates import SurrogateModel, predict_bundle, save_checkpoint

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "lr", "n_unroll", "train_mse", "val_rollout_mse")


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-4
    lr_decay: float = 0.4
    lr_milestones: tuple = (25, 125, 250, 375)
    unroll_period: int = 25
    max_unroll: int = 8
    batch_size: int = 16
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    # training windows drawn per record and epoch; 0 means every valid start
    samples_per_record: int = 0
    val_every: int = 1
    val_records: int = 4
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lr_milestones", tuple(int(m) for m in self.lr_milestones))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.max_unroll < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("epochs, max_unroll and batch_size must be >= 1")
        if not self.lr > 0 or self.unroll_period < 1:
            raise ConfigurationError("lr must be positive and unroll_period >= 1")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        d["betas"] = list(self.betas)
        return d


def unroll_schedule(epoch: int, cfg: TrainConfig) -> int:
    return min(cfg.max_unroll, 1 + epoch // cfg.unroll_period)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    passed = sum(1 for m in cfg.lr_milestones if epoch >= m)
    return cfg.lr * cfg.lr_decay ** passed


@dataclass
class TrainSample:
    """Input bundle, ``n_unroll`` target bundles and the mask for one window."""

    inputs: torch.Tensor
    targets: torch.Tensor
    mask: torch.Tensor
    record_id: int = 0
    start: int = 0


def valid_starts(n_frames: int, k: int, n_unroll: int) -> int:
    """Number of window starts ``t`` with ``t + (n_unroll + 1) k <= n_frames``."""
    return max(0, n_frames - (n_unroll + 1) * k + 1)


def make_sample(record: SimulationRecord, start: int, k: int, n_unroll: int, record_id: int = 0) -> TrainSample:
    if start + (n_unroll + 1) * k > record.n_frames:
        raise ValueError(f"window at {start} with {n_unroll} unrolls exceeds {record.n_frames} frames")
    f = torch.from_numpy(record.frames[start:start + (n_unroll + 1) * k].copy())
    H, W = f.shape[-2:]
    return TrainSample(f[:k], f[k:].view(n_unroll, k, H, W),
                       torch.from_numpy(record.mask.fluid.astype(np.float32))[None], record_id, start)


def collate(samples) -> TrainSample:
    return TrainSample(torch.stack([s.inputs for s in samples]), torch.stack([s.targets for s in samples]),
                       torch.stack([s.mask for s in samples]))


def fluid_mse(pred, target, fluid) -> torch.Tensor:
    """Mean squared error over FLUID cells; ``fluid`` broadcasts over the frame axis."""
    w = fluid.expand_as(pred)
    return ((pred - target) ** 2 * w).sum() / w.sum()


def pushforward_loss(model: SurrogateModel, sample: TrainSample) -> torch.Tensor:
    """Unroll ``n_unroll`` bundles; only the last prediction carries gradients."""
    n = sample.targets.shape[1]
    x = sample.inputs
    if n > 1:
        with torch.no_grad():
            for _ in range(n - 1):
                x = predict_bundle(model, x, sample.mask)
        x = x.detach()
    pred = predict_bundle(model, x, sample.mask)
    return fluid_mse(pred, sample.targets[:, -1], sample.mask)


def _epoch_windows(records, k, n_unroll, cfg, rng):
    windows = []
    for rid, rec in enumerate(records):
        n = valid_starts(rec.n_frames, k, n_unroll)
        if n == 0:
            continue
        starts = np.arange(n) if cfg.samples_per_record <= 0 else rng.integers(0, n, cfg.samples_per_record)
        windows += [(rid, int(s)) for s in starts]
    order = rng.permutation(len(windows))
    return [windows[i] for i in order]


@dataclass
class TrainResult:
    model: SurrogateModel
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = math.inf


def write_history(history, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for row in history:
            w.writerow(row)
    return path


def train(model: SurrogateModel, train_records, val_records, cfg: TrainConfig, out_dir=None,
          meta: dict | None = None) -> TrainResult:
    """Adam with the step LR schedule and growing unroll; keeps the best-validation weights.

    Writes ``history.csv`` and ``best.ckpt`` to ``out_dir`` when given.
    """
    from .evaluation import rollout_mse

    if not train_records:
        raise ConfigurationError("training split is empty")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    k = model.cfg.k
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.adam_eps)
    val_subset = list(val_records)[: cfg.val_records]
    result = TrainResult(model)
    best_state = copy.deepcopy(model.state_dict())
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for epoch in range(cfg.epochs):
        n_unroll = unroll_schedule(epoch, cfg)
        # fall back to fewer unrolls when records are too short for the schedule
        while n_unroll > 1 and all(valid_starts(r.n_frames, k, n_unroll) == 0 for r in train_records):
            n_unroll -= 1
        lr = lr_schedule(epoch, cfg)
        for g in opt.param_groups:
            g["lr"] = lr
        model.train()
        windows = _epoch_windows(train_records, k, n_unroll, cfg, rng)
        if not windows:
            raise ConfigurationError(f"records too short for bundles of {k} frames")
        total, count = 0.0, 0
        for b in range(0, len(windows), cfg.batch_size):
            batch = collate([make_sample(train_records[rid], s, k, n_unroll, rid)
                             for rid, s in windows[b:b + cfg.batch_size]])
            loss = pushforward_loss(model, batch)
            if not torch.isfinite(loss):
                model.load_state_dict(best_state)
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}, batch {b // cfg.batch_size}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(batch.inputs)
            count += len(batch.inputs)

        val = math.nan
        if val_subset and (epoch % cfg.val_every == 0 or epoch == cfg.epochs - 1):
            model.eval()
            val = float(np.mean([rollout_mse(model, r).mse for r in val_subset]))
            if val < result.best_val:
                result.best_val, result.best_epoch = val, epoch
                best_state = copy.deepcopy(model.state_dict())
        row = {"epoch": epoch, "lr": lr, "n_unroll": n_unroll, "train_mse": total / count, "val_rollout_mse": val}
        result.history.append(row)
        log.info("epoch %d lr %.2e unroll %d train %.4e val %.4e", epoch, lr, n_unroll, row["train_mse"], val)

    if val_subset:
        model.load_state_dict(best_state)
    model.eval()
    if out is not None:
        write_history(result.history, out / "history.csv")
        info = {"best_epoch": result.best_epoch, "best_val": result.best_val, "train": cfg.as_dict()}
        save_checkpoint(model, out / "best.ckpt", {**info, **(meta or {})})
    return result
