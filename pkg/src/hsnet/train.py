"""L1 training with Adam and a step-halving learning-rate schedule."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from hsnet import checkpoint as ckpt_io
from hsnet.data import sample_batch
from hsnet.errors import ConfigError, NumericError, ShapeError
from hsnet.model import HSNet, ModelConfig, build_model

log = logging.getLogger(__name__)

PAPER_MILESTONES = (250_000, 400_000, 450_000, 475_000)


@dataclass
class TrainConfig:
    total_iters: int = 500_000
    base_lr: float = 2e-4
    milestones: tuple = PAPER_MILESTONES
    betas: tuple = (0.9, 0.99)
    eps: float = 1e-8
    batch_size: int = 8
    lr_patch: int = 64
    augment: bool = True
    grad_clip: float | None = None
    seed: int = 0
    checkpoint_every: int = 10_000
    log_every: int = 1

    def validate(self) -> None:
        if self.total_iters < 1:
            raise ConfigError(f"total_iters must be >= 1, got {self.total_iters}")
        if not self.base_lr > 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        ms = list(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"milestones must be strictly increasing, got {ms}")
        if ms and ms[-1] >= self.total_iters:
            raise ConfigError(f"last milestone {ms[-1]} must be < total_iters {self.total_iters}")
        for name in ("batch_size", "lr_patch", "checkpoint_every", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    @classmethod
    def desk(cls, total_iters: int, **kw) -> "TrainConfig":
        """Shrink the schedule: milestones keep their fractional positions."""
        ms = tuple(int(round(m / 500_000 * total_iters)) for m in PAPER_MILESTONES)
        ms = tuple(sorted(set(m for m in ms if 0 < m < total_iters)))
        return cls(total_iters=total_iters, milestones=ms, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("milestones", "betas"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    if not 0 <= iteration < cfg.total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.total_iters})")
    drops = sum(1 for m in cfg.milestones if m <= iteration)
    return cfg.base_lr * 2.0**-drops


def l1_loss(sr: torch.Tensor, hr: torch.Tensor) -> torch.Tensor:
    if sr.shape != hr.shape:
        raise ShapeError(f"prediction {tuple(sr.shape)} vs target {tuple(hr.shape)}")
    return (sr - hr).abs().mean()


def make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.base_lr, betas=tuple(cfg.betas), eps=cfg.eps)


def train_step(model, batch, optimizer, iteration: int, cfg: TrainConfig, batch_ids=None, loss_fn=l1_loss) -> float:
    lr_img, hr_img = batch
    lr = lr_at(iteration, cfg)
    for group in optimizer.param_groups:
        group["lr"] = lr
    loss = loss_fn(model(lr_img), hr_img)
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {loss.item()} at iter {iteration}, lr {lr:g}, batch {batch_ids}")
    optimizer.zero_grad(set_to_none=False)
    loss.backward()
    if cfg.grad_clip:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    optimizer.step()
    return float(loss.detach())


@dataclass
class Trainer:
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    out_dir: Path | None = None
    iteration: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.train_cfg.validate()
        self.model: HSNet = build_model(self.model_cfg)
        self.optimizer = make_optimizer(self.model, self.train_cfg)
        self.rng = np.random.default_rng(self.train_cfg.seed)
        torch.manual_seed(self.train_cfg.seed)
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)
            self.out_dir.mkdir(parents=True, exist_ok=True)

    def config_dict(self) -> dict:
        return {"model": self.model_cfg.to_dict(), "train": self.train_cfg.to_dict()}

    def save(self, path) -> None:
        ckpt_io.save_checkpoint(
            path,
            self.model,
            self.optimizer,
            iteration=self.iteration,
            config=self.config_dict(),
            rng_state=self.rng.bit_generator.state,
        )

    @classmethod
    def resume(cls, path, out_dir=None, **train_overrides) -> "Trainer":
        raw = ckpt_io.read_checkpoint(path)
        train = {**raw["config"]["train"], **train_overrides}
        trainer = cls(ModelConfig.from_dict(raw["config"]["model"]), TrainConfig.from_dict(train), out_dir=out_dir)
        ckpt_io.restore(raw, trainer.model, trainer.optimizer)
        trainer.iteration = raw["meta"]["iteration"]
        trainer.rng.bit_generator.state = raw["meta"]["data_rng"]
        return trainer

    def step(self, pairs) -> float:
        cfg = self.train_cfg
        batch = sample_batch(pairs, cfg.batch_size, cfg.lr_patch, self.rng, augment_data=cfg.augment)
        self.model.train()
        loss = train_step(self.model, batch, self.optimizer, self.iteration, cfg)
        self.iteration += 1
        return loss

    def fit(self, pairs, until: int | None = None) -> list:
        """Train up to iteration ``until`` (default: total_iters); returns log rows."""
        cfg = self.train_cfg
        until = cfg.total_iters if until is None else min(until, cfg.total_iters)
        log_file = None
        writer = None
        if self.out_dir is not None:
            log_path = self.out_dir / "train_log.csv"
            fresh = not log_path.exists()
            log_file = log_path.open("a", newline="")
            writer = csv.writer(log_file)
            if fresh:
                writer.writerow(["iter", "lr", "loss", "wall_time"])
        start = time.perf_counter()
        try:
            while self.iteration < until:
                it = self.iteration
                lr = lr_at(it, cfg)
                loss = self.step(pairs)
                row = (it, lr, loss, time.perf_counter() - start)
                self.history.append(row)
                if writer is not None and it % cfg.log_every == 0:
                    writer.writerow([it, repr(lr), repr(loss), f"{row[3]:.3f}"])
                if it % 100 == 0:
                    log.info("iter %d lr %.3g loss %.5f", it, lr, loss)
                if self.out_dir is not None and self.iteration % cfg.checkpoint_every == 0:
                    self.save(self.out_dir / f"ckpt_{self.iteration:07d}.zip")
        finally:
            if log_file is not None:
                log_file.close()
        if self.out_dir is not None:
            self.save(self.out_dir / "ckpt_last.zip")
        return self.history

    def predict(self, lr: np.ndarray) -> np.ndarray:
        return predict(self.model, lr)


def predict(model: torch.nn.Module, lr: np.ndarray) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        out = model(torch.from_numpy(np.ascontiguousarray(lr, dtype=np.float32)))
    return out.numpy()


def load_model(path) -> HSNet:
    raw = ckpt_io.read_checkpoint(path)
    model = build_model(ModelConfig.from_dict(raw["config"]["model"]))
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in raw["params"].items()})
    return model
