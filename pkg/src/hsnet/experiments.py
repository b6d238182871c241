"""Desk-scale experiment drivers shared by the CLI, scripts and acceptance tests."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from hsnet.data import bicubic_upscale, make_pair, synthetic_image
from hsnet.metrics import EvalReport, evaluate_pairs
from hsnet.model import ModelConfig, count_params
from hsnet.train import TrainConfig, Trainer

log = logging.getLogger(__name__)

FULL = dict(use_cssb=True, use_sab=True, use_nss=True, use_sgb=True, ga_mode="aggregation")

# (family, row label, flag overrides); full-model rows are the last in each family
ABLATION_GRID = (
    ("cssb_sab", "cssb_only", dict(use_cssb=True, use_sab=False)),
    ("cssb_sab", "sab_only", dict(use_cssb=False, use_sab=True)),
    ("cssb_sab", "cssb+sab", dict(use_cssb=True, use_sab=True)),
    ("nss", "wo_nss", dict(use_nss=False)),
    ("nss", "w_nss", dict(use_nss=True)),
    ("sgb", "wo_sgb", dict(use_sgb=False)),
    ("sgb", "w_sgb", dict(use_sgb=True)),
    ("ga", "add", dict(ga_mode="add")),
    ("ga", "concat", dict(ga_mode="concat")),
    ("ga", "aggregation", dict(ga_mode="aggregation")),
)

FAMILY_FILES = {
    "cssb_sab": "table3_cssb_sab.csv",
    "nss": "table4_nss.csv",
    "sgb": "table5_sgb.csv",
    "ga": "table6_ga.csv",
}


def desk_pairs(n: int = 4, size: int = 64, scale: int = 4, seed: int = 0):
    """Small synthetic training set used by the overfit and ablation runs."""
    rng = np.random.default_rng(seed)
    return [make_pair(synthetic_image(size, rng), scale, f"synth_{i:03d}") for i in range(n)]


def desk_train_config(total_iters: int = 2000, lr_patch: int = 16, **kw) -> TrainConfig:
    # the full-length base rate barely moves a tiny model in 2k steps
    kw = {"base_lr": 2e-3, "batch_size": 4, "checkpoint_every": total_iters, **kw}
    return TrainConfig.desk(total_iters, lr_patch=lr_patch, **kw)


def train_and_score(model_cfg: ModelConfig, train_cfg: TrainConfig, pairs, out_dir=None):
    trainer = Trainer(model_cfg, train_cfg, out_dir=out_dir)
    trainer.fit(pairs)
    report = evaluate_pairs(pairs, trainer.predict, model_cfg.scale)
    return trainer, report


def bicubic_report(pairs, scale: int) -> EvalReport:
    return evaluate_pairs(pairs, lambda lr: bicubic_upscale(lr, scale), scale)


def training_set_l1(trainer: Trainer, pairs) -> float:
    return float(np.mean([np.abs(np.clip(trainer.predict(p.lr), 0, 1) - p.hr).mean() for p in pairs]))


@dataclass
class OverfitResult:
    psnr: float
    bicubic_psnr: float
    l1_early: float  # whole-training-set L1 after `early` iterations
    l1_final: float
    early: int
    seconds: float
    trainer: Trainer

    @property
    def gain_db(self) -> float:
        return self.psnr - self.bicubic_psnr


def overfit_run(model_cfg: ModelConfig, train_cfg: TrainConfig, pairs, early: int = 10, out_dir=None) -> OverfitResult:
    """Fit a training set, recording its L1 after ``early`` steps and at the end."""
    start = time.perf_counter()
    trainer = Trainer(model_cfg, train_cfg, out_dir=out_dir)
    trainer.fit(pairs, until=early)
    l1_early = training_set_l1(trainer, pairs)
    trainer.fit(pairs)
    seconds = time.perf_counter() - start
    report = evaluate_pairs(pairs, trainer.predict, model_cfg.scale)
    return OverfitResult(
        psnr=report.mean_psnr,
        bicubic_psnr=bicubic_report(pairs, model_cfg.scale).mean_psnr,
        l1_early=l1_early,
        l1_final=training_set_l1(trainer, pairs),
        early=early,
        seconds=seconds,
        trainer=trainer,
    )


@dataclass
class AblationRow:
    family: str
    label: str
    flags: dict
    params: int
    psnr: float
    ssim: float
    reused: bool


def run_ablation(base: ModelConfig, train_cfg: TrainConfig, pairs, out_dir=None) -> list[AblationRow]:
    """Train every grid row; rows with an identical resolved config share one run."""
    cache: dict = {}
    rows = []
    for family, label, overrides in ABLATION_GRID:
        cfg = replace(base, **{**FULL, **overrides})
        key = tuple(sorted(cfg.to_dict().items()))
        reused = key in cache
        if not reused:
            log.info("ablation run %s/%s", family, label)
            trainer, report = train_and_score(cfg, train_cfg, pairs)
            cache[key] = (count_params(trainer.model), report)
        n_params, report = cache[key]
        flags = {k: getattr(cfg, k) for k in FULL}
        rows.append(AblationRow(family, label, flags, n_params, report.mean_psnr, report.mean_ssim, reused))
    if out_dir is not None:
        write_ablation(rows, Path(out_dir))
    return rows


def full_model_wins(rows: list[AblationRow]) -> dict:
    """Per family: is the full-model row strictly best in mean PSNR?"""
    out = {}
    for family in FAMILY_FILES:
        fam = [r for r in rows if r.family == family]
        full = next(r for r in fam if r.flags == FULL)
        others = [r for r in fam if r is not full]
        out[family] = all(full.psnr > r.psnr for r in others)
    return out


def write_ablation(rows: list[AblationRow], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["label", *FULL.keys(), "params", "psnr", "ssim", "reused"]
    for family, name in FAMILY_FILES.items():
        with (out_dir / name).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in rows:
                if r.family == family:
                    writer.writerow([r.label, *r.flags.values(), r.params, repr(r.psnr), repr(r.ssim), r.reused])
    wins = full_model_wins(rows)
    with (out_dir / "ablation_summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "full_psnr", "best_other_psnr", "full_is_best"])
        for family, won in wins.items():
            fam = [r for r in rows if r.family == family]
            full = next(r for r in fam if r.flags == FULL)
            best_other = max(r.psnr for r in fam if r is not full)
            writer.writerow([family, repr(full.psnr), repr(best_other), won])
