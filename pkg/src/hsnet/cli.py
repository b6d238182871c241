"""Command-line entry points: ``hsnet {train,eval,infer,ablate}``.

Exit codes: 0 success, 2 config/IO error, 3 incompatible inputs, 4 numeric failure.

Config files are JSON::

    {
      "preset": "tiny",                       # optional, see hsnet.model.PRESETS
      "model": {"scale": 4, ...},             # ModelConfig fields
      "train": {"total_iters": 2000, ...},    # TrainConfig fields
      "data": {"train_manifest": "data/manifest.json"},
      "out": "runs/tiny"
    }

Relative paths resolve against the config file's directory. ``--override
key=value`` uses dotted keys (``train.base_lr=1e-3``); values parse as JSON
when possible.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from hsnet import checkpoint as ckpt_io
from hsnet.data import DatasetManifest, bicubic_upscale, load_image, save_image
from hsnet.errors import ConfigError, NumericError
from hsnet.experiments import full_model_wins, run_ablation
from hsnet.metrics import evaluate_pairs
from hsnet.model import ModelConfig, preset
from hsnet.train import TrainConfig, Trainer, load_model, predict

log = logging.getLogger("hsnet")

EXIT_OK, EXIT_CONFIG, EXIT_INCOMPATIBLE, EXIT_NUMERIC = 0, 2, 3, 4


class Incompatible(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        node = doc
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = _parse_value(value)
    return doc


def resolve_config(path, overrides=(), total_iters=None, out=None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    doc = apply_overrides(doc, overrides)
    if total_iters is not None:
        doc.setdefault("train", {})["total_iters"] = total_iters
    if out is not None:
        doc["out"] = str(out)
    base = path.parent
    model_fields = doc.get("model", {})
    model_cfg = preset(doc["preset"], **model_fields) if "preset" in doc else ModelConfig.from_dict(model_fields)
    model_cfg.validate()
    train_fields = dict(doc.get("train", {}))
    if train_fields.get("desk_schedule", False):
        train_fields.pop("desk_schedule")
        total = train_fields.pop("total_iters", 500_000)
        train_cfg = TrainConfig.desk(total, **train_fields)
    else:
        train_fields.pop("desk_schedule", None)
        train_cfg = TrainConfig.from_dict(train_fields)
    train_cfg.validate()
    data = {k: str((base / v).resolve()) for k, v in doc.get("data", {}).items()}
    out_dir = Path(doc.get("out", "runs/default"))
    if not out_dir.is_absolute():
        out_dir = (base / out_dir).resolve()
    resolved = {
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "data": data,
        "out": str(out_dir),
    }
    resolved["provenance"] = ckpt_io.config_hash(resolved)
    return resolved


def _write_resolved(resolved: dict) -> Path:
    out_dir = Path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True))
    return out_dir


def _train_pairs(resolved: dict, scale: int):
    manifest = resolved["data"].get("train_manifest")
    if not manifest:
        raise ConfigError("config has no data.train_manifest")
    return DatasetManifest.load(manifest, scale=scale).pairs()


def cmd_train(args) -> int:
    resolved = resolve_config(args.config, args.override, args.total_iters, args.out)
    out_dir = _write_resolved(resolved)
    model_cfg = ModelConfig.from_dict(resolved["model"])
    train_cfg = TrainConfig.from_dict(resolved["train"])
    pairs = _train_pairs(resolved, model_cfg.scale)
    trainer = Trainer(model_cfg, train_cfg, out_dir=out_dir)
    trainer.fit(pairs)
    print(f"trained {trainer.iteration} iterations; checkpoint {out_dir / 'ckpt_last.zip'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    baseline = args.baseline
    if baseline is None and args.checkpoint is None:
        raise ConfigError("eval needs --checkpoint or --baseline")
    if baseline is None:
        model = load_model(args.checkpoint)
        scale = args.scale or model.cfg.scale
        if scale != model.cfg.scale:
            raise Incompatible(f"--scale {scale} does not match checkpoint scale {model.cfg.scale}")
        predictor = lambda lr: predict(model, lr)  # noqa: E731
    else:
        scale = args.scale or 4
        if baseline == "bicubic":
            predictor = lambda lr: bicubic_upscale(lr, scale)  # noqa: E731
        else:
            predictor = None
    pairs = DatasetManifest.load(args.manifest, scale=scale).pairs()
    if baseline == "identity":
        # HR scored against itself: exercises the +inf PSNR path
        lookup = {id(p.lr): p.hr for p in pairs}
        predictor = lambda lr: lookup[id(lr)]  # noqa: E731
    report = evaluate_pairs(pairs, predictor, scale)
    out = Path(args.out) if args.out else Path("eval_report.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(out)
    print(f"mean PSNR {report.mean_psnr:.4f} dB  SSIM {report.mean_ssim:.4f}  -> {out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    model = load_model(args.checkpoint)
    lr = load_image(args.input)
    sr = predict(model, lr)
    save_image(args.output, np.clip(sr, 0.0, 1.0))
    print(f"wrote {args.output} ({sr.shape[-1]}x{sr.shape[-2]})")
    return EXIT_OK


def cmd_ablate(args) -> int:
    resolved = resolve_config(args.config, args.override, args.total_iters, args.out)
    out_dir = _write_resolved(resolved)
    model_cfg = ModelConfig.from_dict(resolved["model"])
    train_cfg = TrainConfig.from_dict(resolved["train"])
    pairs = _train_pairs(resolved, model_cfg.scale)
    rows = run_ablation(model_cfg, train_cfg, pairs, out_dir=out_dir)
    for r in rows:
        print(f"{r.family:9s} {r.label:12s} psnr {r.psnr:8.4f}  params {r.params}")
    wins = full_model_wins(rows)
    print(f"full model best in {sum(wins.values())}/4 families: {wins}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsnet", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", required=True)
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--total-iters", type=int)
        p.add_argument("--out")

    p = sub.add_parser("train", help="train a model")
    config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM report on a manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int)
    p.add_argument("--baseline", choices=("bicubic", "identity"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="super-resolve one PNG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="run the ablation grid")
    config_args(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Incompatible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
