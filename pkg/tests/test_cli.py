import csv
import hashlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hsnet.cli import main
from hsnet.data import save_image, synthetic_dataset
from hsnet.experiments import ABLATION_GRID

SMALL_MODEL = {"channels": 8, "n_blocks": 1, "heads": 2, "k": 3, "cand_stride": 1}


def write_config(tmp_path, scale=4, iters=100, **train):
    manifest = synthetic_dataset(tmp_path / "data", n=2, size=32, scale=scale, seed=0)
    doc = {
        "model": {**SMALL_MODEL, "scale": scale},
        "train": {"total_iters": iters, "desk_schedule": True, "base_lr": 1e-3, "batch_size": 2,
                  "lr_patch": 6, "checkpoint_every": 50, **train},
        "data": {"train_manifest": str(manifest.relative_to(tmp_path))},
        "out": "run",
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path, manifest


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg, manifest = write_config(tmp, iters=500)
    assert main(["train", "--config", str(cfg), "--total-iters", "100"]) == 0
    return tmp, manifest


def test_total_iters_override_lands_in_resolved_config(trained):
    tmp, _ = trained
    resolved = json.loads((tmp / "run" / "resolved_config.json").read_text())
    assert resolved["train"]["total_iters"] == 100
    assert resolved["train"]["milestones"] == [50, 80, 90, 95]
    assert len(resolved["provenance"]) == 16


def test_train_leaves_checkpoints_and_full_log(trained):
    run = trained[0] / "run"
    assert (run / "ckpt_last.zip").is_file() and (run / "ckpt_0000100.zip").is_file()
    with (run / "train_log.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["iter"]) for r in rows] == list(range(100))
    assert all(math.isfinite(float(r["loss"])) for r in rows)


def test_missing_manifest_exits_2_and_names_path(tmp_path, capsys):
    cfg, _ = write_config(tmp_path)
    doc = json.loads(cfg.read_text())
    doc["data"]["train_manifest"] = "nowhere/manifest.json"
    cfg.write_text(json.dumps(doc))
    assert main(["train", "--config", str(cfg)]) == 2
    assert "nowhere/manifest.json" in capsys.readouterr().err


def test_unknown_config_field_exits_2(tmp_path, capsys):
    cfg, _ = write_config(tmp_path)
    assert main(["train", "--config", str(cfg), "--override", "model.depth=3"]) == 2
    assert "depth" in capsys.readouterr().err


def read_report(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows[:-1], rows[-1]


def test_eval_identity_baseline_is_infinite(trained, tmp_path):
    _, manifest = trained
    out = tmp_path / "id.csv"
    assert main(["eval", "--manifest", str(manifest), "--baseline", "identity", "--out", str(out)]) == 0
    rows, mean = read_report(out)
    assert all(float(r["psnr"]) == math.inf for r in rows)
    assert float(mean["psnr"]) == math.inf


@pytest.mark.parametrize("mode", ["bicubic", "checkpoint"])
def test_eval_report_means_recompute(trained, tmp_path, mode):
    tmp, manifest = trained
    out = tmp_path / "r.csv"
    source = ["--baseline", "bicubic"] if mode == "bicubic" else ["--checkpoint", str(tmp / "run" / "ckpt_last.zip")]
    assert main(["eval", "--manifest", str(manifest), *source, "--out", str(out)]) == 0
    rows, mean = read_report(out)
    assert len(rows) == 2
    psnrs = [float(r["psnr"]) for r in rows]
    assert all(math.isfinite(p) for p in psnrs)
    assert float(mean["psnr"]) == pytest.approx(np.mean(psnrs), abs=1e-12)
    assert float(mean["ssim"]) == pytest.approx(np.mean([float(r["ssim"]) for r in rows]), abs=1e-12)


def test_eval_scale_mismatch_exits_3(trained, capsys):
    tmp, manifest = trained
    code = main(["eval", "--checkpoint", str(tmp / "run" / "ckpt_last.zip"), "--manifest", str(manifest), "--scale", "2"])
    assert code == 3
    assert "scale" in capsys.readouterr().err


def test_infer_writes_upscaled_png_deterministically(trained, tmp_path):
    tmp, _ = trained
    lr = tmp_path / "lr.png"
    save_image(lr, np.random.default_rng(0).uniform(size=(3, 16, 16)))
    digests = []
    for name in ("a.png", "b.png"):
        out = tmp_path / name
        assert main(["infer", "--checkpoint", str(tmp / "run" / "ckpt_last.zip"), "--input", str(lr), "--output", str(out)]) == 0
        digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
    from PIL import Image

    assert Image.open(tmp_path / "a.png").size == (64, 64)
    assert digests[0] == digests[1]


def test_ablate_writes_grid(tmp_path, capsys):
    cfg, _ = write_config(tmp_path, scale=2, iters=3, checkpoint_every=100)
    assert main(["ablate", "--config", str(cfg)]) == 0
    run = tmp_path / "run"
    labels = []
    for name in ("table3_cssb_sab.csv", "table4_nss.csv", "table5_sgb.csv", "table6_ga.csv"):
        with (run / name).open() as fh:
            for row in csv.DictReader(fh):
                labels.append(row["label"])
                _, _, flags = next(g for g in ABLATION_GRID if g[1] == row["label"])
                for key, value in flags.items():
                    assert row[key] == str(value)
    assert labels == [g[1] for g in ABLATION_GRID]
    assert (run / "ablation_summary.csv").is_file()
    assert "families" in capsys.readouterr().out


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "hsnet.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "ablate" in proc.stdout


@pytest.mark.parametrize("name", ["tiny", "paper"])
def test_shipped_configs_resolve(name):
    from pathlib import Path

    from hsnet.cli import resolve_config

    resolved = resolve_config(Path(__file__).parent.parent / "configs" / f"{name}.json")
    assert resolved["model"]["scale"] == 4
    assert resolved["train"]["milestones"][0] == resolved["train"]["total_iters"] // 2
