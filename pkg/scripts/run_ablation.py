"""Train the ablation grid on the synthetic desk set and print the family tables.

    python scripts/run_ablation.py --iters 2000 --out runs/ablation
"""
import argparse
import logging
import time
from pathlib import Path

from hsnet.experiments import bicubic_report, desk_pairs, desk_train_config, full_model_wins, run_ablation
from hsnet.model import preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--images", type=int, default=4)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--scale", type=int, default=4)
    ap.add_argument("--out", type=Path, default=Path("runs/ablation"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    pairs = desk_pairs(args.images, args.size, args.scale)
    train_cfg = desk_train_config(args.iters, lr_patch=args.size // args.scale)
    t0 = time.perf_counter()
    rows = run_ablation(preset("tiny", scale=args.scale), train_cfg, pairs, out_dir=args.out)
    print(f"bicubic     {bicubic_report(pairs, args.scale).mean_psnr:.4f}")
    for r in rows:
        tag = " (reused)" if r.reused else ""
        print(f"{r.family:9s} {r.label:12s} {r.psnr:.4f} dB  {r.params} params{tag}")
    wins = full_model_wins(rows)
    print(f"full model best in {sum(wins.values())}/4 families {wins}  [{time.perf_counter() - t0:.0f}s]")


if __name__ == "__main__":
    main()
