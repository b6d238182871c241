"""Overfit the tiny preset on a few synthetic images and compare with bicubic.

    python scripts/run_overfit.py --iters 2000 --out runs/overfit
"""
import argparse
import logging
from pathlib import Path

from hsnet.experiments import desk_pairs, desk_train_config, overfit_run
from hsnet.model import count_params, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--images", type=int, default=4)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--scale", type=int, default=4)
    ap.add_argument("--base-lr", type=float, default=2e-3)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    pairs = desk_pairs(args.images, args.size, args.scale)
    cfg = preset("tiny", scale=args.scale)
    res = overfit_run(cfg, desk_train_config(args.iters, lr_patch=args.size // args.scale, base_lr=args.base_lr),
                      pairs, out_dir=args.out)
    print(f"params        {count_params(res.trainer.model)}")
    print(f"bicubic       {res.bicubic_psnr:.4f} dB")
    print(f"model         {res.psnr:.4f} dB  ({res.gain_db:+.4f} dB)")
    print(f"L1 @{res.early:<6d}    {res.l1_early:.5f}")
    print(f"L1 final      {res.l1_final:.5f}  ({res.l1_early / res.l1_final:.2f}x lower)")
    print(f"wall time     {res.seconds:.0f} s")


if __name__ == "__main__":
    main()
