"""Write a synthetic HR image set plus manifest.json (stand-in when DIV2K is absent)."""
import argparse
from pathlib import Path

from hsnet.data import synthetic_dataset

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--out", type=Path, default=Path("data/synth"))
ap.add_argument("-n", type=int, default=4)
ap.add_argument("--size", type=int, default=64)
ap.add_argument("--scale", type=int, default=4)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()
print(synthetic_dataset(args.out, args.n, args.size, args.scale, args.seed))
