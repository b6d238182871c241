"""Node sampling: stride-2 polyphase split of a feature map and its inverse.

Arrays may be numpy or torch, shaped ``(..., H, W)``; leading axes (batch,
channels) are carried through untouched. No arithmetic is performed, so the
round trip is bit-exact.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch

from hsnet.errors import DimensionError, ShapeError

# (row parity, col parity), in subset order.
PHASES = ((0, 0), (0, 1), (1, 0), (1, 1))


class SubsetBundle(NamedTuple):
    subsets: tuple
    phase_labels: tuple = PHASES


def nss_decompose(feat) -> SubsetBundle:
    h, w = feat.shape[-2], feat.shape[-1]
    if h % 2:
        raise DimensionError(f"height must be even for polyphase split, got H={h}")
    if w % 2:
        raise DimensionError(f"width must be even for polyphase split, got W={w}")
    subsets = tuple(feat[..., r::2, c::2] for r, c in PHASES)
    return SubsetBundle(subsets)


def nss_recompose(bundle) -> np.ndarray | torch.Tensor:
    subsets = bundle.subsets if isinstance(bundle, SubsetBundle) else tuple(bundle)
    if len(subsets) != 4:
        raise ShapeError(f"expected 4 subsets, got {len(subsets)}")
    shape = tuple(subsets[0].shape)
    bad = [i for i, s in enumerate(subsets) if tuple(s.shape) != shape]
    if bad:
        shapes = [tuple(s.shape) for s in subsets]
        raise ShapeError(f"subsets {bad} do not match subset 0 shape; got {shapes}")
    h, w = shape[-2], shape[-1]
    out_shape = shape[:-2] + (2 * h, 2 * w)
    first = subsets[0]
    if isinstance(first, torch.Tensor):
        # stack + reshape keeps autograd intact (no in-place writes)
        grid = torch.stack(subsets, dim=-1).reshape(*shape[:-2], h, w, 2, 2)
        return grid.movedim(-2, -3).reshape(out_shape)
    out = np.empty(out_shape, dtype=np.asarray(first).dtype)
    for (r, c), sub in zip(PHASES, subsets):
        out[..., r::2, c::2] = sub
    return out
