"""Per-subgraph multi-head attention and learnable subgraph combination."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch

from hsnet.errors import ConfigError, NumericError, ShapeError


@dataclass
class AttentionParams:
    """Stacked projections: head ``h`` uses columns ``h*d_head:(h+1)*d_head``."""

    w_q: torch.Tensor  # (d, heads*d_head)
    w_k: torch.Tensor
    w_v: torch.Tensor
    w_o: torch.Tensor  # (heads*d_head, d)
    heads: int

    @property
    def d_head(self) -> int:
        return self.w_q.shape[1] // self.heads


def attention_head(
    s: torch.Tensor,
    w_q: torch.Tensor,
    w_k: torch.Tensor,
    w_v: torch.Tensor,
    head: int = 0,
    return_weights: bool = False,
):
    """Scaled dot-product attention over the nodes of one subgraph.

    ``s`` is (..., n, d); projections are (d, d_head). Returns the updated
    node features (..., n, d_head), plus the row-stochastic weight matrix
    when ``return_weights`` is set.
    """
    d = s.shape[-1]
    for name, w in (("W_Q", w_q), ("W_K", w_k), ("W_V", w_v)):
        if w.shape[0] != d:
            raise ShapeError(f"{name} has {w.shape[0]} rows, node features have {d}")
    q, k, v = s @ w_q, s @ w_k, s @ w_v
    logits = q @ k.transpose(-1, -2) / math.sqrt(w_q.shape[1])
    attn = torch.softmax(logits, dim=-1)
    out = attn @ v
    if not torch.isfinite(out).all():
        raise NumericError(f"non-finite attention output in head {head}")
    return (out, attn) if return_weights else out


def graph_aggregation(s: torch.Tensor, params: AttentionParams) -> torch.Tensor:
    """Multi-head attention, heads concatenated and projected back to ``d``."""
    d = s.shape[-1]
    if d % params.heads:
        raise ConfigError(f"feature dim {d} not divisible by heads={params.heads}")
    dh = params.d_head
    outs = []
    for h in range(params.heads):
        cols = slice(h * dh, (h + 1) * dh)
        outs.append(attention_head(s, params.w_q[:, cols], params.w_k[:, cols], params.w_v[:, cols], head=h))
    return torch.cat(outs, dim=-1) @ params.w_o


def sab_combine(updated: Sequence[torch.Tensor], alpha: torch.Tensor) -> torch.Tensor:
    """Weighted sum of the updated subgraphs, accumulated in subgraph order."""
    if len(updated) != alpha.shape[0]:
        raise ShapeError(f"{len(updated)} subgraphs but {alpha.shape[0]} coefficients")
    shape = updated[0].shape
    bad = [k for k, u in enumerate(updated) if u.shape != shape]
    if bad:
        raise ShapeError(
            f"subgraphs {bad} differ from subgraph 0 shape {tuple(shape)}: "
            + ", ".join(str(tuple(updated[k].shape)) for k in bad)
        )
    out = alpha[0] * updated[0]
    for k in range(1, len(updated)):
        out = out + alpha[k] * updated[k]
    return out
