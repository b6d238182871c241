"""Subgraph generation: cross-scale patch graphs and normalized neighbor aggregation.

Query patches come from a feature map, candidate patches from its half-scale
copy. Each query keeps the K candidates closest in Euclidean distance and
takes a Gaussian-weighted, normalized average of their value vectors.

All kernels accept an optional leading batch axis, i.e. patch vectors shaped
``(N, D)`` or ``(B, N, D)`` and feature maps ``(C, H, W)`` or ``(B, C, H, W)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from hsnet.errors import DimensionError, ParameterError, ShapeError

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class PatchSet:
    vectors: torch.Tensor  # (..., N, D), channel-major flattening
    coords: torch.Tensor  # (N, 2) top-left (row, col) in the source map
    scale: int = 1

    @property
    def n(self) -> int:
        return self.vectors.shape[-2]

    @property
    def dim(self) -> int:
        return self.vectors.shape[-1]


@dataclass
class SubgraphEdges:
    neighbor_idx: torch.Tensor  # (..., Nq, K) long
    distances: torch.Tensor  # (..., Nq, K), non-decreasing per row
    ssim: torch.Tensor | None = None  # (..., Nq, K)

    @property
    def k(self) -> int:
        return self.neighbor_idx.shape[-1]


@dataclass
class SGBConfig:
    patch: int = 3
    stride: int = 1  # query grid
    cand_stride: int = 2  # candidate grid on the half-scale map
    k: int = 5
    temperature: float | None = None  # None -> patch dimensionality D
    n_scales: int = 2  # query scale plus (n_scales - 1) halvings for candidates
    store_ssim: bool = False

    def validate(self) -> None:
        for name in ("patch", "stride", "cand_stride", "k"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_scales < 2:
            raise ParameterError(f"n_scales must be >= 2, got {self.n_scales}")
        if self.temperature is not None and not self.temperature > 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")


def _as_batched(feat: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if feat.dim() == 3:
        return feat.unsqueeze(0), True
    if feat.dim() == 4:
        return feat, False
    raise ShapeError(f"expected (C,H,W) or (B,C,H,W), got {tuple(feat.shape)}")


def _corners(extent: int, patch: int, stride: int) -> torch.Tensor:
    return torch.arange(0, extent - patch + 1, stride)


def extract_patches(feat: torch.Tensor, patch: int, stride: int, scale: int = 1) -> PatchSet:
    """Cut ``patch x patch`` windows at a regular grid, row-major over corners."""
    if patch < 1 or stride < 1:
        raise ParameterError(f"patch and stride must be positive, got {patch}, {stride}")
    x, squeeze = _as_batched(feat)
    h, w = x.shape[-2:]
    if patch > min(h, w):
        raise DimensionError(f"patch {patch} larger than map {h}x{w}")
    cols = F.unfold(x, kernel_size=patch, stride=stride)  # (B, C*p*p, L)
    vectors = cols.transpose(1, 2)
    rows, cs = _corners(h, patch, stride), _corners(w, patch, stride)
    coords = torch.stack(torch.meshgrid(rows, cs, indexing="ij"), dim=-1).reshape(-1, 2)
    if squeeze:
        vectors = vectors[0]
    return PatchSet(vectors=vectors, coords=coords, scale=scale)


def downsample_half(feat: torch.Tensor) -> torch.Tensor:
    """Mean of each 2x2 block."""
    h, w = feat.shape[-2:]
    if h % 2 or w % 2:
        axis = "height" if h % 2 else "width"
        raise DimensionError(f"{axis} must be even to halve, got {h}x{w}")
    x, squeeze = _as_batched(feat)
    out = F.avg_pool2d(x, 2)
    return out[0] if squeeze else out


def patch_ssim(p: torch.Tensor, q: torch.Tensor, c1: float = SSIM_C1, c2: float = SSIM_C2) -> torch.Tensor:
    """Single-window SSIM along the last axis (broadcasts over leading axes)."""
    if p.shape[-1] != q.shape[-1]:
        raise ShapeError(f"patch lengths differ: {p.shape[-1]} vs {q.shape[-1]}")
    if p.shape[-1] < 2:
        raise ShapeError("patches need at least 2 elements")
    mu_p, mu_q = p.mean(-1), q.mean(-1)
    dp, dq = p - mu_p.unsqueeze(-1), q - mu_q.unsqueeze(-1)
    var_p, var_q = (dp * dp).mean(-1), (dq * dq).mean(-1)
    cov = (dp * dq).mean(-1)
    num = (2 * mu_p * mu_q + c1) * (2 * cov + c2)
    den = (mu_p**2 + mu_q**2 + c1) * (var_p + var_q + c2)
    return num / den


def pairwise_sq_dists(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    aa = (a * a).sum(-1, keepdim=True)
    bb = (b * b).sum(-1).unsqueeze(-2)
    d2 = aa + bb - 2.0 * (a @ b.transpose(-1, -2))
    return d2.clamp_min_(0.0)


def _gather_rows(vectors: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    # vectors (..., Nc, D), idx (..., Nq, K) -> (..., Nq, K, D)
    if vectors.dim() == 2:
        return vectors[idx]
    b = torch.arange(vectors.shape[0], device=vectors.device).view(-1, 1, 1)
    return vectors[b, idx]


def build_knn_graph(queries: PatchSet, candidates: PatchSet, k: int, with_ssim: bool = True) -> SubgraphEdges:
    """Keep, for every query, the ``k`` nearest candidates (ties -> lower index)."""
    nc = candidates.n
    if k < 1 or k > nc:
        raise ParameterError(f"K={k} must lie in [1, {nc}] (number of candidates)")
    if queries.dim != candidates.dim:
        raise ShapeError(f"feature dims differ: {queries.dim} vs {candidates.dim}")
    with torch.no_grad():
        d2 = pairwise_sq_dists(queries.vectors, candidates.vectors)
        d2_sorted, order = torch.sort(d2, dim=-1, stable=True)
        idx = order[..., :k]
        dist = d2_sorted[..., :k].sqrt()
    ssim = None
    if with_ssim:
        with torch.no_grad():
            nb = _gather_rows(candidates.vectors, idx)
            ssim = patch_ssim(queries.vectors.unsqueeze(-2), nb)
    return SubgraphEdges(neighbor_idx=idx, distances=dist, ssim=ssim)


def aggregate_neighbors(
    queries: PatchSet,
    candidates: PatchSet,
    edges: SubgraphEdges,
    temperature: float,
    values: torch.Tensor | None = None,
) -> torch.Tensor:
    """Normalized neighbor average ``y_i = sum_j f(x_i, x_j) g(x_j) / sum_j f(x_i, x_j)``.

    ``f`` is the Gaussian kernel ``exp(-||x_i - x_j||^2 / temperature)`` over the
    retained neighbors; ``values`` holds ``g(x_j)`` per candidate and defaults
    to the candidate vectors themselves. Distances are recomputed from the
    vectors so gradients reach whatever embedding produced them.
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    idx = edges.neighbor_idx
    if idx.shape[-2] != queries.n:
        raise ShapeError(f"edges cover {idx.shape[-2]} queries, patch set has {queries.n}")
    if int(idx.max()) >= candidates.n:
        raise ShapeError("edge index out of range for candidate set")
    vals = candidates.vectors if values is None else values
    nb = _gather_rows(candidates.vectors, idx)
    d2 = ((queries.vectors.unsqueeze(-2) - nb) ** 2).sum(-1)
    # softmax == exp(-d2/T) / sum exp(-d2/T), without underflow at small T
    weights = torch.softmax(-d2 / temperature, dim=-1)
    nb_vals = _gather_rows(vals, idx)
    return (weights.unsqueeze(-1) * nb_vals).sum(-2)


def fold_patches(vectors: torch.Tensor, size: tuple[int, int], patch: int, stride: int) -> torch.Tensor:
    """Inverse of ``extract_patches`` by overlap-averaging; returns (B, C, H, W)."""
    cols = vectors.transpose(-1, -2)
    if cols.dim() == 2:
        cols = cols.unsqueeze(0)
    summed = F.fold(cols, output_size=size, kernel_size=patch, stride=stride)
    ones = torch.ones(1, 1, *size, dtype=cols.dtype, device=cols.device)
    count = F.fold(F.unfold(ones, patch, stride=stride), output_size=size, kernel_size=patch, stride=stride)
    return summed / count.clamp_min(1.0)


def _pointwise(x: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    # 1x1 projection with a (C_out, C_in) matrix
    return torch.einsum("oc,bchw->bohw", weight, x)


def _pad_even(x: torch.Tensor) -> torch.Tensor:
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        x = F.pad(x, (0, w % 2, 0, h % 2), mode="replicate")
    return x


def sgb_forward(
    feat: torch.Tensor,
    theta_f: torch.Tensor,
    theta_g: torch.Tensor,
    theta_out: torch.Tensor,
    cfg: SGBConfig | None = None,
) -> torch.Tensor:
    """Cross-scale patch aggregation with a residual connection.

    ``theta_f`` embeds features for matching, ``theta_g`` for the aggregated
    values, ``theta_out`` projects the folded result; all are (C, C) matrices
    applied per pixel. Output shape equals input shape.
    """
    cfg = cfg or SGBConfig()
    cfg.validate()
    x, squeeze = _as_batched(feat)
    h, w = x.shape[-2:]
    ef, eg = _pointwise(x, theta_f), _pointwise(x, theta_g)

    queries = extract_patches(ef, cfg.patch, cfg.stride)
    cand_f, cand_g = [], []
    src_f, src_g = ef, eg
    for level in range(1, cfg.n_scales):
        src_f, src_g = _pad_even(src_f), _pad_even(src_g)
        if min(src_f.shape[-2:]) < 2 * cfg.patch:
            break
        src_f, src_g = downsample_half(src_f), downsample_half(src_g)
        cand_f.append(extract_patches(src_f, cfg.patch, cfg.cand_stride, scale=2**level).vectors)
        cand_g.append(extract_patches(src_g, cfg.patch, cfg.cand_stride, scale=2**level).vectors)
    if not cand_f:
        # map too small for a coarser scale: match within the same scale
        cand_f.append(extract_patches(ef, cfg.patch, cfg.cand_stride).vectors)
        cand_g.append(extract_patches(eg, cfg.patch, cfg.cand_stride).vectors)
    candidates = PatchSet(torch.cat(cand_f, dim=-2), coords=torch.empty(0, 2), scale=2)
    values = torch.cat(cand_g, dim=-2)

    k = min(cfg.k, candidates.n)
    edges = build_knn_graph(queries, candidates, k, with_ssim=cfg.store_ssim)
    temperature = cfg.temperature if cfg.temperature is not None else float(queries.dim)
    agg = aggregate_neighbors(queries, candidates, edges, temperature, values=values)
    folded = fold_patches(agg, (h, w), cfg.patch, cfg.stride)
    out = x + _pointwise(folded, theta_out)
    return out[0] if squeeze else out
