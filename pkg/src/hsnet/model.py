"""Network assembly: shallow conv, a stack of HSBlocks, sub-pixel reconstruction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn.functional as F
from torch import nn

from hsnet.errors import ConfigError, DimensionError, ShapeError
from hsnet.fusion import AttentionParams, graph_aggregation, sab_combine
from hsnet.nss import nss_decompose, nss_recompose
from hsnet.subgraph import SGBConfig, sgb_forward

GA_MODES = ("add", "concat", "aggregation")
# how a phase of the block update is formed from its subgraph and the combination HG
PHASE_UPDATES = ("subgraph_plus_hg", "hg_only")


@dataclass
class ModelConfig:
    scale: int = 4
    channels: int = 64
    n_blocks: int = 10
    heads: int = 2
    patch: int = 3
    stride: int = 1
    cand_stride: int = 2
    k: int = 5
    temperature: float | None = None
    n_scales: int = 2
    use_cssb: bool = True
    use_sab: bool = True
    use_nss: bool = True
    use_sgb: bool = True
    ga_mode: str = "aggregation"
    phase_update: str = "subgraph_plus_hg"
    zero_init_out: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {self.scale}")
        for name in ("channels", "n_blocks", "heads", "patch", "stride", "cand_stride", "k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_scales < 2:
            raise ConfigError(f"n_scales must be >= 2, got {self.n_scales}")
        if self.channels % self.heads:
            raise ConfigError(f"channels={self.channels} not divisible by heads={self.heads}")
        if self.ga_mode not in GA_MODES:
            raise ConfigError(f"ga_mode must be one of {GA_MODES}, got {self.ga_mode!r}")
        if self.phase_update not in PHASE_UPDATES:
            raise ConfigError(f"phase_update must be one of {PHASE_UPDATES}, got {self.phase_update!r}")
        if self.temperature is not None and not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")

    @property
    def n_subgraphs(self) -> int:
        return 4 if (self.use_cssb and self.use_nss) else 1

    def sgb_config(self) -> SGBConfig:
        return SGBConfig(
            patch=self.patch,
            stride=self.stride,
            cand_stride=self.cand_stride,
            k=self.k,
            temperature=self.temperature,
            n_scales=self.n_scales,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    # ~886K parameters at x4, close to the reported 882K
    "paper": dict(channels=64, n_blocks=10, heads=2),
    "tiny": dict(channels=32, n_blocks=2, heads=2, k=4, cand_stride=1),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ModelConfig(**{**PRESETS[name], **overrides})


class SubgraphGeneration(nn.Module):
    def __init__(self, channels: int, cfg: SGBConfig):
        super().__init__()
        self.cfg = cfg
        eye = torch.eye(channels)
        self.theta_f = nn.Parameter(eye.clone())
        self.theta_g = nn.Parameter(eye.clone())
        self.theta_out = nn.Parameter(torch.randn(channels, channels) / math.sqrt(channels) * 0.1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return sgb_forward(x, self.theta_f, self.theta_g, self.theta_out, self.cfg)


class GraphAttention(nn.Module):
    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.heads = heads
        std = 1.0 / math.sqrt(channels)
        self.w_q = nn.Parameter(torch.randn(channels, channels) * std)
        self.w_k = nn.Parameter(torch.randn(channels, channels) * std)
        self.w_v = nn.Parameter(torch.randn(channels, channels) * std)
        self.w_o = nn.Parameter(torch.randn(channels, channels) * std)

    def params(self) -> AttentionParams:
        return AttentionParams(self.w_q, self.w_k, self.w_v, self.w_o, self.heads)

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        return graph_aggregation(s, self.params())


def _to_nodes(x: torch.Tensor) -> torch.Tensor:
    # (B, C, h, w) -> (B, h*w, C), row-major node order
    return x.flatten(2).transpose(1, 2)


def _from_nodes(s: torch.Tensor, h: int, w: int) -> torch.Tensor:
    return s.transpose(1, 2).reshape(s.shape[0], s.shape[2], h, w)


class HSBlock(nn.Module):
    """Subgraph construction (polyphase split + patch graph) then attention fusion.

    Phase ``k`` of the block update is ``S'_k + HG`` where ``HG`` is the
    subgraph combination (``phase_update="hg_only"`` uses ``HG`` for every
    phase); the recomposed update goes through a 1x1 output projection and
    is added to the input.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c, j = cfg.channels, cfg.n_subgraphs
        self.sgb = SubgraphGeneration(c, cfg.sgb_config()) if (cfg.use_cssb and cfg.use_sgb) else None
        self.ga = None
        self.alpha = None
        self.concat_proj = None
        if cfg.use_sab:
            if cfg.ga_mode == "aggregation":
                self.ga = nn.ModuleList(GraphAttention(c, cfg.heads) for _ in range(j))
            if cfg.ga_mode == "concat":
                self.concat_proj = nn.Linear(j * c, c)
            else:
                self.alpha = nn.Parameter(torch.full((j,), 1.0 / j))
        self.active = cfg.use_cssb or cfg.use_sab
        self.out = nn.Conv2d(c, c, 1) if self.active else None
        if self.out is not None and cfg.zero_init_out:
            nn.init.zeros_(self.out.weight)
            nn.init.zeros_(self.out.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if not self.active:
            return x
        h, w = x.shape[-2:]
        if cfg.n_subgraphs == 4:
            if h % 2 or w % 2:
                raise DimensionError(f"HSBlock input must be even-sized, got {h}x{w}")
            parts = list(nss_decompose(x).subsets)
        else:
            parts = [x]
        if self.sgb is not None:
            parts = [self.sgb(p) for p in parts]
        ph, pw = parts[0].shape[-2:]
        nodes = [_to_nodes(p) for p in parts]

        if not cfg.use_sab:
            updated = nodes
            hg = sab_combine(nodes, torch.ones(len(nodes), dtype=x.dtype))
        elif cfg.ga_mode == "aggregation":
            updated = [ga(s) for ga, s in zip(self.ga, nodes)]
            hg = sab_combine(updated, self.alpha)
        elif cfg.ga_mode == "add":
            updated = nodes
            hg = sab_combine(nodes, self.alpha)
        else:
            updated = nodes
            hg = self.concat_proj(torch.cat(nodes, dim=-1))

        if cfg.phase_update == "hg_only":
            phases = [_from_nodes(hg, ph, pw)] * len(updated)
        else:
            phases = [_from_nodes(u + hg, ph, pw) for u in updated]
        delta = nss_recompose(phases) if len(phases) == 4 else phases[0]
        return x + self.out(delta)


class HSNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c, s = cfg.channels, cfg.scale
        self.head = nn.Conv2d(3, c, 3, padding=1)
        self.body = nn.ModuleList(HSBlock(cfg) for _ in range(cfg.n_blocks))
        self.body_tail = nn.Conv2d(c, c, 3, padding=1)
        self.recon = nn.Conv2d(c, 3 * s * s, 3, padding=1)

    @property
    def min_size(self) -> int:
        return 2 * self.cfg.patch if self.cfg.n_subgraphs == 4 else self.cfg.patch

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected a 3-channel image, got shape {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if min(h, w) < self.min_size:
            raise DimensionError(f"input {h}x{w} smaller than minimum {self.min_size}")
        x = F.pad(x, (0, w % 2, 0, h % 2), mode="reflect") if (h % 2 or w % 2) else x
        shallow = self.head(x)
        feat = shallow
        for block in self.body:
            feat = block(feat)
        feat = self.body_tail(feat) + shallow
        out = F.pixel_shuffle(self.recon(feat), self.cfg.scale)
        s = self.cfg.scale
        out = out[..., : s * h, : s * w]
        return out[0] if squeeze else out


def build_model(cfg: ModelConfig) -> HSNet:
    cfg.validate()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = HSNet(cfg)
    return model


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
