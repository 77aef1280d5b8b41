"""Encode-process-decode surrogates for bundles of phase-field frames."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import torch
import torch.nn.functional as F
from torch import nn

from ..core import ConfigurationError
from .layers import (PeriodicConv2d, PolyphaseDown, PolyphaseUp, SpectralConv2d, downsample_mask, group_count,
                     with_mask)

ARCHITECTURES = ("DRN", "UNET", "UFNO", "UFNO_ALT")
DRN_DILATIONS = (1, 2, 4, 8, 4, 2, 1)


@dataclass(frozen=True)
class SurrogateConfig:
    """Architecture and adaptation switches of one surrogate.

    ``layers`` counts DRN blocks or (U-)FNO layers; for ``UFNO_ALT`` each
    layer is an (FNO, U-FNO) pair. ``multipliers`` are the UNet channel
    multipliers (per level, relative to ``hidden``); for the U-FNO variants
    they configure the inner UNet branch.
    """

    arch: str = "UNET"
    k: int = 25
    hidden: int = 32
    layers: int = 2
    kernel_size: int = 3
    multipliers: tuple = (2, 2)
    depth: int = 1
    norm_groups: int = 8
    modes: int = 10
    decoder_features: int = 8
    temporal_kernel: int = 3
    periodic: bool = True
    enforce_mass: bool = True
    enforce_geometry: bool = True
    mass_eps: float = 4e-4

    def __post_init__(self):
        object.__setattr__(self, "multipliers", tuple(int(m) for m in self.multipliers))
        if self.arch not in ARCHITECTURES:
            raise ConfigurationError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        if self.k < 1 or self.hidden < 1 or self.layers < 1 or self.depth < 1:
            raise ConfigurationError("k, hidden, layers and depth must be >= 1")
        if not self.multipliers or min(self.multipliers) < 1:
            raise ConfigurationError("multipliers must be a non-empty tuple of positive integers")
        if self.kernel_size % 2 == 0 or self.temporal_kernel % 2 == 0:
            raise ConfigurationError("kernel sizes must be odd")
        if self.modes < 1 or self.mass_eps <= 0:
            raise ConfigurationError("modes and mass_eps must be positive")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["multipliers"] = list(self.multipliers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown surrogate config keys: {sorted(extra)}")
        return cls(**d)

    def replace(self, **kw) -> "SurrogateConfig":
        return replace(self, **kw)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


class Encoder(nn.Module):
    """Two pointwise layers over the ``k`` frames plus the mask channel."""

    def __init__(self, k, hidden):
        super().__init__()
        self.fc1 = nn.Conv2d(k + 1, hidden, 1)
        self.fc2 = nn.Conv2d(hidden, hidden, 1)

    def forward(self, frames, mask):
        return F.gelu(self.fc2(F.gelu(self.fc1(torch.cat([frames, mask], 1)))))


class Decoder(nn.Module):
    """Pointwise lift to ``k x f`` features, temporal convolution, per-step projection, tanh."""

    def __init__(self, hidden, k, features, temporal_kernel):
        super().__init__()
        self.k, self.f = k, features
        self.lift = nn.Conv2d(hidden, k * features, 1)
        self.temporal = nn.Conv1d(features, features, temporal_kernel, padding=temporal_kernel // 2)
        self.proj = nn.Linear(features, 1)

    def raw(self, o):
        B, _, H, W = o.shape
        z = self.lift(o).view(B, self.k, self.f, H, W)
        z = z.permute(0, 3, 4, 2, 1).reshape(B * H * W, self.f, self.k)
        z = self.temporal(z)
        z = self.proj(z.transpose(1, 2)).view(B, H, W, self.k)
        return z.permute(0, 3, 1, 2)

    def forward(self, o):
        return torch.tanh(self.raw(o))


class DRNBlock(nn.Module):
    def __init__(self, hidden, kernel_size, periodic, mask_ch):
        super().__init__()
        self.convs = nn.ModuleList(
            PeriodicConv2d(hidden + mask_ch, hidden, kernel_size, dilation=d, periodic=periodic)
            for d in DRN_DILATIONS)

    def forward(self, x, mask):
        y = x
        for i, conv in enumerate(self.convs):
            y = conv(with_mask(y, mask))
            if i < len(self.convs) - 1:
                y = F.gelu(y)
        return x + y


class DRN(nn.Module):
    def __init__(self, cfg: SurrogateConfig, mask_ch: int):
        super().__init__()
        self.blocks = nn.ModuleList(DRNBlock(cfg.hidden, cfg.kernel_size, cfg.periodic, mask_ch)
                                    for _ in range(cfg.layers))

    def forward(self, h, mask):
        for b in self.blocks:
            h = b(h, mask)
        return h


class ResBlock(nn.Module):
    """Pre-activation residual block with group norm; the mask joins each conv input."""

    def __init__(self, cin, cout, groups, periodic, mask_ch, kernel_size=3):
        super().__init__()
        self.n1 = nn.GroupNorm(group_count(cin, groups), cin)
        self.c1 = PeriodicConv2d(cin + mask_ch, cout, kernel_size, periodic=periodic)
        self.n2 = nn.GroupNorm(group_count(cout, groups), cout)
        self.c2 = PeriodicConv2d(cout + mask_ch, cout, kernel_size, periodic=periodic)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, mask):
        y = self.c1(with_mask(F.gelu(self.n1(x)), mask))
        y = self.c2(with_mask(F.gelu(self.n2(y)), mask))
        return y + self.skip(x)


class UNet(nn.Module):
    """Residual UNet with phase-aware stride-2 resampling.

    Channel width at level ``l`` is ``hidden * multipliers[l]``. Skips are
    concatenated on the way up; the mask is resampled with the same sampling
    phase as the features at every level.
    """

    def __init__(self, cin, hidden, multipliers, depth, groups, periodic, mask_ch, cout=None):
        super().__init__()
        self.mask_ch = mask_ch
        self.inp = PeriodicConv2d(cin + mask_ch, hidden, 3, periodic=periodic)
        chans = [hidden * m for m in multipliers]
        skips = [hidden]
        self.down = nn.ModuleList()
        self.downsample = nn.ModuleList()
        c = hidden
        for lvl, co in enumerate(chans):
            blocks = nn.ModuleList()
            for _ in range(depth):
                blocks.append(ResBlock(c, co, groups, periodic, mask_ch))
                c = co
                skips.append(c)
            self.down.append(blocks)
            if lvl < len(chans) - 1:
                self.downsample.append(PolyphaseDown(c + mask_ch, c, periodic))
                skips.append(c)
        self.mid = nn.ModuleList([ResBlock(c, c, groups, periodic, mask_ch), ResBlock(c, c, groups, periodic, mask_ch)])
        self.up = nn.ModuleList()
        self.upsample = nn.ModuleList()
        for lvl in reversed(range(len(chans))):
            co = chans[lvl]
            blocks = nn.ModuleList()
            for _ in range(depth + 1):
                blocks.append(ResBlock(c + skips.pop(), co, groups, periodic, mask_ch))
                c = co
            self.up.append(blocks)
            if lvl > 0:
                self.upsample.append(PolyphaseUp(c + mask_ch, c, periodic))
        self.norm = nn.GroupNorm(group_count(c, groups), c)
        self.out = PeriodicConv2d(c + mask_ch, cout or hidden, 3, periodic=periodic)

    def forward(self, x, mask):
        use = mask if self.mask_ch else None
        masks, phases = [use], []
        h = self.inp(with_mask(x, use))
        hs = [h]
        for lvl, blocks in enumerate(self.down):
            for b in blocks:
                h = b(h, masks[-1])
                hs.append(h)
            if lvl < len(self.downsample):
                h, phase = self.downsample[lvl](with_mask(h, masks[-1]))
                phases.append(phase)
                masks.append(downsample_mask(masks[-1], phase) if use is not None else None)
                hs.append(h)
        for b in self.mid:
            h = b(h, masks[-1])
        for i, blocks in enumerate(self.up):
            for b in blocks:
                h = b(torch.cat([h, hs.pop()], 1), masks[-1])
            if i < len(self.upsample):
                masks.pop()
                h = self.upsample[i](h, phases.pop(), masks[-1])
        return self.out(with_mask(F.gelu(self.norm(h)), masks[-1]))


class FNOLayer(nn.Module):
    """``gelu(K v + W v [+ U v])`` with spectral ``K``, pointwise ``W`` and an optional UNet branch ``U``."""

    def __init__(self, cfg: SurrogateConfig, mask_ch: int, with_unet: bool):
        super().__init__()
        c = cfg.hidden
        self.spectral = SpectralConv2d(c + mask_ch, c, cfg.modes, cfg.modes, cfg.periodic)
        self.pointwise = nn.Conv2d(c + mask_ch, c, 1)
        self.unet = (UNet(c, c, cfg.multipliers, 1, cfg.norm_groups, cfg.periodic, mask_ch, cout=c)
                     if with_unet else None)

    def forward(self, h, mask):
        x = with_mask(h, mask)
        y = self.spectral(x) + self.pointwise(x)
        if self.unet is not None:
            y = y + self.unet(h, mask)
        return F.gelu(y)


class UFNO(nn.Module):
    def __init__(self, cfg: SurrogateConfig, mask_ch: int):
        super().__init__()
        kinds = [True] * cfg.layers if cfg.arch == "UFNO" else [False, True] * cfg.layers
        self.layers = nn.ModuleList(FNOLayer(cfg, mask_ch, u) for u in kinds)

    def forward(self, h, mask):
        for layer in self.layers:
            h = layer(h, mask)
        return h


class SurrogateModel(nn.Module):
    """Maps a bundle ``(B, k, H, W)`` plus mask ``(B, 1, H, W)`` to the next bundle (before postprocessing)."""

    def __init__(self, cfg: SurrogateConfig):
        super().__init__()
        self.cfg = cfg
        mask_ch = 1 if cfg.enforce_geometry else 0
        self.encoder = Encoder(cfg.k, cfg.hidden)
        if cfg.arch == "DRN":
            self.processor = DRN(cfg, mask_ch)
        elif cfg.arch == "UNET":
            self.processor = UNet(cfg.hidden, cfg.hidden, cfg.multipliers, cfg.depth, cfg.norm_groups,
                                  cfg.periodic, mask_ch)
        else:
            self.processor = UFNO(cfg, mask_ch)
        self.decoder = Decoder(cfg.hidden, cfg.k, cfg.decoder_features, cfg.temporal_kernel)

    def encode(self, frames, mask):
        return self.encoder(frames, mask)

    def process(self, h, mask):
        return self.processor(h, mask if self.cfg.enforce_geometry else None)

    def decode(self, o):
        return self.decoder(o)

    def forward(self, frames, mask):
        return self.decode(self.process(self.encode(frames, mask), mask))

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(cfg: SurrogateConfig, seed: int | None = None) -> SurrogateModel:
    if seed is not None:
        torch.manual_seed(seed)
    return SurrogateModel(cfg)
