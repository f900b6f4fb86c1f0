"""Conditional noise-prediction U-Net.

The network sees the latent concatenated with the sketch (1 channel) and
stroke (3 channels) conditions, 7 input channels total, and emits 6
channels: 3 for the noise estimate and 3 raw values that drive the
learned-variance interpolation. Up/downsampling happens inside residual
blocks; attention runs at the coarsest listed resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

IN_CHANNELS = 7
OUT_CHANNELS = 6


@dataclass(frozen=True)
class UNetConfig:
    image_size: int = 32
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    res_blocks_per_level: int = 2
    attention_resolutions: frozenset[int] = field(default_factory=lambda: frozenset({8}))
    attention_head_channels: int = 32
    time_embedding_dim: int = 128

    def __post_init__(self) -> None:
        levels = len(self.channel_multipliers)
        if self.image_size % (2 ** (levels - 1)) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^{levels - 1}"
            )
        object.__setattr__(self, "attention_resolutions", frozenset(self.attention_resolutions))
        object.__setattr__(self, "channel_multipliers", tuple(self.channel_multipliers))

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "base_channels": self.base_channels,
            "channel_multipliers": list(self.channel_multipliers),
            "res_blocks_per_level": self.res_blocks_per_level,
            "attention_resolutions": sorted(self.attention_resolutions),
            "attention_head_channels": self.attention_head_channels,
            "time_embedding_dim": self.time_embedding_dim,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UNetConfig":
        return cls(
            image_size=int(data["image_size"]),
            base_channels=int(data["base_channels"]),
            channel_multipliers=tuple(data["channel_multipliers"]),
            res_blocks_per_level=int(data["res_blocks_per_level"]),
            attention_resolutions=frozenset(data["attention_resolutions"]),
            attention_head_channels=int(data["attention_head_channels"]),
            time_embedding_dim=int(data["time_embedding_dim"]),
        )


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of (possibly fractional) timestep indices."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / (half - 1))
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def _norm(channels: int) -> nn.GroupNorm:
    groups = min(32, channels)
    while channels % groups:
        groups -= 1
    return nn.GroupNorm(groups, channels)


def _zero_init(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


class ResBlock(nn.Module):
    """Residual block with time conditioning and optional 2x resampling.

    Resampling (average-pool down, nearest-neighbor up) is applied on both
    the main and skip paths before the first convolution.
    """

    def __init__(self, in_ch: int, out_ch: int, time_dim: int, *, up: bool = False, down: bool = False):
        super().__init__()
        assert not (up and down)
        self.up, self.down = up, down
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = _zero_init(nn.Conv2d(out_ch, out_ch, 3, padding=1))
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def _resample(self, x: torch.Tensor) -> torch.Tensor:
        if self.down:
            return F.avg_pool2d(x, 2)
        if self.up:
            return F.interpolate(x, scale_factor=2, mode="nearest")
        return x

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = F.silu(self.norm1(x))
        h = self._resample(h)
        x = self._resample(x)
        h = self.conv1(h)
        h = h + self.time_proj(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    """Multi-head self-attention over all spatial positions."""

    def __init__(self, channels: int, head_channels: int):
        super().__init__()
        if channels % head_channels != 0:
            raise ValueError(
                f"channels ({channels}) must be divisible by head channels ({head_channels})"
            )
        self.heads = channels // head_channels
        self.norm = _norm(channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = _zero_init(nn.Conv2d(channels, channels, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b * self.heads, 3 * c // self.heads, h * w)
        q, k, v = qkv.chunk(3, dim=1)
        scale = (c // self.heads) ** -0.5
        attn = torch.softmax(torch.einsum("bci,bcj->bij", q * scale, k), dim=-1)
        out = torch.einsum("bij,bcj->bci", attn, v).reshape(b, c, h, w)
        return x + self.proj(out)


class ConditionalUNet(nn.Module):
    """Noise and variance prediction conditioned on sketch and stroke images."""

    def __init__(self, config: UNetConfig | None = None):
        super().__init__()
        self.config = config or UNetConfig()
        cfg = self.config
        time_dim = cfg.time_embedding_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        chans = [cfg.base_channels * m for m in cfg.channel_multipliers]
        self.conv_in = nn.Conv2d(IN_CHANNELS, chans[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        skip_chans = [chans[0]]
        ch, res = chans[0], cfg.image_size
        for level, out_ch in enumerate(chans):
            for _ in range(cfg.res_blocks_per_level):
                block = nn.ModuleList([ResBlock(ch, out_ch, time_dim)])
                if res in cfg.attention_resolutions:
                    block.append(AttentionBlock(out_ch, cfg.attention_head_channels))
                self.down_blocks.append(block)
                ch = out_ch
                skip_chans.append(ch)
            if level < len(chans) - 1:
                self.down_blocks.append(nn.ModuleList([ResBlock(ch, ch, time_dim, down=True)]))
                skip_chans.append(ch)
                res //= 2

        self.mid_block1 = ResBlock(ch, ch, time_dim)
        self.mid_attn = AttentionBlock(ch, cfg.attention_head_channels)
        self.mid_block2 = ResBlock(ch, ch, time_dim)

        self.up_blocks = nn.ModuleList()
        for level, out_ch in reversed(list(enumerate(chans))):
            for _ in range(cfg.res_blocks_per_level + 1):
                block = nn.ModuleList([ResBlock(ch + skip_chans.pop(), out_ch, time_dim)])
                if res in cfg.attention_resolutions:
                    block.append(AttentionBlock(out_ch, cfg.attention_head_channels))
                self.up_blocks.append(block)
                ch = out_ch
            if level > 0:
                self.up_blocks.append(nn.ModuleList([ResBlock(ch, ch, time_dim, up=True)]))
                res *= 2

        self.norm_out = _norm(ch)
        self.conv_out = _zero_init(nn.Conv2d(ch, OUT_CHANNELS, 3, padding=1))

    @property
    def dtype(self) -> torch.dtype:
        return self.conv_in.weight.dtype

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        c_sketch: torch.Tensor,
        c_stroke: torch.Tensor,
    ) -> torch.Tensor:
        """Batched prediction; returns (B, 6, H, W) with eps then raw v."""
        h = torch.cat([x, c_sketch, c_stroke], dim=1)
        emb = self.time_mlp(timestep_embedding(t.to(h.dtype), self.config.time_embedding_dim))
        h = self.conv_in(h)
        skips = [h]
        for block in self.down_blocks:
            for layer in block:
                h = layer(h, emb) if isinstance(layer, ResBlock) else layer(h)
            skips.append(h)
        h = self.mid_block2(self.mid_attn(self.mid_block1(h, emb)), emb)
        for block in self.up_blocks:
            first = block[0]
            if isinstance(first, ResBlock) and not first.up:
                h = torch.cat([h, skips.pop()], dim=1)
            for layer in block:
                h = layer(h, emb) if isinstance(layer, ResBlock) else layer(h)
        return self.conv_out(F.silu(self.norm_out(h)))

    def predict(
        self,
        x_t: torch.Tensor,
        t: int,
        c_sketch: torch.Tensor,
        c_stroke: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Single-image surface: (3, H, W) latent in, (eps, v) out."""
        size = self.config.image_size
        for name, img, ch in (("x_t", x_t, 3), ("c_sketch", c_sketch, 1), ("c_stroke", c_stroke, 3)):
            if img.shape != (ch, size, size):
                raise ValueError(
                    f"{name}: expected shape ({ch}, {size}, {size}), got {tuple(img.shape)}"
                )
        if t < 1:
            raise ValueError(f"t must be >= 1, got {t}")
        t_tensor = torch.tensor([t], dtype=torch.long)
        out = self.forward(x_t[None], t_tensor, c_sketch[None], c_stroke[None])[0]
        if not torch.isfinite(out).all():
            raise FloatingPointError(f"non-finite network output at t={t}")
        return out[:3], out[3:]
