"""Conditional denoising UNet: text/LR cross-attention, control branch,
and per-level guidance fusion.

The backbone is a small pixel-space UNet. Conditioning enters four ways:
prompt tokens and LR-image tokens through cross-attention, the upsampled LR
image through a control branch (an encoder copy whose per-level features are
added to the decoder skips via zero-initialized 1x1 projections), and dense
guidance through GuidanceFusion modules after each configured decoder
level's residual blocks. Both the control branch and the fusion modules are
exact no-ops at initialization, so a fresh model behaves as the bare UNet.
"""

import math
from dataclasses import dataclass

import torch
from torch import nn

from .conditioning import ConditioningBatch
from .errors import ConfigError, ShapeError
from .embedding_map import RAW_CHANNELS, COMPRESSED_CHANNELS, EmbeddingMapCompressor
from .fusion import GuidanceFusion
from .guidance import GUIDANCE_MODES


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 3
    out_channels: int = 3
    base_channels: int = 32
    channel_mults: tuple = (1, 2, 2)
    res_blocks: int = 1
    attention_levels: tuple = ()          # decoder levels with cross-attention
    middle_attention: bool = True
    text_context_dim: int = 1024
    lr_context_dim: int = 256
    gfm_levels: tuple = (0, 1, 2)         # decoder levels with guidance fusion
    fusion_mode: str = "sum"
    guidance: str = "full"
    fusion_hidden: int = 64
    embed_raw_dim: int = RAW_CHANNELS
    embed_channels: int = COMPRESSED_CHANNELS
    embed_hidden: int = 256
    use_control: bool = True
    max_text_tokens: int = 16

    def __post_init__(self):
        if self.guidance not in GUIDANCE_MODES:
            raise ConfigError(f"guidance must be one of {GUIDANCE_MODES}, got {self.guidance!r}")
        levels = len(self.channel_mults)
        for lv in self.gfm_levels:
            if not 0 <= lv < levels:
                raise ConfigError(f"gfm level {lv} out of range for {levels} levels")
        for lv in self.attention_levels:
            if not 0 <= lv < levels:
                raise ConfigError(f"attention level {lv} out of range for {levels} levels")

    @property
    def num_levels(self) -> int:
        return len(self.channel_mults)

    @property
    def level_channels(self) -> tuple:
        return tuple(self.base_channels * m for m in self.channel_mults)

    @property
    def time_dim(self) -> int:
        return self.base_channels * 4

    def fusion_scales(self, sr_hw: tuple[int, int]) -> list[tuple[int, int]]:
        """Feature (h, w) at every fusion site for an SR input of ``sr_hw``."""
        h, w = sr_hw
        return [(h >> lv, w >> lv) for lv in sorted(set(self.gfm_levels))]


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Standard sinusoidal embedding of integer timesteps."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float64) / half
    ).to(device=t.device)
    args = t.double().unsqueeze(1) * freqs.unsqueeze(0)
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=1)
    return emb


def _groups(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


class ResidualBlock(nn.Module):
    """GroupNorm/SiLU/conv x2 with an additive per-channel time projection."""

    def __init__(self, in_channels: int, out_channels: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(in_channels), in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_channels)
        self.norm2 = nn.GroupNorm(_groups(out_channels), out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = (
            nn.Conv2d(in_channels, out_channels, 1) if in_channels != out_channels else nn.Identity()
        )
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    """Single-head cross-attention from pixels to a context sequence.

    The output projection starts at zero, so the residual add is an exact
    passthrough at initialization.
    """

    def __init__(self, channels: int, context_dim: int):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(channels), channels)
        self.to_q = nn.Linear(channels, channels)
        self.to_k = nn.Linear(context_dim, channels)
        self.to_v = nn.Linear(context_dim, channels)
        self.to_out = nn.Linear(channels, channels)
        nn.init.zeros_(self.to_out.weight)
        nn.init.zeros_(self.to_out.bias)
        self.scale = channels ** -0.5

    def forward(self, x: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        q = self.to_q(self.norm(x).flatten(2).transpose(1, 2))     # (B, hw, C)
        k = self.to_k(context)                                     # (B, L, C)
        v = self.to_v(context)
        attn = torch.softmax(q @ k.transpose(1, 2) * self.scale, dim=-1)
        out = self.to_out(attn @ v)                                # (B, hw, C)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class _EncoderCore(nn.Module):
    """Stem + per-level residual blocks + downsamples; returns level skips."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        chs = config.level_channels
        self.stem = nn.Conv2d(config.in_channels, chs[0], 3, padding=1)
        self.levels = nn.ModuleList()
        self.downs = nn.ModuleList()
        for i in range(config.num_levels):
            blocks = nn.ModuleList(
                [ResidualBlock(chs[i], chs[i], config.time_dim) for j in range(config.res_blocks)]
            )
            self.levels.append(blocks)
            if i < config.num_levels - 1:
                self.downs.append(nn.Conv2d(chs[i], chs[i + 1], 3, stride=2, padding=1))

    def forward(self, x: torch.Tensor, temb: torch.Tensor):
        h = self.stem(x)
        skips = []
        for i, blocks in enumerate(self.levels):
            for block in blocks:
                h = block(h, temb)
            skips.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)
        return h, skips


class ConditionalUNet(nn.Module):
    """Noise predictor eps_hat(x_t, t | prompt tokens, LR tokens, LR image, dense guidance)."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        chs = config.level_channels

        self.time_mlp = nn.Sequential(
            nn.Linear(config.base_channels, config.time_dim),
            nn.SiLU(),
            nn.Linear(config.time_dim, config.time_dim),
        )

        self.encoder = _EncoderCore(config)

        self.mid_block1 = ResidualBlock(chs[-1], chs[-1], config.time_dim)
        self.mid_attn_text = (
            CrossAttention(chs[-1], config.text_context_dim) if config.middle_attention else None
        )
        self.mid_attn_lr = (
            CrossAttention(chs[-1], config.lr_context_dim) if config.middle_attention else None
        )
        self.mid_block2 = ResidualBlock(chs[-1], chs[-1], config.time_dim)

        self.dec_blocks = nn.ModuleList()
        self.dec_attn_text = nn.ModuleDict()
        self.dec_attn_lr = nn.ModuleDict()
        self.fusions = nn.ModuleDict()
        self.ups = nn.ModuleList()
        for i in range(config.num_levels - 1, -1, -1):
            blocks = nn.ModuleList(
                [ResidualBlock(chs[i] * 2 if j == 0 else chs[i], chs[i], config.time_dim)
                 for j in range(config.res_blocks)]
            )
            self.dec_blocks.append(blocks)
            if i in config.attention_levels:
                self.dec_attn_text[str(i)] = CrossAttention(chs[i], config.text_context_dim)
                self.dec_attn_lr[str(i)] = CrossAttention(chs[i], config.lr_context_dim)
            if i in config.gfm_levels and config.guidance != "none":
                self.fusions[str(i)] = GuidanceFusion(
                    feature_channels=chs[i],
                    mask_channels=3,
                    embed_channels=config.embed_channels,
                    hidden_channels=config.fusion_hidden,
                    fusion_mode=config.fusion_mode,
                    guidance=config.guidance,
                )
            if i > 0:
                self.ups.append(nn.Conv2d(chs[i], chs[i - 1], 3, padding=1))

        self.out_norm = nn.GroupNorm(_groups(chs[0]), chs[0])
        self.out_act = nn.SiLU()
        self.out_conv = nn.Conv2d(chs[0], config.out_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

        if config.use_control:
            self.control_encoder = _EncoderCore(config)
            self.control_proj = nn.ModuleList(
                [nn.Conv2d(c, c, 1) for c in chs]
            )
            for proj in self.control_proj:
                nn.init.zeros_(proj.weight)
                nn.init.zeros_(proj.bias)
        else:
            self.control_encoder = None
            self.control_proj = None

        if config.guidance in ("full", "no-mask"):
            self.compressor = EmbeddingMapCompressor(
                in_channels=config.embed_raw_dim,
                hidden_channels=config.embed_hidden,
                out_channels=config.embed_channels,
            )
        else:
            self.compressor = None

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def fusion_scales(self, sr_hw: tuple[int, int]) -> list[tuple[int, int]]:
        return self.config.fusion_scales(sr_hw)

    def _check_input(self, x: torch.Tensor) -> None:
        div = 1 << (self.config.num_levels - 1)
        if x.shape[-2] % div or x.shape[-1] % div:
            raise ShapeError(
                f"spatial dims {tuple(x.shape[-2:])} must be divisible by {div}"
            )

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        cond: ConditioningBatch,
        *,
        enable_control: bool = True,
        enable_fusion: bool = True,
        guidance_mode: str | None = None,
    ) -> torch.Tensor:
        self._check_input(x)
        cfg = self.config
        temb = self.time_mlp(timestep_embedding(t, cfg.base_channels).to(x.dtype))

        control_skips = None
        if enable_control and self.control_encoder is not None:
            if cond.control_image is None:
                raise ConfigError("control branch enabled but no control image provided")
            _, control_skips = self.control_encoder(cond.control_image, temb)

        mode = guidance_mode or cond.mode
        embed_rows = None
        if (
            enable_fusion
            and self.compressor is not None
            and mode in ("full", "no-mask")
            and len(self.fusions) > 0
        ):
            if cond.table_rows is None:
                raise ConfigError("guidance mode needs embedding-table rows in the batch")
            embed_rows = self.compressor.compress_rows(cond.table_rows)

        h, skips = self.encoder(x, temb)

        h = self.mid_block1(h, temb)
        if self.mid_attn_text is not None:
            h = self.mid_attn_text(h, cond.text_tokens)
            h = self.mid_attn_lr(h, cond.lr_tokens)
        h = self.mid_block2(h, temb)

        up_idx = 0
        for pos, i in enumerate(range(cfg.num_levels - 1, -1, -1)):
            skip = skips[i]
            if control_skips is not None:
                skip = skip + self.control_proj[i](control_skips[i])
            h = torch.cat([h, skip], dim=1)
            for block in self.dec_blocks[pos]:
                h = block(h, temb)
            if str(i) in self.dec_attn_text:
                h = self.dec_attn_text[str(i)](h, cond.text_tokens)
                h = self.dec_attn_lr[str(i)](h, cond.lr_tokens)
            if enable_fusion and str(i) in self.fusions and mode != "none":
                hw = (h.shape[-2], h.shape[-1])
                if hw not in cond.mask_scales and hw not in cond.label_rows:
                    raise ConfigError(f"no guidance provided for fusion site at {hw}")
                mask = cond.mask_scales.get(hw)
                embed = None
                if embed_rows is not None and hw in cond.label_rows:
                    rows = cond.label_rows[hw]
                    embed = embed_rows[rows].permute(0, 3, 1, 2)
                h = self.fusions[str(i)](h, mask_rgb=mask, embed_map=embed, mode=mode)
            if i > 0:
                h = nn.functional.interpolate(h, scale_factor=2, mode="nearest")
                h = self.ups[up_idx](h)
                up_idx += 1

        return self.out_conv(self.out_act(self.out_norm(h)))


def predict_noise(
    model: ConditionalUNet,
    x_t: torch.Tensor,
    t: torch.Tensor,
    cond: ConditioningBatch,
    **flags,
) -> torch.Tensor:
    """Functional wrapper over the model's forward pass."""
    return model(x_t, t, cond, **flags)
