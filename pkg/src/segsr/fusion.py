"""Pointwise feature modulation driven by dense semantic guidance.

A ModulationBlock maps a condition image (colorized mask or compressed
embedding map) through 1x1 convolutions to per-pixel scale and shift maps;
two pixels with the same condition vector always receive identical
parameters. A GuidanceFusion owns one block per condition and merges the
two modulated features.

Fusion modes:
  sum:      F' = F'_mask + F'_embed (the literal two-branch sum). Gamma
            heads start at 0.5 each so the summed output is exactly F at
            initialization.
  residual: F' = F'_mask + F'_embed - F, with gamma heads starting at 1.
Either way a freshly initialized module is an exact identity, and with a
single active branch (ablations) F' is just that branch's output.
"""

import torch
from torch import nn

from .errors import ConfigError, ShapeError

FUSION_MODES = ("sum", "residual")


def modulate(features: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """Elementwise gamma * F + beta; all three shapes must match."""
    if features.shape != gamma.shape or features.shape != beta.shape:
        raise ShapeError(
            f"feature/gamma/beta shapes differ: {tuple(features.shape)} vs "
            f"{tuple(gamma.shape)} vs {tuple(beta.shape)}"
        )
    return gamma * features + beta


class ModulationBlock(nn.Module):
    """Predict per-pixel (gamma, beta) from a condition, using 1x1 convs only.

    The gamma head starts as the constant ``gamma_init`` and the beta head
    as constant 0 (zero weights, fixed bias), making the block an exact
    identity modulation at initialization.
    """

    def __init__(
        self,
        in_channels: int,
        feature_channels: int,
        hidden_channels: int = 64,
        gamma_init: float = 1.0,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.feature_channels = feature_channels
        self.trunk = nn.Conv2d(in_channels, hidden_channels, kernel_size=1)
        self.act = nn.SiLU()
        self.gamma_head = nn.Conv2d(hidden_channels, feature_channels, kernel_size=1)
        self.beta_head = nn.Conv2d(hidden_channels, feature_channels, kernel_size=1)
        nn.init.zeros_(self.gamma_head.weight)
        nn.init.constant_(self.gamma_head.bias, gamma_init)
        nn.init.zeros_(self.beta_head.weight)
        nn.init.zeros_(self.beta_head.bias)

    def forward(self, condition: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if condition.ndim != 4 or condition.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected (B, {self.in_channels}, H, W) condition, got {tuple(condition.shape)}"
            )
        hidden = self.act(self.trunk(condition))
        return self.gamma_head(hidden), self.beta_head(hidden)

    def apply_to(self, features: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        gamma, beta = self(condition)
        return modulate(features, gamma, beta)


class GuidanceFusion(nn.Module):
    """Fuse mask- and embedding-map-conditioned modulations of one feature map.

    ``guidance`` selects which branches exist: "full" builds both, "no-mask"
    only the embedding branch, "no-scmap" only the mask branch, "none"
    neither (identity). A runtime ``mode`` override may further drop an
    existing branch for inference-time ablation.
    """

    def __init__(
        self,
        feature_channels: int,
        mask_channels: int = 3,
        embed_channels: int = 128,
        hidden_channels: int = 64,
        fusion_mode: str = "sum",
        guidance: str = "full",
    ):
        super().__init__()
        if fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}, got {fusion_mode!r}")
        self.fusion_mode = fusion_mode
        self.guidance = guidance
        both = guidance == "full"
        gamma_init = 0.5 if (both and fusion_mode == "sum") else 1.0
        self.mask_block = (
            ModulationBlock(mask_channels, feature_channels, hidden_channels, gamma_init)
            if guidance in ("full", "no-scmap")
            else None
        )
        self.embed_block = (
            ModulationBlock(embed_channels, feature_channels, hidden_channels, gamma_init)
            if guidance in ("full", "no-mask")
            else None
        )

    def forward(
        self,
        features: torch.Tensor,
        mask_rgb: torch.Tensor | None = None,
        embed_map: torch.Tensor | None = None,
        mode: str | None = None,
    ) -> torch.Tensor:
        mode = mode or self.guidance
        use_mask = self.mask_block is not None and mode in ("full", "no-scmap")
        use_embed = self.embed_block is not None and mode in ("full", "no-mask")
        if use_mask and mask_rgb is None:
            raise ConfigError("mask condition required but not provided")
        if use_embed and embed_map is None:
            raise ConfigError("embedding-map condition required but not provided")
        if use_mask and use_embed:
            out_mask = self.mask_block.apply_to(features, mask_rgb)
            out_embed = self.embed_block.apply_to(features, embed_map)
            fused = out_mask + out_embed
            if self.fusion_mode == "residual":
                fused = fused - features
            return fused
        if use_mask:
            return self.mask_block.apply_to(features, mask_rgb)
        if use_embed:
            return self.embed_block.apply_to(features, embed_map)
        return features
