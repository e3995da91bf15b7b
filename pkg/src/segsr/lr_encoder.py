"""Pluggable LR-image embedding backends for the LR cross-attention layers.

The shipped default is a frozen, seeded convolutional stub standing in for a
pretrained image encoder: three strided convolutions pooled to a 4x4 grid of
context tokens. Real encoders adapt behind the same interface.
"""

from abc import ABC, abstractmethod

import numpy as np
import torch
from torch import nn

from .conditioning import image_to_signal
from .errors import BackendError


class LREmbeddingBackend(ABC):
    """Deterministic LR image -> (num_tokens, dim) float32 context."""

    name: str = "base"
    dim: int = 256
    num_tokens: int = 16

    @abstractmethod
    def encode_image(self, lr_image: np.ndarray) -> np.ndarray:
        """Encode an 8-bit RGB LR image into context vectors."""


class ConvLREncoder(LREmbeddingBackend):
    """Frozen 3-layer strided conv encoder producing 16 context tokens."""

    name = "conv-stub"

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = int(dim)
        self.seed = int(seed)
        self.num_tokens = 16
        self.name = f"conv-stub-{self.dim}-s{self.seed}"
        with torch.random.fork_rng():
            torch.manual_seed(self.seed)
            self.net = nn.Sequential(
                nn.Conv2d(3, 32, 3, stride=2, padding=1),
                nn.SiLU(),
                nn.Conv2d(32, 64, 3, stride=2, padding=1),
                nn.SiLU(),
                nn.Conv2d(64, self.dim, 3, stride=2, padding=1),
            )
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)

    def encode_image(self, lr_image: np.ndarray) -> np.ndarray:
        if lr_image.ndim != 3 or lr_image.shape[2] != 3 or lr_image.dtype != np.uint8:
            raise BackendError(self.name, f"expected (H, W, 3) uint8, got {lr_image.dtype} {lr_image.shape}")
        x = torch.from_numpy(image_to_signal(lr_image)).unsqueeze(0)
        with torch.no_grad():
            feats = self.net(x)
            pooled = nn.functional.adaptive_avg_pool2d(feats, (4, 4))
        tokens = pooled.squeeze(0).flatten(1).t().contiguous()  # (16, dim)
        return tokens.numpy().astype(np.float32)
