"""Collate per-image guidance bundles into model-ready tensor batches.

Text conditioning uses one context token per comma-separated prompt segment
(class names in label mode, free text in tag mode), padded/truncated to a
fixed length with the empty-text token so batch composition never changes
tensor shapes. The control branch consumes the LR image bicubically
upsampled to the denoiser's resolution.
"""

from dataclasses import dataclass

import cv2
import numpy as np
import torch

from .embeddings import TextEncoder
from .embedding_map import label_row_indices
from .errors import ConfigError, ShapeError
from .guidance import GuidanceBundle
from .prompting import Prompt


@dataclass
class ConditioningBatch:
    """Everything one forward pass consumes besides (x_t, t)."""

    text_tokens: torch.Tensor                      # (B, L, text_dim)
    lr_tokens: torch.Tensor                        # (B, N, lr_dim)
    control_image: torch.Tensor                    # (B, 3, H, W) in [-1, 1]
    mask_scales: dict                              # (h, w) -> (B, 3, h, w) in [0, 1]
    label_rows: dict                               # (h, w) -> (B, h, w) long table-row indices
    table_rows: torch.Tensor | None                # (151, raw_dim) float
    mode: str = "full"

    def to(self, dtype: torch.dtype) -> "ConditioningBatch":
        return ConditioningBatch(
            text_tokens=self.text_tokens.to(dtype),
            lr_tokens=self.lr_tokens.to(dtype),
            control_image=self.control_image.to(dtype),
            mask_scales={k: v.to(dtype) for k, v in self.mask_scales.items()},
            label_rows=self.label_rows,
            table_rows=None if self.table_rows is None else self.table_rows.to(dtype),
            mode=self.mode,
        )

    def select(self, indices: torch.Tensor) -> "ConditioningBatch":
        """Row-subset view for minibatching (table rows are shared, not indexed)."""
        return ConditioningBatch(
            text_tokens=self.text_tokens[indices],
            lr_tokens=self.lr_tokens[indices],
            control_image=self.control_image[indices],
            mask_scales={k: v[indices] for k, v in self.mask_scales.items()},
            label_rows={k: v[indices] for k, v in self.label_rows.items()},
            table_rows=self.table_rows,
            mode=self.mode,
        )


def encode_prompt_tokens(
    prompt: Prompt, encoder: TextEncoder, max_tokens: int
) -> np.ndarray:
    """Fixed-length (max_tokens, dim) context from one prompt."""
    null = np.asarray(encoder.encode(""), dtype=np.float32)
    segments = prompt.segments()[:max_tokens]
    tokens = [np.asarray(encoder.encode(s), dtype=np.float32) for s in segments]
    while len(tokens) < max_tokens:
        tokens.append(null)
    return np.stack(tokens, axis=0)


def upsample_lr(lr_image: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Bicubic-upsample an LR uint8 image to the denoiser resolution."""
    th, tw = target_hw
    out = cv2.resize(lr_image, (tw, th), interpolation=cv2.INTER_CUBIC)
    return out


def image_to_signal(image: np.ndarray) -> np.ndarray:
    """uint8 (H, W, 3) -> float32 (3, H, W) in [-1, 1]."""
    arr = image.astype(np.float32) / 127.5 - 1.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def signal_to_image(signal: np.ndarray) -> np.ndarray:
    """float (3, H, W) in [0, 1] -> uint8 (H, W, 3)."""
    arr = np.clip(signal, 0.0, 1.0).transpose(1, 2, 0)
    return (arr * 255.0 + 0.5).astype(np.uint8)


def collate_conditioning(
    bundles,
    lr_images,
    sr_hw: tuple[int, int],
    text_encoder: TextEncoder,
    lr_backend,
    max_text_tokens: int = 16,
) -> ConditioningBatch:
    """Stack per-image bundles + LR images into one ConditioningBatch.

    All bundles must share the same guidance mode and scale list; the mode
    rides along so the model can route branches accordingly.
    """
    bundles = list(bundles)
    lr_images = list(lr_images)
    if not bundles or len(bundles) != len(lr_images):
        raise ShapeError(f"need equal nonzero bundle/image counts, got {len(bundles)}/{len(lr_images)}")
    mode = bundles[0].mode
    scale_keys = [g.hw for g in bundles[0].per_scale]
    for b in bundles:
        if b.mode != mode:
            raise ConfigError("all bundles in a batch must share one guidance mode")
        if [g.hw for g in b.per_scale] != scale_keys:
            raise ConfigError("all bundles in a batch must share one scale list")

    text = np.stack(
        [encode_prompt_tokens(b.prompt, text_encoder, max_text_tokens) for b in bundles]
    )
    lr_tok = np.stack([np.asarray(lr_backend.encode_image(img), dtype=np.float32) for img in lr_images])
    control = np.stack([image_to_signal(upsample_lr(img, sr_hw)) for img in lr_images])

    mask_scales: dict = {}
    label_rows: dict = {}
    for si, hw in enumerate(scale_keys):
        masks = np.stack(
            [b.per_scale[si].mask_rgb.astype(np.float32).transpose(2, 0, 1) / 255.0 for b in bundles]
        )
        rows = np.stack([label_row_indices(np.asarray(b.per_scale[si].labels.labels)) for b in bundles])
        mask_scales[hw] = torch.from_numpy(masks)
        label_rows[hw] = torch.from_numpy(rows)

    table_rows = None
    if mode in ("full", "no-mask"):
        table_rows = torch.from_numpy(bundles[0].table.rows.copy())

    return ConditioningBatch(
        text_tokens=torch.from_numpy(text),
        lr_tokens=torch.from_numpy(lr_tok),
        control_image=torch.from_numpy(control),
        mask_scales=mask_scales,
        label_rows=label_rows,
        table_rows=table_rows,
        mode=mode,
    )


def null_text_batch(batch: ConditioningBatch, encoder: TextEncoder) -> ConditioningBatch:
    """Copy of a batch with every text token replaced by the empty-text token
    (the unconditional side of text classifier-free guidance)."""
    b, l, _ = batch.text_tokens.shape
    null = torch.from_numpy(np.asarray(encoder.encode(""), dtype=np.float32))
    tokens = null.expand(b, l, -1).to(batch.text_tokens.dtype).clone()
    return ConditioningBatch(
        text_tokens=tokens,
        lr_tokens=batch.lr_tokens,
        control_image=batch.control_image,
        mask_scales=batch.mask_scales,
        label_rows=batch.label_rows,
        table_rows=batch.table_rows,
        mode=batch.mode,
    )
