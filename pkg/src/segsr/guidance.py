"""Dense guidance assembly: colorized masks, embedding maps, and bundles.

Every spatial variant is derived by resampling the label field first and
colorizing / looking up afterwards, so region boundaries never blend colors
or embeddings. The bundle carries the prompt, the base-resolution guidance,
and one entry per requested feature scale.
"""

import colorsys
import os
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingTable
from .embedding_map import build_embedding_map
from .errors import ValidationError
from .prompting import Prompt, prompt_from_map
from .segmentation import SegmentationMap, SegmenterBackend, resize_labels
from .taxonomy import NUM_CLASSES, UNLABELED_INDEX

GUIDANCE_MODES = ("full", "no-mask", "no-scmap", "none")

UNLABELED_COLOR = (0, 0, 0)


def build_palette(num_classes: int = NUM_CLASSES) -> tuple[tuple[int, int, int], ...]:
    """151 RGB triples: 150 distinct class colors plus black for unlabeled.

    Hues step around the wheel in three saturation/value tiers (50 hues per
    tier, 7.2 degrees apart), far enough apart to stay distinct in 8-bit RGB.
    """
    colors: list[tuple[int, int, int]] = []
    tiers = ((0.95, 0.95), (0.55, 0.85), (0.85, 0.55))
    per_tier = (num_classes + len(tiers) - 1) // len(tiers)
    for i in range(num_classes):
        tier, slot = divmod(i, per_tier)
        hue = (slot / per_tier + tier * 0.33) % 1.0
        sat, val = tiers[tier]
        r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
        colors.append((round(r * 255), round(g * 255), round(b * 255)))
    if len(set(colors)) != num_classes or UNLABELED_COLOR in colors:
        raise ValidationError("palette construction produced colliding colors")
    return tuple(colors) + (UNLABELED_COLOR,)


DEFAULT_PALETTE = build_palette()


def _palette_lut(palette) -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    lut[: len(palette) - 1] = np.asarray(palette[:-1], dtype=np.uint8)
    lut[UNLABELED_INDEX] = np.asarray(palette[-1], dtype=np.uint8)
    return lut


def colorize_labels(seg: SegmentationMap, palette=DEFAULT_PALETTE) -> np.ndarray:
    """Render a label field as an (H, W, 3) RGB image, one color per class."""
    return _palette_lut(palette)[seg.labels]


def labels_from_colors(rgb: np.ndarray, palette=DEFAULT_PALETTE) -> SegmentationMap:
    """Invert colorize_labels; unknown colors raise ValidationError."""
    lut = _palette_lut(palette)
    keys = (
        lut[:, 0].astype(np.uint32) << 16
    ) | (lut[:, 1].astype(np.uint32) << 8) | lut[:, 2].astype(np.uint32)
    valid = np.concatenate([np.arange(NUM_CLASSES), [UNLABELED_INDEX]])
    table = {int(keys[i]): int(i) for i in valid}
    flat = (
        rgb[..., 0].astype(np.uint32) << 16
    ) | (rgb[..., 1].astype(np.uint32) << 8) | rgb[..., 2].astype(np.uint32)
    out = np.empty(rgb.shape[:2], dtype=np.uint8)
    for key in np.unique(flat):
        if int(key) not in table:
            raise ValidationError(f"color {int(key):06x} not in palette")
        out[flat == key] = table[int(key)]
    return SegmentationMap(labels=out)


@dataclass(frozen=True)
class ScaleGuidance:
    """Guidance resampled to one feature resolution."""

    hw: tuple[int, int]
    labels: SegmentationMap
    mask_rgb: np.ndarray  # (h, w, 3) uint8


@dataclass(frozen=True)
class GuidanceBundle:
    """Everything the denoiser consumes for one image.

    Embedding maps are kept lazy as (labels, table) and expanded on demand;
    the raw per-pixel map is never stored at full channel depth.
    """

    prompt: Prompt
    labels: SegmentationMap
    mask_rgb: np.ndarray
    per_scale: tuple[ScaleGuidance, ...]
    table: EmbeddingTable | None
    mode: str = "full"

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ValidationError(f"guidance mode must be one of {GUIDANCE_MODES}, got {self.mode!r}")
        if self.mode in ("full", "no-mask") and self.table is None:
            raise ValidationError(f"mode {self.mode!r} needs an embedding table")

    @property
    def uses_mask(self) -> bool:
        return self.mode in ("full", "no-scmap")

    @property
    def uses_embedding_map(self) -> bool:
        return self.mode in ("full", "no-mask")

    def embedding_map(self, scale_index: int) -> np.ndarray:
        """Expand the raw (h, w, dim) embedding map for one scale entry."""
        if self.table is None:
            raise ValidationError("bundle carries no embedding table")
        return build_embedding_map(self.per_scale[scale_index].labels, self.table)


def build_guidance(
    image: np.ndarray,
    segmenter: SegmenterBackend,
    table: EmbeddingTable | None,
    taxonomy,
    scales,
    *,
    min_area_fraction: float = 0.0,
    mode: str = "full",
    prompt_override: Prompt | None = None,
    palette=DEFAULT_PALETTE,
    image_id: str | None = None,
) -> GuidanceBundle:
    """Segment an LR image and assemble its full guidance bundle.

    ``scales`` lists the (h, w) feature resolutions that will consume dense
    guidance; each gets a nearest-neighbor-resampled label field with its
    own colorized mask. ``prompt_override`` switches prompting from labels
    to an externally supplied text (tag-file ablation).
    """
    seg = segmenter.segment(image, image_id=image_id)
    if prompt_override is not None:
        prompt = prompt_override
    else:
        prompt = prompt_from_map(seg, taxonomy, min_area_fraction)
    per_scale = []
    for hw in scales:
        seg_s = resize_labels(seg, hw)
        per_scale.append(
            ScaleGuidance(hw=tuple(hw), labels=seg_s, mask_rgb=colorize_labels(seg_s, palette))
        )
    return GuidanceBundle(
        prompt=prompt,
        labels=seg,
        mask_rgb=colorize_labels(seg, palette),
        per_scale=tuple(per_scale),
        table=table,
        mode=mode,
    )


def dump_guidance(bundle: GuidanceBundle, out_dir, image_id: str) -> None:
    """Debug dump: mask PNG + prompt text for one image."""
    os.makedirs(out_dir, exist_ok=True)
    from .imgio import write_image_rgb

    write_image_rgb(os.path.join(out_dir, f"{image_id}_mask.png"), bundle.mask_rgb)
    with open(os.path.join(out_dir, f"{image_id}_prompt.txt"), "w", encoding="utf-8") as fh:
        fh.write(bundle.prompt.text + "\n")
