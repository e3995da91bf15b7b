"""Turn segmentation maps into concise text prompts.

Observed class labels, ordered by pixel area (largest first, ties by
ascending index), are joined with ", " into the prompt. Multi-word class
names such as "rock, stone" are included verbatim so every term appears.
An external tag file can replace label prompts for ablation runs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TaxonomyError, ValidationError
from .segmentation import SegmentationMap
from .taxonomy import NUM_CLASSES, LabelTaxonomy


@dataclass(frozen=True)
class Prompt:
    text: str
    labels: tuple[int, ...] = ()

    def segments(self) -> list[str]:
        """Comma-separated pieces of the prompt text (empty prompt -> [])."""
        if not self.text:
            return []
        return [part.strip() for part in self.text.split(",") if part.strip()]


def extract_labels(
    seg: SegmentationMap, min_area_fraction: float = 0.0, unlabeled_index: int = 255
) -> list[int]:
    """Unique observed class indices with area fraction >= threshold.

    Ordered by pixel count descending, ties broken by ascending index; the
    unlabeled sentinel never appears. Depends only on per-class pixel counts,
    so any spatial shuffle of the map yields the same list.
    """
    if not 0.0 <= min_area_fraction < 1.0:
        raise ValidationError(f"min_area_fraction must be in [0, 1), got {min_area_fraction}")
    counts = np.bincount(seg.labels.ravel(), minlength=256)
    total = seg.labels.size
    observed = [
        (int(counts[i]), i)
        for i in range(NUM_CLASSES)
        if counts[i] > 0 and counts[i] / total >= min_area_fraction
    ]
    observed.sort(key=lambda pair: (-pair[0], pair[1]))
    return [idx for _, idx in observed]


def build_prompt(labels, taxonomy: LabelTaxonomy) -> Prompt:
    """Join the class names of ``labels`` with ", ".

    Duplicates keep their first position; the unlabeled sentinel is dropped
    (it has no text to contribute). Invalid indices raise TaxonomyError.
    """
    seen: list[int] = []
    for idx in labels:
        idx = int(idx)
        if idx == taxonomy.unlabeled_index:
            continue
        if not 0 <= idx < NUM_CLASSES:
            raise TaxonomyError(f"class index {idx} out of range [0, {NUM_CLASSES})")
        if idx not in seen:
            seen.append(idx)
    text = ", ".join(taxonomy.class_name(i) for i in seen)
    return Prompt(text=text, labels=tuple(seen))


def prompt_from_map(
    seg: SegmentationMap, taxonomy: LabelTaxonomy, min_area_fraction: float = 0.0
) -> Prompt:
    return build_prompt(extract_labels(seg, min_area_fraction, taxonomy.unlabeled_index), taxonomy)


def load_tag_file(path) -> dict[str, str]:
    """Parse an "image_id<TAB>prompt" tag file (one line per image)."""
    tags: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'image_id<TAB>prompt'")
            image_id = parts[0].strip()
            if image_id in tags:
                raise ValidationError(f"{path}:{lineno}: duplicate image id {image_id!r}")
            tags[image_id] = parts[1].strip()
    return tags


def prompt_from_tags(tags: dict[str, str], image_id: str) -> Prompt:
    if image_id not in tags:
        raise ValidationError(f"no tag prompt for image {image_id!r}")
    return Prompt(text=tags[image_id], labels=())
