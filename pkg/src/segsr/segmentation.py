"""Per-pixel semantic label maps and the pluggable segmenter backends.

Three backends cover the desk-scale needs: a deterministic luminance-band
toy segmenter for tests, a precomputed-mask oracle reading label PNGs from a
directory, and an external-command adapter for wiring in a real model.
All label-field resampling is nearest-neighbor; interpolating class indices
would fabricate classes.
"""

import os
import shlex
import subprocess
import tempfile
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import BackendError, ShapeError, ValidationError
from .imgio import read_image_gray, write_image_gray, write_image_rgb
from .taxonomy import NUM_CLASSES, UNLABELED_INDEX

# Luminance-band -> class assignment for the toy segmenter. Darkest band
# first. Indices are ADE20K classes (earth, water, building, tree, sky, ...).
DEFAULT_BAND_CLASSES = (13, 21, 1, 4, 2, 9, 16, 0)


def _check_labels(labels: np.ndarray) -> None:
    bad = labels[(labels >= NUM_CLASSES) & (labels != UNLABELED_INDEX)]
    if bad.size:
        raise ValidationError(
            f"label value {int(bad.flat[0])} outside valid range [0, {NUM_CLASSES}) + {{{UNLABELED_INDEX}}}"
        )


@dataclass(frozen=True)
class SegmentationMap:
    """Immutable (H, W) field of class indices (uint8; 255 = unlabeled)."""

    labels: np.ndarray

    def __post_init__(self):
        if self.labels.ndim != 2 or self.labels.dtype != np.uint8:
            raise ValidationError(
                f"labels must be (H, W) uint8, got {self.labels.dtype} shape {self.labels.shape}"
            )
        _check_labels(self.labels)
        frozen = np.ascontiguousarray(self.labels).copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "labels", frozen)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def hw(self) -> tuple[int, int]:
        return self.labels.shape

    def label_set(self) -> set[int]:
        return {int(v) for v in np.unique(self.labels)}


class SegmenterBackend(ABC):
    """Backend contract: deterministic image -> SegmentationMap."""

    name: str = "base"

    @abstractmethod
    def segment(self, image: np.ndarray, *, image_id: str | None = None) -> SegmentationMap:
        """Segment an 8-bit RGB image at its native resolution.

        ``image_id`` identifies the image for file-based backends; in-process
        backends ignore it.
        """

    def _check_image(self, image: np.ndarray) -> None:
        if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
            raise BackendError(self.name, f"expected (H, W, 3) uint8 image, got {image.dtype} {image.shape}")
        if image.shape[0] < 8 or image.shape[1] < 8:
            raise BackendError(self.name, f"image too small: {image.shape[:2]}")


class BandSegmenter(SegmenterBackend):
    """Toy backend: quantize luminance into bands, one fixed class per band.

    Deterministic and model-free; produces multi-region maps on any image
    with intensity variation.
    """

    name = "toy-bands"

    def __init__(self, num_bands: int = 4, band_classes=DEFAULT_BAND_CLASSES):
        if not 1 <= num_bands <= len(band_classes):
            raise ValidationError(f"num_bands must be in [1, {len(band_classes)}]")
        self.num_bands = num_bands
        self.band_classes = tuple(int(c) for c in band_classes[:num_bands])

    def segment(self, image: np.ndarray, *, image_id: str | None = None) -> SegmentationMap:
        self._check_image(image)
        # integer BT.601 luma so band edges cannot move with float rounding
        r, g, b = (image[..., i].astype(np.uint32) for i in range(3))
        luma = (299 * r + 587 * g + 114 * b) // 1000
        bands = np.minimum((luma * self.num_bands) // 256, self.num_bands - 1)
        lut = np.array(self.band_classes, dtype=np.uint8)
        return SegmentationMap(labels=lut[bands])


class PrecomputedMaskSegmenter(SegmenterBackend):
    """Oracle backend: load ``<dir>/<image_id>.png`` label maps verbatim."""

    name = "mask-files"

    def __init__(self, mask_dir):
        self.mask_dir = str(mask_dir)

    def segment(self, image: np.ndarray, *, image_id: str | None = None) -> SegmentationMap:
        self._check_image(image)
        if image_id is None:
            raise BackendError(self.name, "image_id required to locate the stored mask")
        path = os.path.join(self.mask_dir, f"{image_id}.png")
        if not os.path.exists(path):
            raise BackendError(self.name, f"no stored mask for {image_id!r} at {path}")
        try:
            return load_mask_file(path, expected_hw=image.shape[:2])
        except (ValidationError, ShapeError) as exc:
            raise BackendError(self.name, str(exc)) from exc


class CommandSegmenter(SegmenterBackend):
    """External-process adapter.

    Runs ``command`` with ``{input}``/``{output}`` placeholders substituted by
    temp-file paths; the command must write a single-channel 8-bit label PNG
    (value = class index, 255 = unlabeled) at the input's resolution.
    """

    name = "external-command"

    def __init__(self, command: str):
        if "{input}" not in command or "{output}" not in command:
            raise ValidationError("command must contain {input} and {output} placeholders")
        self.command = command

    def segment(self, image: np.ndarray, *, image_id: str | None = None) -> SegmentationMap:
        self._check_image(image)
        with tempfile.TemporaryDirectory(prefix="segsr-seg-") as tmp:
            in_path = os.path.join(tmp, "input.png")
            out_path = os.path.join(tmp, "output.png")
            write_image_rgb(in_path, image)
            argv = [
                part.replace("{input}", in_path).replace("{output}", out_path)
                for part in shlex.split(self.command)
            ]
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise BackendError(self.name, f"command failed ({proc.returncode}): {proc.stderr.strip()}")
            if not os.path.exists(out_path):
                raise BackendError(self.name, "command produced no output mask")
            try:
                return load_mask_file(out_path, expected_hw=image.shape[:2])
            except (ValidationError, ShapeError) as exc:
                raise BackendError(self.name, str(exc)) from exc


def load_mask_file(path, expected_hw: tuple[int, int] | None = None) -> SegmentationMap:
    """Load a single-channel 8-bit label PNG, validating range and dimensions."""
    labels = read_image_gray(path)
    if expected_hw is not None and labels.shape != tuple(expected_hw):
        raise ShapeError(f"mask {path} has shape {labels.shape}, expected {tuple(expected_hw)}")
    return SegmentationMap(labels=labels)


def save_mask_file(seg: SegmentationMap, path) -> None:
    write_image_gray(path, np.asarray(seg.labels))


def resize_labels(seg: SegmentationMap, target_hw: tuple[int, int]) -> SegmentationMap:
    """Nearest-neighbor resample of the label field.

    Each target pixel takes the source pixel under its half-pixel center:
    src = min(S - 1, floor((i + 0.5) * S / T)). The output label set is
    therefore always a subset of the input's.
    """
    th, tw = int(target_hw[0]), int(target_hw[1])
    if th < 1 or tw < 1:
        raise ShapeError(f"target dims must be >= 1x1, got {(th, tw)}")
    h, w = seg.hw
    if (th, tw) == (h, w):
        return seg
    rows = np.minimum(((np.arange(th) + 0.5) * h / th).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(tw) + 0.5) * w / tw).astype(np.int64), w - 1)
    return SegmentationMap(labels=np.ascontiguousarray(seg.labels[np.ix_(rows, cols)]))
