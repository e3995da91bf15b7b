"""Single-order real-world degradation synthesis for LR/HR training pairs.

One pass of blur -> random-mode downsample -> additive Gaussian noise ->
JPEG round-trip, with every stage parameter drawn from the supplied RNG so a
fixed seed reproduces the LR image bit-exactly. The stage sequence is kept
in one place so a second-order chain is a config extension, not a rewrite.
"""

from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import ShapeError, ValidationError
from .imgio import jpeg_roundtrip

RESIZE_INTERP = {
    "bicubic": cv2.INTER_CUBIC,
    "bilinear": cv2.INTER_LINEAR,
    "nearest": cv2.INTER_NEAREST,
}


@dataclass(frozen=True)
class DegradationConfig:
    blur_sigma: tuple = (0.2, 2.0)
    resize_modes: dict = field(default_factory=lambda: {"bicubic": 0.7, "bilinear": 0.2, "nearest": 0.1})
    noise_sigma: tuple = (1.0, 15.0)     # additive Gaussian, 8-bit levels
    jpeg_quality: tuple = (60, 95)
    scale: int = 4

    def __post_init__(self):
        for name, rng in (("blur_sigma", self.blur_sigma), ("noise_sigma", self.noise_sigma),
                          ("jpeg_quality", self.jpeg_quality)):
            if len(rng) != 2 or rng[0] > rng[1]:
                raise ValidationError(f"{name} range must be (lo, hi) with lo <= hi, got {rng}")
        if self.blur_sigma[0] < 0 or self.noise_sigma[0] < 0:
            raise ValidationError("sigma ranges must be non-negative")
        if not (1 <= self.jpeg_quality[0] and self.jpeg_quality[1] <= 100):
            raise ValidationError(f"jpeg_quality must lie in [1, 100], got {self.jpeg_quality}")
        for mode in self.resize_modes:
            if mode not in RESIZE_INTERP:
                raise ValidationError(f"unknown resize mode {mode!r}")
        total = sum(self.resize_modes.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"resize mode probabilities must sum to 1, got {total}")
        if int(self.scale) != self.scale or self.scale < 1:
            raise ValidationError(f"scale must be a positive integer, got {self.scale}")


@dataclass(frozen=True)
class StageParams:
    """Concrete per-image draw of all stage parameters."""

    blur_sigma: float
    resize_mode: str
    noise_sigma: float
    jpeg_quality: int
    noise_seed: int
    scale: int

    def as_dict(self) -> dict:
        return {
            "blur_sigma": round(self.blur_sigma, 6),
            "resize_mode": self.resize_mode,
            "noise_sigma": round(self.noise_sigma, 6),
            "jpeg_quality": self.jpeg_quality,
            "noise_seed": self.noise_seed,
            "scale": self.scale,
        }


def sample_stage_params(config: DegradationConfig, rng: np.random.Generator) -> StageParams:
    modes = sorted(config.resize_modes)
    probs = np.array([config.resize_modes[m] for m in modes], dtype=np.float64)
    return StageParams(
        blur_sigma=float(rng.uniform(*config.blur_sigma)),
        resize_mode=str(rng.choice(modes, p=probs / probs.sum())),
        noise_sigma=float(rng.uniform(*config.noise_sigma)),
        jpeg_quality=int(rng.integers(config.jpeg_quality[0], config.jpeg_quality[1] + 1)),
        noise_seed=int(rng.integers(0, 2**31 - 1)),
        scale=int(config.scale),
    )


def apply_degradation(hr_image: np.ndarray, params: StageParams) -> np.ndarray:
    """Run the four-stage pipeline with fixed parameters."""
    if hr_image.ndim != 3 or hr_image.shape[2] != 3 or hr_image.dtype != np.uint8:
        raise ValidationError(f"expected (H, W, 3) uint8 HR image, got {hr_image.dtype} {hr_image.shape}")
    h, w = hr_image.shape[:2]
    if h % params.scale or w % params.scale:
        raise ShapeError(f"HR dims {(h, w)} not divisible by scale {params.scale}")

    img = hr_image
    if params.blur_sigma > 0:
        ksize = 2 * int(np.ceil(3.0 * params.blur_sigma)) + 1
        img = cv2.GaussianBlur(img, (ksize, ksize), params.blur_sigma)

    lh, lw = h // params.scale, w // params.scale
    img = cv2.resize(img, (lw, lh), interpolation=RESIZE_INTERP[params.resize_mode])

    if params.noise_sigma > 0:
        noise_rng = np.random.default_rng(params.noise_seed)
        noisy = img.astype(np.float64) + noise_rng.normal(0.0, params.noise_sigma, img.shape)
        img = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)

    return jpeg_roundtrip(img, params.jpeg_quality)


def degrade(hr_image: np.ndarray, config: DegradationConfig, rng: np.random.Generator) -> np.ndarray:
    """Sample stage parameters from ``rng`` and degrade ``hr_image``."""
    return apply_degradation(hr_image, sample_stage_params(config, rng))
