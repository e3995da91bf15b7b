"""Thin cv2 wrappers keeping everything RGB, uint8, HWC at the boundaries."""

import os

import cv2
import numpy as np

from .errors import ValidationError


def read_image_rgb(path) -> np.ndarray:
    """Load an 8-bit image as (H, W, 3) RGB uint8."""
    data = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if data is None:
        raise ValidationError(f"cannot read image: {path}")
    return cv2.cvtColor(data, cv2.COLOR_BGR2RGB)


def write_image_rgb(path, image: np.ndarray) -> None:
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"expected (H, W, 3) uint8 image, got {image.dtype} {image.shape}")
    os.makedirs(os.path.dirname(os.path.abspath(str(path))), exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(image, cv2.COLOR_RGB2BGR)):
        raise ValidationError(f"cannot write image: {path}")


def read_image_gray(path) -> np.ndarray:
    """Load a single-channel 8-bit image as (H, W) uint8."""
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise ValidationError(f"cannot read image: {path}")
    if data.ndim != 2 or data.dtype != np.uint8:
        raise ValidationError(
            f"expected single-channel 8-bit image at {path}, got {data.dtype} shape {data.shape}"
        )
    return data


def write_image_gray(path, image: np.ndarray) -> None:
    if image.dtype != np.uint8 or image.ndim != 2:
        raise ValidationError(f"expected (H, W) uint8 image, got {image.dtype} {image.shape}")
    os.makedirs(os.path.dirname(os.path.abspath(str(path))), exist_ok=True)
    if not cv2.imwrite(str(path), image):
        raise ValidationError(f"cannot write image: {path}")


def jpeg_roundtrip(image: np.ndarray, quality: int) -> np.ndarray:
    """Encode/decode an RGB uint8 image through the JPEG codec at ``quality``."""
    bgr = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    ok, buf = cv2.imencode(".jpg", bgr, [int(cv2.IMWRITE_JPEG_QUALITY), int(quality)])
    if not ok:
        raise ValidationError("JPEG encode failed")
    dec = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    return cv2.cvtColor(dec, cv2.COLOR_BGR2RGB)
