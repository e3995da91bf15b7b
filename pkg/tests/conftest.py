import numpy as np
import pytest

from segsr.segmentation import SegmentationMap


def make_scene(seed: int, size: int = 64, n_shapes: int = 6) -> np.ndarray:
    """Deterministic piecewise-flat test image: colored rectangles on a base.

    Sharp region edges make bicubic upsampling a beatable baseline and give
    the toy segmenter multi-region maps.
    """
    rng = np.random.default_rng(seed)
    img = np.full((size, size, 3), rng.integers(30, 120, 3), dtype=np.uint8)
    for _ in range(n_shapes):
        h = int(rng.integers(size // 6, size // 2))
        w = int(rng.integers(size // 6, size // 2))
        y = int(rng.integers(0, size - h))
        x = int(rng.integers(0, size - w))
        img[y : y + h, x : x + w] = rng.integers(0, 256, 3)
    return img


def random_label_map(seed: int, h: int = 8, w: int = 8, classes=(0, 1, 2, 34), p_unlabeled=0.1):
    """Random SegmentationMap over a few classes plus some unlabeled pixels."""
    rng = np.random.default_rng(seed)
    labels = rng.choice(np.asarray(classes, dtype=np.uint8), size=(h, w))
    mask = rng.random((h, w)) < p_unlabeled
    labels = np.where(mask, np.uint8(255), labels).astype(np.uint8)
    return SegmentationMap(labels=labels)


@pytest.fixture
def scene():
    return make_scene(0)
