import sys

import numpy as np
import pytest

from segsr.errors import BackendError, ShapeError, ValidationError
from segsr.imgio import write_image_gray
from segsr.segmentation import (
    BandSegmenter,
    CommandSegmenter,
    PrecomputedMaskSegmenter,
    SegmentationMap,
    load_mask_file,
    resize_labels,
    save_mask_file,
)

from conftest import make_scene, random_label_map


def test_map_validates_range():
    with pytest.raises(ValidationError, match="200"):
        SegmentationMap(labels=np.full((8, 8), 200, dtype=np.uint8))


def test_map_accepts_sentinel():
    seg = SegmentationMap(labels=np.full((8, 8), 255, dtype=np.uint8))
    assert seg.label_set() == {255}


def test_toy_uniform_gray_is_single_class():
    seg = BandSegmenter(num_bands=4).segment(np.full((16, 16, 3), 128, dtype=np.uint8))
    assert len(seg.label_set()) == 1
    assert seg.hw == (16, 16)


def test_toy_deterministic(scene):
    backend = BandSegmenter(num_bands=4)
    a = backend.segment(scene)
    b = backend.segment(scene)
    assert np.array_equal(a.labels, b.labels)


def test_toy_multi_region(scene):
    seg = BandSegmenter(num_bands=4).segment(scene)
    assert len(seg.label_set()) > 1
    assert seg.hw == scene.shape[:2]


def test_toy_rejects_tiny_images():
    with pytest.raises(BackendError, match="toy-bands"):
        BandSegmenter().segment(np.zeros((4, 4, 3), dtype=np.uint8))


def test_mask_file_round_trip(tmp_path):
    seg = random_label_map(1, 32, 24)
    path = tmp_path / "m.png"
    save_mask_file(seg, path)
    loaded = load_mask_file(path, expected_hw=(32, 24))
    assert np.array_equal(loaded.labels, seg.labels)


def test_mask_file_constant_zero(tmp_path):
    path = tmp_path / "z.png"
    write_image_gray(path, np.zeros((128, 128), dtype=np.uint8))
    seg = load_mask_file(path, expected_hw=(128, 128))
    assert seg.label_set() == {0}


def test_mask_file_bad_label(tmp_path):
    path = tmp_path / "bad.png"
    write_image_gray(path, np.full((16, 16), 200, dtype=np.uint8))
    with pytest.raises(ValidationError, match="200"):
        load_mask_file(path)


def test_mask_file_dim_mismatch(tmp_path):
    path = tmp_path / "small.png"
    write_image_gray(path, np.zeros((64, 64), dtype=np.uint8))
    with pytest.raises(ShapeError):
        load_mask_file(path, expected_hw=(128, 128))


def test_oracle_backend_passthrough(tmp_path, scene):
    seg = BandSegmenter().segment(scene)
    save_mask_file(seg, tmp_path / "img0.png")
    oracle = PrecomputedMaskSegmenter(tmp_path)
    loaded = oracle.segment(scene, image_id="img0")
    assert np.array_equal(loaded.labels, seg.labels)


def test_oracle_backend_missing_file(tmp_path, scene):
    oracle = PrecomputedMaskSegmenter(tmp_path)
    with pytest.raises(BackendError, match="mask-files"):
        oracle.segment(scene, image_id="absent")


def test_resize_identity():
    seg = random_label_map(2, 16, 16)
    assert resize_labels(seg, (16, 16)) is seg


def test_resize_quadrants_hand_oracle():
    # 4x4 quadrant map; half-pixel-center rule picks rows/cols {1, 3}
    labels = np.array(
        [
            [0, 0, 1, 1],
            [0, 0, 1, 1],
            [2, 2, 3, 3],
            [2, 2, 3, 3],
        ],
        dtype=np.uint8,
    )
    out = resize_labels(SegmentationMap(labels=labels), (2, 2))
    assert np.array_equal(out.labels, np.array([[0, 1], [2, 3]], dtype=np.uint8))


def test_resize_never_invents_labels():
    for seed in range(10):
        seg = random_label_map(seed, 128, 128, classes=(0, 1, 5, 34, 99))
        out = resize_labels(seg, (16, 16))
        assert out.label_set() <= seg.label_set()
        assert out.hw == (16, 16)


def test_resize_upsample_label_subset():
    seg = random_label_map(3, 8, 8)
    out = resize_labels(seg, (33, 17))
    assert out.label_set() <= seg.label_set()
    assert out.hw == (33, 17)


def test_resize_rejects_empty_target():
    with pytest.raises(ShapeError):
        resize_labels(random_label_map(0), (0, 4))


def test_command_segmenter_runs_script(tmp_path, scene):
    script = tmp_path / "seg.py"
    script.write_text(
        "import sys, cv2\n"
        "img = cv2.imread(sys.argv[1], cv2.IMREAD_COLOR)\n"
        "mask = (img[..., 0] > 127).astype('uint8')\n"
        "cv2.imwrite(sys.argv[2], mask)\n",
        encoding="utf-8",
    )
    backend = CommandSegmenter(f"{sys.executable} {script} {{input}} {{output}}")
    seg = backend.segment(scene)
    assert seg.hw == scene.shape[:2]
    assert seg.label_set() <= {0, 1}


def test_command_segmenter_failure_carries_name(scene):
    backend = CommandSegmenter(f"{sys.executable} -c import_sys_fail {{input}} {{output}}")
    with pytest.raises(BackendError, match="external-command"):
        backend.segment(scene)
