import numpy as np
import pytest

from segsr.errors import TaxonomyError, ValidationError
from segsr.prompting import (
    Prompt,
    build_prompt,
    extract_labels,
    load_tag_file,
    prompt_from_map,
    prompt_from_tags,
)
from segsr.segmentation import SegmentationMap
from segsr.taxonomy import default_taxonomy

from conftest import random_label_map


def map_from_counts(counts: dict) -> SegmentationMap:
    """Build a 1-row map holding exactly ``counts[label]`` pixels per label."""
    values = np.concatenate([np.full(n, lbl, dtype=np.uint8) for lbl, n in counts.items()])
    return SegmentationMap(labels=values.reshape(1, -1))


def test_extract_orders_by_area_then_index():
    # sky(2) > tree(4) > tower(84) > building(1) by area
    seg = map_from_counts({2: 40, 4: 30, 84: 20, 1: 10})
    assert extract_labels(seg) == [2, 4, 84, 1]


def test_extract_tie_breaks_ascending_index():
    seg = map_from_counts({9: 10, 3: 10, 7: 20})
    assert extract_labels(seg) == [7, 3, 9]


def test_extract_single_class():
    seg = SegmentationMap(labels=np.zeros((8, 8), dtype=np.uint8))
    assert extract_labels(seg) == [0]


def test_extract_all_unlabeled_empty():
    seg = SegmentationMap(labels=np.full((8, 8), 255, dtype=np.uint8))
    assert extract_labels(seg) == []


def test_extract_area_threshold():
    seg = map_from_counts({0: 99, 1: 1})
    assert extract_labels(seg, min_area_fraction=0.05) == [0]
    assert extract_labels(seg, min_area_fraction=0.0) == [0, 1]


def test_extract_threshold_monotonic():
    seg = random_label_map(5, 32, 32, classes=(0, 1, 2, 3, 4, 34))
    previous = None
    for frac in (0.0, 0.01, 0.05, 0.2, 0.5):
        labels = set(extract_labels(seg, frac))
        if previous is not None:
            assert labels <= previous
        previous = labels


def test_extract_invalid_fraction():
    with pytest.raises(ValidationError):
        extract_labels(random_label_map(0), min_area_fraction=1.0)


def test_pixel_permutation_invariance():
    rng = np.random.default_rng(7)
    seg = random_label_map(7, 16, 16)
    flat = np.asarray(seg.labels).ravel().copy()
    rng.shuffle(flat)
    shuffled = SegmentationMap(labels=flat.reshape(16, 16))
    assert extract_labels(seg) == extract_labels(shuffled)


def test_build_prompt_worked_case():
    tax = default_taxonomy()
    prompt = build_prompt([0, 1], tax)
    assert prompt.text == "wall, building"
    assert prompt.labels == (0, 1)


def test_build_prompt_multiword_verbatim():
    tax = default_taxonomy()
    prompt = build_prompt([34], tax)
    assert prompt.text == "rock, stone"
    assert prompt.segments() == ["rock", "stone"]


def test_build_prompt_empty():
    prompt = build_prompt([], default_taxonomy())
    assert prompt.text == ""
    assert prompt.labels == ()
    assert prompt.segments() == []


def test_build_prompt_drops_sentinel_and_dupes():
    tax = default_taxonomy()
    prompt = build_prompt([2, 255, 2, 4], tax)
    assert prompt.labels == (2, 4)
    assert prompt.text == "sky, tree"


def test_build_prompt_rejects_invalid():
    with pytest.raises(TaxonomyError):
        build_prompt([151], default_taxonomy())


def test_prompt_from_map_deterministic():
    tax = default_taxonomy()
    seg = random_label_map(11, 24, 24)
    assert prompt_from_map(seg, tax) == prompt_from_map(seg, tax)


def test_tag_file_round_trip(tmp_path):
    path = tmp_path / "tags.tsv"
    path.write_text("img0\ta photo of a castle\nimg1\tmossy forest\n", encoding="utf-8")
    tags = load_tag_file(path)
    assert prompt_from_tags(tags, "img0") == Prompt(text="a photo of a castle", labels=())
    with pytest.raises(ValidationError):
        prompt_from_tags(tags, "img9")


def test_tag_file_malformed(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("no-tab-here\n", encoding="utf-8")
    with pytest.raises(ValidationError, match=":1"):
        load_tag_file(path)
