import pytest

from segsr.errors import TaxonomyError
from segsr.taxonomy import (
    NUM_CLASSES,
    UNLABELED_INDEX,
    LabelTaxonomy,
    default_taxonomy,
    load_taxonomy,
    save_taxonomy,
)


def test_anchor_names():
    tax = default_taxonomy()
    assert tax.class_name(0) == "wall"
    assert tax.class_name(1) == "building"
    assert tax.class_name(34) == "rock, stone"
    assert tax.class_name(UNLABELED_INDEX) == ""


def test_size_and_nonempty_names():
    tax = default_taxonomy()
    assert len(tax.names) == NUM_CLASSES
    assert all(tax.names)
    # distinct strings keep stub embeddings collision-free
    assert len(set(tax.names)) == NUM_CLASSES


def test_lookup_total_over_valid_range():
    tax = default_taxonomy()
    for i in range(NUM_CLASSES):
        assert tax.class_name(i)
    assert tax.class_name(UNLABELED_INDEX) == ""


@pytest.mark.parametrize("bad", [-1, 150, 200, 256])
def test_out_of_range_index_names_value(bad):
    tax = default_taxonomy()
    with pytest.raises(TaxonomyError, match=str(bad)):
        tax.class_name(bad)


def test_pure_function_across_calls():
    tax = default_taxonomy()
    assert [tax.class_name(i) for i in range(150)] == [tax.class_name(i) for i in range(150)]


def test_load_well_formed(tmp_path):
    path = tmp_path / "tax.tsv"
    save_taxonomy(default_taxonomy(), path)
    tax = load_taxonomy(path)
    assert len(tax.names) == NUM_CLASSES


def test_round_trip_reproduces_file(tmp_path):
    src = tmp_path / "a.tsv"
    dst = tmp_path / "b.tsv"
    save_taxonomy(default_taxonomy(), src)
    save_taxonomy(load_taxonomy(src), dst)
    assert src.read_bytes() == dst.read_bytes()


def test_duplicate_index_cites_value(tmp_path):
    lines = [f"{i}\tname{i}" for i in range(NUM_CLASSES)]
    lines[20] = "7\tdupe"
    path = tmp_path / "dup.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(TaxonomyError, match="7"):
        load_taxonomy(path)


def test_missing_class_is_error(tmp_path):
    lines = [f"{i}\tname{i}" for i in range(NUM_CLASSES - 1)]
    path = tmp_path / "short.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(TaxonomyError, match="missing"):
        load_taxonomy(path)


def test_malformed_line_reports_lineno(tmp_path):
    lines = [f"{i}\tname{i}" for i in range(NUM_CLASSES)]
    lines[3] = "not a pair"
    path = tmp_path / "bad.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(TaxonomyError, match=":4"):
        load_taxonomy(path)


def test_constructor_rejects_wrong_count():
    with pytest.raises(TaxonomyError):
        LabelTaxonomy(names=("wall", "building"))
