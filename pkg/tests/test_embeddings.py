import numpy as np
import pytest

from segsr.embeddings import (
    UNLABELED_ROW,
    EmbeddingTable,
    HashTextEncoder,
    build_embedding_table,
    load_embedding_table,
    save_embedding_table,
)
from segsr.errors import ValidationError
from segsr.taxonomy import default_taxonomy


def test_empty_text_is_zero_vector():
    enc = HashTextEncoder(dim=64, seed=0)
    assert np.array_equal(enc.encode(""), np.zeros(64, dtype=np.float32))


def test_encode_deterministic():
    enc = HashTextEncoder(dim=1024, seed=3)
    assert np.array_equal(enc.encode("wall"), enc.encode("wall"))


def test_encode_unit_norm_and_dtype():
    enc = HashTextEncoder(dim=256, seed=0)
    v = enc.encode("tree")
    assert v.dtype == np.float32
    assert v.shape == (256,)
    assert abs(float(np.linalg.norm(v)) - 1.0) < 1e-5


def test_collision_freedom_over_taxonomy():
    # all 150 class names plus the empty string map to pairwise distinct vectors
    tax = default_taxonomy()
    enc = HashTextEncoder(dim=1024, seed=0)
    vecs = [enc.encode(tax.class_name(i)) for i in range(150)] + [enc.encode("")]
    stacked = np.stack(vecs)
    for i in range(len(vecs)):
        same = np.all(stacked == stacked[i], axis=1)
        assert same.sum() == 1, f"collision involving row {i}"


def test_different_seeds_differ():
    a = HashTextEncoder(dim=128, seed=0).encode("wall")
    b = HashTextEncoder(dim=128, seed=1).encode("wall")
    assert not np.array_equal(a, b)


def test_table_rows_match_direct_encoding():
    tax = default_taxonomy()
    enc = HashTextEncoder(dim=128, seed=0)
    table = build_embedding_table(tax, enc)
    assert table.rows.shape == (151, 128)
    assert np.array_equal(table.rows[34], enc.encode("rock, stone"))
    assert np.array_equal(table.rows[UNLABELED_ROW], enc.encode(""))
    for i in (0, 1, 7, 99, 149):
        assert np.array_equal(table.rows[i], enc.encode(tax.class_name(i)))


def test_table_lookup_routes_sentinel():
    table = build_embedding_table(default_taxonomy(), HashTextEncoder(dim=32, seed=0))
    assert np.array_equal(table.lookup(255), table.rows[UNLABELED_ROW])
    with pytest.raises(ValidationError):
        table.lookup(151)


def test_rebuild_bit_identical():
    tax = default_taxonomy()
    a = build_embedding_table(tax, HashTextEncoder(dim=64, seed=5))
    b = build_embedding_table(tax, HashTextEncoder(dim=64, seed=5))
    assert np.array_equal(a.rows, b.rows)
    assert a.header_hash() == b.header_hash()


def test_file_round_trip_bit_exact(tmp_path):
    table = build_embedding_table(default_taxonomy(), HashTextEncoder(dim=96, seed=2))
    path = tmp_path / "table.bin"
    save_embedding_table(table, path)
    loaded = load_embedding_table(path)
    assert loaded.backend_name == table.backend_name
    assert np.array_equal(loaded.rows, table.rows)
    # a second save reproduces the file byte-for-byte
    path2 = tmp_path / "table2.bin"
    save_embedding_table(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_header_hash_tracks_backend():
    tax = default_taxonomy()
    a = build_embedding_table(tax, HashTextEncoder(dim=64, seed=0))
    b = build_embedding_table(tax, HashTextEncoder(dim=64, seed=1))
    assert a.header_hash() != b.header_hash()


def test_corrupt_file_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(ValidationError, match="magic"):
        load_embedding_table(path)


def test_table_shape_validated():
    with pytest.raises(ValidationError):
        EmbeddingTable(rows=np.zeros((3, 8), dtype=np.float32), backend_name="x")
