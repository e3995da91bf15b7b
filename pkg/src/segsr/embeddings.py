"""Text-encoder contract and the precomputed per-class embedding table.

The production contract is CLIP-shaped (text -> fixed-length vector). The
shipped default is a deterministic hash-expansion stub so the whole pipeline
runs without model weights; a real encoder plugs in behind the same
interface. The table caches one row per taxonomy class plus a final row for
the unlabeled sentinel, and persists as a small binary file so training and
inference runs skip re-encoding.
"""

import hashlib
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import BackendError, ValidationError
from .taxonomy import NUM_CLASSES, LabelTaxonomy

TABLE_MAGIC = b"SCET"
TABLE_VERSION = 1
UNLABELED_ROW = NUM_CLASSES  # table row 150 holds encode("")


class TextEncoder(ABC):
    """Deterministic text -> float32 vector of fixed length ``dim``."""

    name: str = "base"
    dim: int = 1024

    @abstractmethod
    def encode(self, text: str) -> np.ndarray:
        """Encode UTF-8 text (empty allowed) to a length-``dim`` float32 vector."""


class HashTextEncoder(TextEncoder):
    """Stub encoder: seeded hash expansion to a unit-normalized vector.

    The empty string encodes to the all-zero vector (the "no label" signal);
    every other string gets a deterministic unit vector drawn from a PCG64
    stream keyed by SHA-256(seed, text).
    """

    def __init__(self, dim: int = 1024, seed: int = 0):
        if dim < 1:
            raise ValidationError(f"embedding dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.seed = int(seed)
        self.name = f"hash-{self.dim}-s{self.seed}"

    def encode(self, text: str) -> np.ndarray:
        if text == "":
            return np.zeros(self.dim, dtype=np.float32)
        digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dim)
        return (vec / np.linalg.norm(vec)).astype(np.float32)


@dataclass(frozen=True)
class EmbeddingTable:
    """(151, dim) float32 matrix: row i = encode(class_name(i)), row 150 = encode("")."""

    rows: np.ndarray
    backend_name: str

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] != NUM_CLASSES + 1:
            raise ValidationError(
                f"table must be ({NUM_CLASSES + 1}, dim), got shape {self.rows.shape}"
            )
        if self.rows.dtype != np.float32:
            raise ValidationError(f"table rows must be float32, got {self.rows.dtype}")
        frozen = np.ascontiguousarray(self.rows)
        frozen.setflags(write=False)
        object.__setattr__(self, "rows", frozen)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def row_index(self, class_index: int, unlabeled_index: int = 255) -> int:
        if class_index == unlabeled_index:
            return UNLABELED_ROW
        if 0 <= class_index < NUM_CLASSES:
            return class_index
        raise ValidationError(f"class index {class_index} not covered by the table")

    def lookup(self, class_index: int, unlabeled_index: int = 255) -> np.ndarray:
        return self.rows[self.row_index(class_index, unlabeled_index)]

    def header_bytes(self) -> bytes:
        name = self.backend_name.encode("utf-8")
        return TABLE_MAGIC + struct.pack(
            "<III", TABLE_VERSION, self.rows.shape[0], self.rows.shape[1]
        ) + struct.pack("<I", len(name)) + name

    def header_hash(self) -> str:
        """SHA-256 of the header; checkpoints store it to detect backend swaps."""
        return hashlib.sha256(self.header_bytes()).hexdigest()


def build_embedding_table(taxonomy: LabelTaxonomy, encoder: TextEncoder) -> EmbeddingTable:
    """Encode all 150 class names plus the empty unlabeled name."""
    rows = np.empty((NUM_CLASSES + 1, encoder.dim), dtype=np.float32)
    for i in range(NUM_CLASSES):
        vec = np.asarray(encoder.encode(taxonomy.class_name(i)), dtype=np.float32)
        if vec.shape != (encoder.dim,):
            raise BackendError(encoder.name, f"encode returned shape {vec.shape}, expected ({encoder.dim},)")
        rows[i] = vec
    rows[UNLABELED_ROW] = np.asarray(encoder.encode(""), dtype=np.float32)
    return EmbeddingTable(rows=rows, backend_name=encoder.name)


def save_embedding_table(table: EmbeddingTable, path) -> None:
    """Write header {magic, u32 version, u32 rows, u32 dim, name} + row-major f32 LE payload."""
    payload = np.ascontiguousarray(table.rows, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(table.header_bytes())
        fh.write(payload)


def load_embedding_table(path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != TABLE_MAGIC:
        raise ValidationError(f"{path}: bad magic {blob[:4]!r}, expected {TABLE_MAGIC!r}")
    version, n_rows, dim = struct.unpack_from("<III", blob, 4)
    if version != TABLE_VERSION:
        raise ValidationError(f"{path}: unsupported table version {version}")
    (name_len,) = struct.unpack_from("<I", blob, 16)
    name = blob[20 : 20 + name_len].decode("utf-8")
    payload = blob[20 + name_len :]
    expected = n_rows * dim * 4
    if len(payload) != expected:
        raise ValidationError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    rows = np.frombuffer(payload, dtype="<f4").reshape(n_rows, dim).astype(np.float32)
    return EmbeddingTable(rows=rows, backend_name=name)
